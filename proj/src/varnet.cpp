#include "ffr/varnet.hpp"

#include "ffr/fft.hpp"

namespace ffr::varnet {

using namespace ffr::ad;

Tensor expand(Tensor x, Tensor sens) {
  if (x.shape().at(0) != 1)
    throw std::invalid_argument("expand: image must be coil-free (1, 2, sp...), got " +
                                shape_str(x.shape()));
  for (size_t a = 1; a < x.shape().size(); ++a)
    if (x.shape()[a] != sens.shape().at(a))
      throw std::invalid_argument("expand: extents mismatch " + shape_str(x.shape()) + " vs " +
                                  shape_str(sens.shape()));
  return cmul_pairs(sens, x);
}

Tensor reduce(Tensor coil_images, Tensor sens) {
  if (coil_images.shape() != sens.shape())
    throw std::invalid_argument("reduce: extents mismatch " + shape_str(coil_images.shape()) +
                                " vs " + shape_str(sens.shape()));
  return sum_axes(cmul_pairs(sens, coil_images, /*conj_a=*/true), {0});
}

Tensor cascade_update(Tensor k, Tensor k_measured, Tensor mask, Tensor eta, Tensor refinement) {
  Tensor resid = mul(sub(k, k_measured), mask);
  return add(sub(k, mul(resid, eta)), refinement);
}

Tensor estimate_sensitivities(Tape& t, const KSpaceVolume& k, const unet::UNet& net,
                              const blocks::RunOpt& opt) {
  KSpaceVolume acs = mask_center(k);
  ArrayC imgs = acs.data;
  std::vector<int> axes;
  for (int a = 1; a < static_cast<int>(imgs.rank()); ++a) axes.push_back(a);
  fft::transform_inplace(imgs.data(), imgs.shape(), axes, true);
  Tensor u = net.forward(t, t.constant(coil_batch_pairs(imgs)), opt);
  return dss_normalize(u);
}

VarNet::VarNet(ParamStore& store, std::string prefix, const VarNetSpec& spec, Rng& rng)
    : store_(&store), prefix_(std::move(prefix)), spec_(spec) {
  if (spec.cascades < 1) throw std::invalid_argument("varnet: need at least one cascade");
  unet::UNetSpec ss;
  ss.entry_channels = spec.sens_channels;
  ss.levels = spec.sens_levels;
  ss.in_channels = 2;
  ss.out_channels = 2;
  ss.rank = 2;
  ss.kind = spec.sens_kind;
  sens_net_ = unet::UNet(store, prefix_ + ".sens", ss, rng);
  for (int c = 0; c < spec.cascades; ++c) {
    unet::UNetSpec rs;
    rs.entry_channels = spec.channels;
    rs.levels = spec.levels;
    rs.in_channels = 2;
    rs.out_channels = 2;
    rs.rank = 2;
    rs.kind = spec.kind;
    refiners_.emplace_back(store, prefix_ + ".cascade" + std::to_string(c), rs, rng);
    store.create(prefix_ + ".eta" + std::to_string(c), ArrayD({1}, 1.0));
  }
}

Tensor VarNet::refine(Tape& t, Tensor kspace, Tensor sens, int cascade,
                      const blocks::RunOpt& opt) const {
  Tensor img = ifft_pairs(kspace);
  Tensor combined = reduce(img, sens);
  Tensor refined = refiners_[cascade].forward(t, combined, opt);
  Tensor spread = expand(refined, sens);
  return fft_pairs(spread);
}

Tensor VarNet::forward(Tape& t, const KSpaceVolume& k, const blocks::RunOpt& opt) const {
  Tensor sens = estimate_sensitivities(t, k, sens_net_, opt);
  Tensor measured = t.constant(coil_batch_pairs(k.data));
  // mask broadcast shape: (1, 1, ones..., phase extents)
  Shape ms(k.data.rank() + 1, 1);
  for (int a = 0; a < k.mask.rank(); ++a)
    ms[ms.size() - k.mask.rank() + a] = k.mask.extent(a);
  Tensor mask = t.constant(k.mask.reshaped(ms));
  Tensor cur = measured;
  for (int c = 0; c < spec_.cascades; ++c) {
    Tensor g = refine(t, cur, sens, c, opt);
    Tensor eta = t.param(*store_, prefix_ + ".eta" + std::to_string(c));
    cur = cascade_update(cur, measured, mask, eta, g);
  }
  Tensor img = ifft_pairs(cur);
  return rss_pairs(img);
}

ArrayD VarNet::reconstruct(const KSpaceVolume& k) const {
  Tape t;
  ArrayD out = t.value(forward(t, k));
  Shape sp(out.shape().begin() + 2, out.shape().end());
  return out.reshaped(sp);
}

TrainLog train_varnet(VarNet& net, ParamStore& store, const std::vector<TrainPair>& data,
                      OptimConfig& optim, int steps, const blocks::RunOpt& opt) {
  if (data.empty()) throw std::invalid_argument("train_varnet: empty dataset");
  TrainLog log;
  for (int s = 0; s < steps; ++s) {
    const TrainPair& item = data[static_cast<size_t>(s) % data.size()];
    double range = max_abs(item.ground_truth);
    Tape t;
    Tensor pred = net.forward(t, item.measured, opt);
    Shape gshape = pred.shape();
    Tensor loss = metrics::ssim_loss(t, pred, item.ground_truth.reshaped(gshape), range);
    log.loss.push_back(t.value(loss)[0]);
    t.backward(loss);
    optimizer_step(store, optim);
  }
  return log;
}

}  // namespace ffr::varnet
