#include "ffr/kspace.hpp"

#include <cmath>

namespace ffr::kspace {

using namespace ffr::ad;

AcsBlock extract_acs(const KSpaceVolume& k) {
  if (k.spatial_rank() != 3 || k.phase_rank() != 2)
    throw std::invalid_argument("extract_acs: need a 3-d volume with a (P, S) mask, got data " +
                                shape_str(k.data.shape()));
  AcsBlock out;
  out.region = acs_region(k);
  const Index N = k.coils(), F = k.data.extent(1), P = k.data.extent(2), S = k.data.extent(3);
  const Index Pa = out.region.extent[0], Sa = out.region.extent[1];
  const Index ps = out.region.start[0], ss = out.region.start[1];
  out.data = ArrayC({N, F, Pa, Sa});
  for (Index n = 0; n < N; ++n)
    for (Index f = 0; f < F; ++f)
      for (Index p = 0; p < Pa; ++p)
        for (Index s = 0; s < Sa; ++s)
          out.data(n, f, p, s) = k.data(n, f, ps + p, ss + s);
  (void)P;
  return out;
}

std::vector<std::pair<Index, Index>> raki_offsets(Index R) {
  std::vector<std::pair<Index, Index>> offs;
  for (Index dp = 0; dp < R; ++dp)
    for (Index ds = 0; ds < R; ++ds)
      if (dp != 0 || ds != 0) offs.emplace_back(dp, ds);
  return offs;
}

namespace {

struct RakiGeom {
  Shape pad_lo_sum;  // anchor alignment per axis (F, P, S)
  Shape rf;          // receptive field extents
};

RakiGeom raki_geom(const RakiSpec& spec) {
  RakiGeom g;
  g.pad_lo_sum.assign(3, 0);
  g.rf.assign(3, 1);
  Shape dil = {1, spec.dilation, spec.dilation};
  for (const Shape* k : {&spec.k1, &spec.k2, &spec.k3}) {
    for (int a = 0; a < 3; ++a) {
      Index span = ((*k)[a] - 1) * dil[a];
      g.pad_lo_sum[a] += span / 2;
      g.rf[a] += span;
    }
  }
  return g;
}

// Zero-fills every position off the sampling lattice (global parity), keeping
// the pure equispaced pattern the model sees at inference time.
ArrayD lattice_pairs(const ArrayC& data, Index R, Index p0, Index s0, double scale) {
  const Index N = data.extent(0), F = data.extent(1), P = data.extent(2), S = data.extent(3);
  ArrayD x({1, 2 * N, F, P, S});
  for (Index n = 0; n < N; ++n)
    for (Index f = 0; f < F; ++f)
      for (Index p = 0; p < P; ++p) {
        if ((p0 + p) % R != 0) continue;
        for (Index s = 0; s < S; ++s) {
          if ((s0 + s) % R != 0) continue;
          cdouble v = data(n, f, p, s);
          x[((n)*F * P * S) + (f * P + p) * S + s] = v.real() * scale;
          x[((N + n) * F * P * S) + (f * P + p) * S + s] = v.imag() * scale;
        }
      }
  return x;
}

Tensor raki_stack(Tape& t, ParamStore& ps, const RakiSpec& spec, Tensor x, bool same_pad) {
  Shape dil = {1, spec.dilation, spec.dilation};
  auto opts = [&](const Shape& k) {
    if (same_pad) return same_conv(k, dil);
    ConvOpt o;
    o.dilation = dil;
    return o;
  };
  Tensor h = relu(conv_nd(x, t.param(ps, "w1"), std::nullopt, opts(spec.k1)));
  h = relu(conv_nd(h, t.param(ps, "w2"), std::nullopt, opts(spec.k2)));
  return conv_nd(h, t.param(ps, "w3"), std::nullopt, opts(spec.k3));
}

// Targets and weights over the valid-conv output grid of the ACS slab.
void raki_targets(const KSpaceVolume& k, Index coil, const RakiSpec& spec, const AcsBlock& acs,
                  double scale, ArrayD* target, ArrayD* weight) {
  const RakiGeom g = raki_geom(spec);
  const auto offs = raki_offsets(spec.dilation);
  const Index n_off = static_cast<Index>(offs.size());
  const Index F = acs.data.extent(1), Pa = acs.data.extent(2), Sa = acs.data.extent(3);
  const Index Fo = F - g.rf[0] + 1, Po = Pa - g.rf[1] + 1, So = Sa - g.rf[2] + 1;
  if (Fo <= 0 || Po <= 0 || So <= 0)
    throw std::invalid_argument(
        "raki: ACS region " + shape_str({F, Pa, Sa}) + " smaller than the receptive field " +
        shape_str(g.rf) + "; need at least " + shape_str(g.rf) + " fully sampled center lines");
  const Index ps = acs.region.start[0], ss = acs.region.start[1];
  *target = ArrayD({1, 2 * n_off, Fo, Po, So});
  *weight = ArrayD(target->shape());
  const Index grid = Fo * Po * So;
  for (Index f = 0; f < Fo; ++f)
    for (Index p = 0; p < Po; ++p)
      for (Index s = 0; s < So; ++s) {
        const Index gp = ps + p + g.pad_lo_sum[1];  // anchor, global coords
        const Index gs = ss + s + g.pad_lo_sum[2];
        if (gp % spec.dilation != 0 || gs % spec.dilation != 0) continue;
        const Index gf = f + g.pad_lo_sum[0];
        for (Index j = 0; j < n_off; ++j) {
          const Index tp = gp + offs[j].first, ts = gs + offs[j].second;
          if (tp >= ps + acs.region.extent[0] || ts >= ss + acs.region.extent[1]) continue;
          cdouble v = k.data(coil, gf, tp, ts);
          Index at = (f * Po + p) * So + s;
          (*target)[j * grid + at] = v.real() * scale;
          (*target)[(n_off + j) * grid + at] = v.imag() * scale;
          (*weight)[j * grid + at] = 1.0;
          (*weight)[(n_off + j) * grid + at] = 1.0;
        }
      }
}

Tensor raki_loss(Tape& t, ParamStore& ps, const RakiSpec& spec, const ArrayD& input,
                 const ArrayD& target, const ArrayD& weight, double wsum) {
  Tensor pred = raki_stack(t, ps, spec, t.constant(input), /*same_pad=*/false);
  Tensor diff = sub(pred, t.constant(target));
  Tensor masked = mul(square(diff), t.constant(weight));
  return scale(sum_all(masked), 1.0 / wsum);
}

}  // namespace

RakiModel raki_train(const KSpaceVolume& k, Index coil, const RakiSpec& spec,
                     std::uint64_t seed) {
  if (coil < 0 || coil >= k.coils())
    throw std::invalid_argument("raki: coil " + std::to_string(coil) + " out of range");
  AcsBlock acs = extract_acs(k);
  RakiModel m;
  m.spec = spec;
  m.coil = coil;
  double mx = max_abs(k.data);
  m.scale = mx > 0 ? 1.0 / mx : 1.0;

  const Index N = k.coils();
  Rng rng(seed ^ (0x5851f42d4c957f2dull + static_cast<std::uint64_t>(coil)));
  const auto offs = raki_offsets(spec.dilation);
  const Index n_out = 2 * static_cast<Index>(offs.size());
  Shape w1 = {spec.n1, 2 * N, spec.k1[0], spec.k1[1], spec.k1[2]};
  Shape w2 = {spec.n2, spec.n1, spec.k2[0], spec.k2[1], spec.k2[2]};
  Shape w3 = {n_out, spec.n2, spec.k3[0], spec.k3[1], spec.k3[2]};
  m.params.create("w1", init_conv_weight(w1, 2 * N * numel(spec.k1), rng));
  m.params.create("w2", init_conv_weight(w2, spec.n1 * numel(spec.k2), rng));
  m.params.create("w3", init_conv_weight(w3, spec.n2 * numel(spec.k3), rng));

  // training input: the ACS slab re-undersampled on the global lattice
  ArrayD input = lattice_pairs(acs.data, spec.dilation, acs.region.start[0], acs.region.start[1],
                               m.scale);
  ArrayD target, weight;
  raki_targets(k, coil, spec, acs, m.scale, &target, &weight);
  double wsum = 0;
  for (Index i = 0; i < weight.size(); ++i) wsum += weight[i];
  if (wsum == 0) throw std::invalid_argument("raki: no supervised ACS positions");

  OptimConfig optim;
  optim.rule = OptimRule::SgdMomentum;
  optim.lr = spec.lr;
  optim.momentum = spec.momentum;
  for (int e = 0; e < spec.epochs; ++e) {
    Tape t;
    Tensor loss = raki_loss(t, m.params, spec, input, target, weight, wsum);
    m.loss_trace.push_back(t.value(loss)[0]);
    t.backward(loss);
    optimizer_step(m.params, optim);
    optim.lr *= spec.lr_decay;
  }
  return m;
}

double raki_acs_mse(const KSpaceVolume& k, const RakiModel& model) {
  AcsBlock acs = extract_acs(k);
  ArrayD input = lattice_pairs(acs.data, model.spec.dilation, acs.region.start[0],
                               acs.region.start[1], model.scale);
  ArrayD target, weight;
  raki_targets(k, model.coil, model.spec, acs, model.scale, &target, &weight);
  double wsum = 0;
  for (Index i = 0; i < weight.size(); ++i) wsum += weight[i];
  Tape t;
  ParamStore& ps = const_cast<ParamStore&>(model.params);
  Tensor loss = raki_loss(t, ps, model.spec, input, target, weight, wsum);
  // loss is on scale-normalized values; report in raw units
  return t.value(loss)[0] / (model.scale * model.scale);
}

ArrayC raki_infer(const KSpaceVolume& k, const std::vector<RakiModel>& models) {
  const Index N = k.coils();
  if (static_cast<Index>(models.size()) != N)
    throw std::invalid_argument("raki_infer: " + std::to_string(models.size()) + " models for " +
                                std::to_string(N) + " coils");
  const Index F = k.data.extent(1), P = k.data.extent(2), S = k.data.extent(3);
  ArrayC out = k.data;  // measured samples stay bitwise identical
  for (Index n = 0; n < N; ++n) {
    const RakiModel& m = models[n];
    const Index R = m.spec.dilation;
    ArrayD input = lattice_pairs(k.data, R, 0, 0, m.scale);
    Tape t;
    ParamStore& ps = const_cast<ParamStore&>(m.params);
    Tensor pred = raki_stack(t, ps, m.spec, t.constant(input), /*same_pad=*/true);
    const ArrayD& pv = t.value(pred);
    const auto offs = raki_offsets(R);
    const Index n_off = static_cast<Index>(offs.size());
    const Index grid = F * P * S;
    const double unscale = 1.0 / m.scale;
    for (Index f = 0; f < F; ++f)
      for (Index p = 0; p < P; p += R)
        for (Index s = 0; s < S; s += R)
          for (Index j = 0; j < n_off; ++j) {
            const Index tp = p + offs[j].first, ts = s + offs[j].second;
            if (tp >= P || ts >= S) continue;
            if (k.mask(tp, ts) != 0.0) continue;  // hard data consistency
            Index at = (f * P + p) * S + s;
            out(n, f, tp, ts) = cdouble(pv[j * grid + at], pv[(n_off + j) * grid + at]) * unscale;
          }
  }
  return out;
}

Tensor cross_domain_pool(Tensor x) {
  const int r = static_cast<int>(x.shape().size()) - 2;
  Shape win(r, 2);
  return fft_pairs(avg_pool(ifft_pairs(x), win));
}

Tensor cross_domain_upsample(Tensor x) {
  const int r = static_cast<int>(x.shape().size()) - 2;
  Shape factor(r, 2);
  return fft_pairs(upsample_nn(ifft_pairs(x), factor));
}

Tensor soft_dc(Tensor pred, Tensor measured, Tensor mask, Tensor gamma) {
  Tensor resid = mul(sub(pred, measured), mask);
  return sub(pred, mul(resid, gamma));
}

KNet::KNet(ParamStore& store, std::string prefix, const KNetSpec& spec, Rng& rng)
    : store_(&store), prefix_(std::move(prefix)), spec_(spec) {
  const Index c = spec.entry_channels;
  const Index in = 2 * spec.coils;
  enc_.emplace_back(store, prefix_ + ".enc0", in, c, 3, rng);
  for (int i = 1; i <= spec.levels; ++i)
    enc_.emplace_back(store, prefix_ + ".enc" + std::to_string(i), c << (i - 1), c << i, 3, rng);
  for (int i = spec.levels; i >= 1; --i) {
    // parameter-free upsampling: decoder sees 2^i c + 2^{i-1} c channels
    Index hi = c << i, lo = c << (i - 1);
    dec_.emplace_back(store, prefix_ + ".dec" + std::to_string(i), hi + lo, lo, 3, rng);
  }
  Shape fw = {in, c, 1, 1, 1};
  store.create(prefix_ + ".final.w", init_conv_weight(fw, c, rng));
  store.create(prefix_ + ".final.b", init_conv_weight({in}, c, rng));
}

Tensor KNet::forward(Tape& t, Tensor k, const blocks::RunOpt& opt) const {
  const Shape& xs = k.shape();
  const Index div = Index(1) << spec_.levels;
  for (size_t a = 2; a < xs.size(); ++a)
    if (xs[a] % div != 0)
      throw std::invalid_argument("knet: extent " + std::to_string(xs[a]) +
                                  " not divisible by 2^levels = " + std::to_string(div));
  std::vector<Tensor> skips;
  Tensor cur = enc_[0].forward(t, k, opt);
  skips.push_back(cur);
  for (int i = 1; i <= spec_.levels; ++i) {
    cur = enc_[i].forward(t, cross_domain_pool(cur), opt);
    skips.push_back(cur);
  }
  for (int d = 0; d < spec_.levels; ++d) {
    int i = spec_.levels - d;
    Tensor up = cross_domain_upsample(cur);
    cur = dec_[d].forward(t, concat(up, skips[i - 1], 1), opt);
  }
  return conv_nd(cur, t.param(*store_, prefix_ + ".final.w"),
                 t.param(*store_, prefix_ + ".final.b"), {});
}

Tensor group_reconstruct(Tape& t, const KNet& net, Tensor k_filled, Tensor measured, Tensor mask,
                         Tensor gamma, const blocks::RunOpt& opt) {
  Tensor khat = add(net.forward(t, k_filled, opt), k_filled);
  Tensor dc = soft_dc(khat, measured, mask, gamma);
  return ifft_pairs(dc);
}

ArrayC group_reconstruct_value(const KNet& net, const ArrayC& k_filled, const KSpaceVolume& k,
                               const blocks::RunOpt& opt) {
  Tape t;
  Tensor kf = t.constant(coil_channel_pairs(k_filled));
  Tensor meas = t.constant(coil_channel_pairs(k.data));
  Shape ms(k.data.rank() + 1, 1);
  for (int a = 0; a < k.mask.rank(); ++a) ms[ms.size() - k.mask.rank() + a] = k.mask.extent(a);
  Tensor mask = t.constant(k.mask.reshaped(ms));
  std::string gname = net.prefix() + ".gamma";
  Tensor gamma = net.store().has(gname) ? t.param(net.store(), gname)
                                        : t.constant(ArrayD({1}, 1.0));
  Tensor img = group_reconstruct(t, net, kf, meas, mask, gamma, opt);
  return complex_from_coil_channels(t.value(img));
}

Tensor rss_channel_pairs(Tensor x) { return sqrt_op(sum_axes(square(x), {1})); }

std::vector<double> knet_train(KNet& net, const std::vector<KnetTrainItem>& items,
                               const KnetSchedule& schedule, const blocks::RunOpt& opt) {
  if (items.empty()) throw std::invalid_argument("knet_train: empty dataset");
  ParamStore& store = net.store();
  std::string gname = net.prefix() + ".gamma";
  if (!store.has(gname)) store.create(gname, ArrayD({1}, 1.0));
  OptimConfig optim;
  optim.rule = OptimRule::AdaptiveMoments;
  std::vector<double> trace;
  for (int e = 0; e < schedule.epochs; ++e) {
    optim.lr = e >= schedule.switch_epoch ? schedule.lr_late : schedule.lr;
    double acc = 0;
    for (const KnetTrainItem& item : items) {
      Tape t;
      Tensor kf = t.constant(coil_channel_pairs(item.k_filled));
      Tensor meas = t.constant(coil_channel_pairs(item.measured.data));
      Shape ms(item.measured.data.rank() + 1, 1);
      for (int a = 0; a < item.measured.mask.rank(); ++a)
        ms[ms.size() - item.measured.mask.rank() + a] = item.measured.mask.extent(a);
      Tensor mask = t.constant(item.measured.mask.reshaped(ms));
      Tensor img = group_reconstruct(t, net, kf, meas, mask, t.param(store, gname), opt);
      Tensor mag = rss_channel_pairs(img);
      const Shape& gs = item.ground_truth.shape();  // (F, P, S)
      Tensor slices = reshape(mag, {gs[0], 1, gs[1], gs[2]});
      double range = max_abs(item.ground_truth);
      Tensor loss = metrics::ssim_loss(t, slices, item.ground_truth.reshaped({gs[0], 1, gs[1], gs[2]}),
                                       range);
      if (!std::isfinite(t.value(loss)[0]))
        throw std::runtime_error("knet_train: loss became non-finite at epoch " +
                                 std::to_string(e));
      acc += t.value(loss)[0];
      t.backward(loss);
      optimizer_step(store, optim);
    }
    trace.push_back(acc / static_cast<double>(items.size()));
  }
  return trace;
}

}  // namespace ffr::kspace
