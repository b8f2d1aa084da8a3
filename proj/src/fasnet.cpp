#include "ffr/fasnet.hpp"

#include "ffr/varnet.hpp"

namespace ffr::fasnet {

using namespace ffr::ad;

std::vector<SliceBlock> split_slices(const ArrayC& volume, Index L) {
  if (volume.rank() != 4)
    throw std::invalid_argument("split: need (N, F, P, S), got " + shape_str(volume.shape()));
  const Index N = volume.extent(0), F = volume.extent(1);
  const Index PS = volume.extent(2) * volume.extent(3);
  if (L < 4 || L % 4 != 0)
    throw std::invalid_argument("split: L must be a positive multiple of 4, got " +
                                std::to_string(L));
  if (F < L || F % (L / 2) != 0)
    throw std::invalid_argument("split: F = " + std::to_string(F) +
                                " must be >= L and divisible by L/2 = " + std::to_string(L / 2) +
                                "; pad to " + std::to_string((F + L / 2 - 1) / (L / 2) * (L / 2)));
  const Index count = 2 * F / L - 1;
  std::vector<SliceBlock> out;
  for (Index b = 0; b < count; ++b) {
    SliceBlock blk;
    blk.start = b * (L / 2);
    blk.role = b == 0             ? SliceBlock::Role::First
               : b == count - 1   ? SliceBlock::Role::Last
                                  : SliceBlock::Role::Interior;
    blk.data = ArrayC({N, L, volume.extent(2), volume.extent(3)});
    for (Index n = 0; n < N; ++n)
      for (Index f = 0; f < L; ++f)
        std::copy(volume.data() + (n * F + blk.start + f) * PS,
                  volume.data() + (n * F + blk.start + f + 1) * PS,
                  blk.data.data() + (n * L + f) * PS);
    out.push_back(std::move(blk));
  }
  return out;
}

ArrayC merge_slices(const std::vector<SliceBlock>& blocks, Index F) {
  if (blocks.empty()) throw std::invalid_argument("merge: no blocks");
  const Index N = blocks[0].data.extent(0);
  const Index L = blocks[0].data.extent(1);
  const Index P = blocks[0].data.extent(2), S = blocks[0].data.extent(3);
  const Index PS = P * S;
  ArrayC out({N, F, P, S});
  std::vector<int> covered(static_cast<size_t>(F), 0);
  for (const SliceBlock& b : blocks) {
    Index lo, hi;  // block-local slice range contributed
    switch (b.role) {
      case SliceBlock::Role::First:
        lo = 0;
        hi = blocks.size() == 1 ? L : 3 * L / 4;
        break;
      case SliceBlock::Role::Last:
        lo = L / 4;
        hi = L;
        break;
      default:
        lo = L / 4;
        hi = 3 * L / 4;
    }
    for (Index f = lo; f < hi; ++f) {
      Index g = b.start + f;
      if (g < 0 || g >= F) throw std::invalid_argument("merge: block range exceeds volume");
      covered[static_cast<size_t>(g)] += 1;
      for (Index n = 0; n < N; ++n)
        std::copy(b.data.data() + (n * L + f) * PS, b.data.data() + (n * L + f + 1) * PS,
                  out.data() + (n * F + g) * PS);
    }
  }
  for (Index f = 0; f < F; ++f)
    if (covered[static_cast<size_t>(f)] != 1)
      throw std::invalid_argument("merge: slice " + std::to_string(f) + " covered " +
                                  std::to_string(covered[static_cast<size_t>(f)]) +
                                  " times (blocks are not a complete split)");
  return out;
}

FasNet::FasNet(ParamStore& store, std::string prefix, const FasNetSpec& spec, Rng& rng)
    : store_(&store), prefix_(std::move(prefix)), spec_(spec) {
  unet::UNetSpec ss;
  ss.entry_channels = spec.sens_channels;
  ss.levels = spec.sens_levels;
  ss.in_channels = 2;
  ss.out_channels = 2;
  ss.rank = 3;
  ss.kind = unet::BlockKind::FasterFc;
  sens_net_ = unet::UNet(store, prefix_ + ".sens", ss, rng);
  for (int c = 0; c < spec.cascades; ++c) {
    unet::UNetSpec rs;
    rs.entry_channels = spec.refine_channels;
    rs.levels = spec.refine_levels;
    rs.in_channels = 2;
    rs.out_channels = 2;
    rs.rank = 3;
    rs.kind = unet::BlockKind::FasterFc;
    refiners_.emplace_back(store, prefix_ + ".refine" + std::to_string(c), rs, rng);
  }
}

Tensor FasNet::estimate_sensitivities_3d(Tape& t, Tensor block_pairs,
                                         const blocks::RunOpt& opt) const {
  Tensor u = sens_net_.forward(t, block_pairs, opt);
  return dss_normalize(u);
}

Tensor FasNet::fuse_coils(Tensor block_pairs, Tensor sens) {
  return varnet::reduce(block_pairs, sens);
}

Tensor FasNet::cascade_refine(Tape& t, Tensor fused, const blocks::RunOpt& opt) const {
  Tensor x = fused;
  for (const auto& net : refiners_) x = add(net.forward(t, x, opt), x);
  return x;
}

Tensor FasNet::forward_block(Tape& t, const ArrayC& block, const blocks::RunOpt& opt) const {
  Tensor pairs = t.constant(coil_batch_pairs(block));
  Tensor sens = estimate_sensitivities_3d(t, pairs, opt);
  Tensor fused = fuse_coils(pairs, sens);
  return cascade_refine(t, fused, opt);
}

ArrayD FasNet::reconstruct(const ArrayC& coil_volume, const blocks::RunOpt& opt) const {
  const Index F = coil_volume.extent(1);
  std::vector<SliceBlock> blocks = split_slices(coil_volume, spec_.block_slices);
  for (SliceBlock& b : blocks) {
    Tape t;
    Tensor refined = forward_block(t, b.data, opt);
    // refined (1, 2, L, P, S) -> single-channel complex block
    b.data = complex_from_coil_batch(
        t.value(refined).reshaped({1, 2, b.data.extent(1) * b.data.extent(2) * b.data.extent(3)}))
                 .reshaped({1, b.data.extent(1), b.data.extent(2), b.data.extent(3)});
  }
  ArrayC merged = merge_slices(blocks, F);
  Shape out_shape(merged.shape().begin() + 1, merged.shape().end());
  ArrayD mag(out_shape);
  for (Index i = 0; i < mag.size(); ++i) mag[i] = std::abs(merged[i]);
  return mag;
}

std::vector<double> fasnet_train(FasNet& net, const std::vector<FasnetTrainItem>& items,
                                 const FasnetSchedule& schedule, const blocks::RunOpt& opt) {
  if (items.empty()) throw std::invalid_argument("fasnet_train: empty dataset");
  ParamStore& store = net.store();
  const Index L = net.spec().block_slices;
  struct BlockItem {
    ArrayC block;
    ArrayD gt;  // (L, P, S)
    double range;
  };
  std::vector<BlockItem> blocks;
  for (const FasnetTrainItem& item : items) {
    double range = max_abs(item.ground_truth);
    std::vector<SliceBlock> split = split_slices(item.input_volume, L);
    const Index P = item.ground_truth.extent(1), S = item.ground_truth.extent(2);
    for (const SliceBlock& b : split) {
      BlockItem bi;
      bi.block = b.data;
      bi.gt = ArrayD({L, P, S});
      std::copy(item.ground_truth.data() + b.start * P * S,
                item.ground_truth.data() + (b.start + L) * P * S, bi.gt.data());
      bi.range = range;
      blocks.push_back(std::move(bi));
    }
  }
  OptimConfig optim;
  optim.rule = OptimRule::AdaptiveMoments;
  std::vector<double> trace;
  for (int e = 0; e < schedule.epochs; ++e) {
    optim.lr = e >= schedule.switch_epoch ? schedule.lr_late : schedule.lr;
    double acc = 0;
    for (const BlockItem& bi : blocks) {
      Tape t;
      Tensor refined = net.forward_block(t, bi.block, opt);
      Tensor mag = abs_pairs(refined);  // (1, 1, L, P, S)
      const Shape& gs = bi.gt.shape();
      Tensor slices = reshape(mag, {gs[0], 1, gs[1], gs[2]});
      Tensor loss = metrics::ssim_loss(t, slices, bi.gt.reshaped({gs[0], 1, gs[1], gs[2]}),
                                       bi.range);
      if (!std::isfinite(t.value(loss)[0]))
        throw std::runtime_error("fasnet_train: loss became non-finite at epoch " +
                                 std::to_string(e));
      acc += t.value(loss)[0];
      t.backward(loss);
      optimizer_step(store, optim);
    }
    trace.push_back(acc / static_cast<double>(blocks.size()));
  }
  return trace;
}

}  // namespace ffr::fasnet
