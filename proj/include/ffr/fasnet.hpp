#pragma once

#include "ffr/kdata.hpp"
#include "ffr/metrics.hpp"
#include "ffr/unet.hpp"

namespace ffr::fasnet {

using ad::Tape;
using ad::Tensor;

/// An L-slice window of a 3-d multi-coil volume along F.
struct SliceBlock {
  enum class Role { First, Interior, Last };
  ArrayC data;  // (N, L, P, S)
  Index start = 0;
  Role role = Role::Interior;
};

/// Overlapping split: block b starts at b*L/2, count = 2F/L - 1. Requires
/// even L, L divisible by 4, F >= L and F divisible by L/2.
std::vector<SliceBlock> split_slices(const ArrayC& volume, Index L);

/// Merge rules: the first block contributes slices [0, 3L/4), the last the
/// final 3L/4, an interior block starting at s contributes [s+L/4, s+3L/4).
/// Together these cover every slice exactly once.
ArrayC merge_slices(const std::vector<SliceBlock>& blocks, Index F);

struct FasNetSpec {
  Index block_slices = 16;  // L
  int cascades = 2;         // T
  Index sens_channels = 8;
  int sens_levels = 2;
  Index refine_channels = 18;
  int refine_levels = 4;
};

/// Split-slice image-domain stage: per-block shared 3-d sensitivity
/// estimation, coil fusion, and T residual FasterFC-U-Net refinements.
class FasNet {
 public:
  FasNet() = default;
  FasNet(ParamStore& store, std::string prefix, const FasNetSpec& spec, Rng& rng);

  /// dSS-normalized block-local maps from coil-batched pairs (N, 2, L, P, S).
  Tensor estimate_sensitivities_3d(Tape& t, Tensor block_pairs,
                                   const blocks::RunOpt& opt = {}) const;

  /// x_b = sum_i conj(S_b,i) x_b,i -> (1, 2, L, P, S).
  static Tensor fuse_coils(Tensor block_pairs, Tensor sens);

  /// x <- net_t(x) + x for t = 1..T.
  Tensor cascade_refine(Tape& t, Tensor fused, const blocks::RunOpt& opt = {}) const;

  /// Full block path: sensitivities, fusion, cascades. (N, L, P, S) complex
  /// in, (1, 2, L, P, S) tensor out.
  Tensor forward_block(Tape& t, const ArrayC& block, const blocks::RunOpt& opt = {}) const;

  /// Split -> per-block forward -> merge -> complex magnitude (F, P, S).
  ArrayD reconstruct(const ArrayC& coil_volume, const blocks::RunOpt& opt = {}) const;

  const FasNetSpec& spec() const { return spec_; }
  ParamStore& store() const { return *store_; }
  const std::string& prefix() const { return prefix_; }
  Index param_count() const { return store_->num_params(prefix_ + "."); }

 private:
  ParamStore* store_ = nullptr;
  std::string prefix_;
  FasNetSpec spec_;
  unet::UNet sens_net_;
  std::vector<unet::UNet> refiners_;
};

struct FasnetTrainItem {
  ArrayC input_volume;  // k-space stage output, (N, F, P, S) coil images
  ArrayD ground_truth;  // RSS magnitude (F, P, S)
};

struct FasnetSchedule {
  double lr = 1e-3;
  double lr_late = 1e-4;
  int switch_epoch = 160;
  int epochs = 260;
};

/// SSIM-loss training over all split-slice blocks of all items (an epoch
/// visits every block once; every slice of a block is supervised).
std::vector<double> fasnet_train(FasNet& net, const std::vector<FasnetTrainItem>& items,
                                 const FasnetSchedule& schedule, const blocks::RunOpt& opt = {});

}  // namespace ffr::fasnet
