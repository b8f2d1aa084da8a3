#pragma once

#include "ffr/kdata.hpp"
#include "ffr/metrics.hpp"
#include "ffr/unet.hpp"

namespace ffr::varnet {

using ad::Tape;
using ad::Tensor;

/// x_i = S_i * x (elementwise complex). x: (1, 2, sp...), S: (N, 2, sp...).
Tensor expand(Tensor x, Tensor sens);

/// sum_i conj(S_i) * x_i -> (1, 2, sp...).
Tensor reduce(Tensor coil_images, Tensor sens);

/// K - eta * M (K - K_measured) + G; all operands in coil-batched pair layout.
Tensor cascade_update(Tensor k, Tensor k_measured, Tensor mask, Tensor eta, Tensor refinement);

/// S = dSS(net(IFFT(mask_center(K)))), coils stacked along the batch axis
/// through one shared network.
Tensor estimate_sensitivities(Tape& t, const KSpaceVolume& k, const unet::UNet& net,
                              const blocks::RunOpt& opt = {});

struct VarNetSpec {
  int cascades = 4;  // T
  unet::BlockKind kind = unet::BlockKind::FasterFc;       // refinement networks
  unet::BlockKind sens_kind = unet::BlockKind::FasterFc;  // sensitivity network
  Index channels = 8;
  int levels = 2;
  Index sens_channels = 8;
  int sens_levels = 2;
};

/// Unrolled multi-coil cascade: per-cascade k-space consistency step plus a
/// refinement module G = F . expand . net . reduce . F^-1, ending in the RSS
/// magnitude of the inverse transform.
class VarNet {
 public:
  VarNet() = default;
  VarNet(ParamStore& store, std::string prefix, const VarNetSpec& spec, Rng& rng);

  /// Magnitude image tensor (1, 1, sp...).
  Tensor forward(Tape& t, const KSpaceVolume& k, const blocks::RunOpt& opt = {}) const;
  ArrayD reconstruct(const KSpaceVolume& k) const;

  Tensor refine(Tape& t, Tensor kspace, Tensor sens, int cascade,
                const blocks::RunOpt& opt = {}) const;

  const VarNetSpec& spec() const { return spec_; }
  const unet::UNet& sens_net() const { return sens_net_; }
  Index param_count() const { return store_->num_params(prefix_ + "."); }

 private:
  ParamStore* store_ = nullptr;
  std::string prefix_;
  VarNetSpec spec_;
  unet::UNet sens_net_;
  std::vector<unet::UNet> refiners_;
};

struct TrainPair {
  KSpaceVolume measured;
  ArrayD ground_truth;  // RSS magnitude, image extents
};

struct TrainLog {
  std::vector<double> loss;
};

/// SSIM-loss training of the full cascade against the RSS ground truth,
/// cycling through the pairs one item per step.
TrainLog train_varnet(VarNet& net, ParamStore& store, const std::vector<TrainPair>& data,
                      OptimConfig& optim, int steps, const blocks::RunOpt& opt = {});

}  // namespace ffr::varnet
