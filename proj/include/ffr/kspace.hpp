#pragma once

#include "ffr/kdata.hpp"
#include "ffr/metrics.hpp"
#include "ffr/unet.hpp"

namespace ffr::kspace {

using ad::Tape;
using ad::Tensor;

/// ACS region of a 3-d volume: full frequency axis, centered phase rectangle.
struct AcsBlock {
  AcsRegion region;  // phase axes
  ArrayC data;       // (N, F, Pa, Sa)
};
AcsBlock extract_acs(const KSpaceVolume& k);

/// Scan-specific 3-layer interpolation net for one coil. Kernel sizes in
/// (F, P, S) order; dilation R along the two phase axes; ReLU on the first
/// two layers, linear third; no biases. The output channels hold the R*R-1
/// sub-lattice offsets (real/imag halves), scattered from lattice anchors.
struct RakiSpec {
  Shape k1 = {5, 2, 2};
  Shape k2 = {1, 1, 1};
  Shape k3 = {3, 2, 2};
  Index n1 = 32;
  Index n2 = 8;
  Index dilation = 2;  // R
  double lr = 0.003;
  double lr_decay = 1.0;  // multiplicative, per epoch
  double momentum = 0.9;
  int epochs = 1000;
};

struct RakiModel {
  RakiSpec spec;
  Index coil = 0;
  double scale = 1.0;  // input normalization, folded out of predictions
  ParamStore params;   // w1, w2, w3
  std::vector<double> loss_trace;  // ACS MSE per epoch
};

/// Sub-lattice offsets (dp, ds) predicted by the model, (0,0) excluded.
std::vector<std::pair<Index, Index>> raki_offsets(Index R);

/// Fits g_i on the re-undersampled ACS of this volume (momentum descent,
/// squared error against the measured ACS values).
RakiModel raki_train(const KSpaceVolume& k, Index coil, const RakiSpec& spec,
                     std::uint64_t seed);

/// Final ACS mean squared error of a trained model.
double raki_acs_mse(const KSpaceVolume& k, const RakiModel& model);

/// Full-grid prediction for every coil followed by exact restoration of the
/// measured samples. models.size() must equal the coil count.
ArrayC raki_infer(const KSpaceVolume& k, const std::vector<RakiModel>& models);

/// IFFT over the spatial axes -> pool/upsample -> FFT back, on channel-paired
/// features. Linear, and parameter-free.
Tensor cross_domain_pool(Tensor x);
Tensor cross_domain_upsample(Tensor x);

/// j not in the sampled set: prediction; j sampled: pred - gamma (pred - measured).
Tensor soft_dc(Tensor pred, Tensor measured, Tensor mask, Tensor gamma);

struct KNetSpec {
  Index coils = 2;  // in/out channels = 2 * coils
  Index entry_channels = 16;
  int levels = 3;
  double slope = 0.2;
};

/// 3-d U-Net over k-space features whose pooling and upsampling run through
/// the image domain (cross-domain operators); upsampling carries no
/// parameters, so decoder blocks consume skip + upsampled channels directly.
class KNet {
 public:
  KNet() = default;
  KNet(ParamStore& store, std::string prefix, const KNetSpec& spec, Rng& rng);

  /// (1, 2N, F, P, S) -> same shape; the network body without the outer
  /// residual.
  Tensor forward(Tape& t, Tensor k, const blocks::RunOpt& opt = {}) const;

  const KNetSpec& spec() const { return spec_; }
  const std::string& prefix() const { return prefix_; }
  ParamStore& store() const { return *store_; }
  Index param_count() const { return store_->num_params(prefix_ + "."); }

 private:
  ParamStore* store_ = nullptr;
  std::string prefix_;
  KNetSpec spec_;
  std::vector<blocks::TwoConvBlock> enc_;
  std::vector<blocks::TwoConvBlock> dec_;
};

/// x = IFFT(SoftDC(KNet(K) + K)): multi-coil image-domain tensor
/// (1, 2N, F, P, S). `measured` and `mask` come from the original volume.
Tensor group_reconstruct(Tape& t, const KNet& net, Tensor k_filled, Tensor measured, Tensor mask,
                         Tensor gamma, const blocks::RunOpt& opt = {});

/// Value-level convenience: coil images (N, F, P, S) from a RAKI-filled
/// volume, via the trained K-Net.
ArrayC group_reconstruct_value(const KNet& net, const ArrayC& k_filled, const KSpaceVolume& k,
                               const blocks::RunOpt& opt = {});

/// RSS magnitude over coils of a channel-paired tensor (1, 2N, sp...)
/// -> (1, 1, sp...).
Tensor rss_channel_pairs(Tensor x);

struct KnetTrainItem {
  ArrayC k_filled;      // RAKI output (N, F, P, S)
  KSpaceVolume measured;
  ArrayD ground_truth;  // RSS magnitude (F, P, S)
};

struct KnetSchedule {
  double lr = 1e-3;
  double lr_late = 1e-4;
  int switch_epoch = 240;
  int epochs = 250;
};

/// SSIM-loss training (slices along F) with the two-stage learning rate.
/// gamma is created under <prefix>.gamma, initialized to 1.
std::vector<double> knet_train(KNet& net, const std::vector<KnetTrainItem>& items,
                               const KnetSchedule& schedule, const blocks::RunOpt& opt = {});

}  // namespace ffr::kspace
