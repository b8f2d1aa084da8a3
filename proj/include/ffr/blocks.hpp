#pragma once

#include <functional>
#include <string>

#include "ffr/ops.hpp"
#include "ffr/params.hpp"

namespace ffr::blocks {

using ad::Tape;
using ad::Tensor;

struct RunOpt {
  double slope = 0.2;        // LReLU negative slope
  bool bypass_norm = false;  // probe/test mode: instance norm as identity
};

/// The spectral convolution block: 1x1 -> 3x3 (+res) -> 1x1 -> cross-domain
/// 1x1 (+res) -> concat -> 1x1, each stage followed by InsNorm + LReLU.
/// Channel halves are treated as complex pairs in the cross-domain stage, so
/// out_channels must be even. Spatial extents are preserved.
class FasterFcBlock {
 public:
  FasterFcBlock() = default;
  FasterFcBlock(ParamStore& store, std::string prefix, Index in_ch, Index out_ch, int rank,
                Rng& rng);

  Tensor forward(Tape& t, Tensor f_input, const RunOpt& opt = {}) const;

  /// f4 = IFFT(act(norm(conv1x1(FFT(f3))))) + f3, the cross-domain stage on
  /// its own. The 1x1 conv, norm and activation act on the spectrum's
  /// real/imag planes restacked as channels.
  Tensor spectral_branch(Tape& t, Tensor f3, const RunOpt& opt = {}) const;

  Index in_channels() const { return in_ch_; }
  Index out_channels() const { return out_ch_; }
  const std::string& prefix() const { return prefix_; }

  /// Spectral conv = channel identity, zero biases (for stage-by-stage tests).
  void set_spectral_identity();

 private:
  ParamStore* store_ = nullptr;
  std::string prefix_;
  Index in_ch_ = 0, out_ch_ = 0;
  int rank_ = 2;
};

/// Fast Fourier convolution baseline: two FFC layers (one per replaced conv),
/// each with local/global channel halves, cross paths, and a Fourier unit on
/// the global half. Performs exactly two FFT+IFFT round-trips per forward.
class FfcBlock {
 public:
  FfcBlock() = default;
  FfcBlock(ParamStore& store, std::string prefix, Index in_ch, Index out_ch, int rank, Rng& rng);

  Tensor forward(Tape& t, Tensor x, const RunOpt& opt = {}) const;

  Index in_channels() const { return in_ch_; }
  Index out_channels() const { return out_ch_; }
  const std::string& prefix() const { return prefix_; }

 private:
  Tensor layer(Tape& t, Tensor x, int which, Index a, Index b, const RunOpt& opt) const;

  ParamStore* store_ = nullptr;
  std::string prefix_;
  Index in_ch_ = 0, out_ch_ = 0;
  int rank_ = 2;
};

/// Two consecutive 3x3 convolutions, each followed by InsNorm + LReLU.
class TwoConvBlock {
 public:
  TwoConvBlock() = default;
  TwoConvBlock(ParamStore& store, std::string prefix, Index in_ch, Index out_ch, int rank,
               Rng& rng);

  Tensor forward(Tape& t, Tensor x, const RunOpt& opt = {}) const;

  Index in_channels() const { return in_ch_; }
  Index out_channels() const { return out_ch_; }
  const std::string& prefix() const { return prefix_; }

 private:
  ParamStore* store_ = nullptr;
  std::string prefix_;
  Index in_ch_ = 0, out_ch_ = 0;
  int rank_ = 2;
};

/// Influence map over spatial positions: perturbs a single input voxel and
/// marks every output position whose value moves. Run the block with norms
/// bypassed (their global statistics would mask the operator's own reach) and
/// the usual nonlinear activation.
NdArray<std::uint8_t> receptive_field_probe(const std::function<ArrayD(const ArrayD&)>& forward,
                                            const Shape& input_shape, const Shape& at, Rng& rng,
                                            double delta = 10.0);

}  // namespace ffr::blocks
