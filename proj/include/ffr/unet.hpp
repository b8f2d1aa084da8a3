#pragma once

#include <variant>
#include <vector>

#include "ffr/blocks.hpp"

namespace ffr::unet {

using ad::Tape;
using ad::Tensor;

enum class BlockKind { TwoConv, Ffc, FasterFc };

const char* kind_name(BlockKind k);
BlockKind kind_from_name(const std::string& name);

struct UNetSpec {
  Index entry_channels = 32;  // c: channels after the entry block
  int levels = 4;             // L: number of downsamplings
  Index in_channels = 1;
  Index out_channels = 1;
  int rank = 2;  // spatial rank, 2 or 3
  BlockKind kind = BlockKind::TwoConv;
};

/// Encoder-decoder network: one block per level on each side, channels
/// doubling on the way down and halving on the way up, parameter-free 2x
/// average-pool downsampling, 2x2 transposed-convolution upsampling,
/// concatenating skip connections, and a final 1x1 projection.
class UNet {
 public:
  UNet() = default;
  UNet(ParamStore& store, std::string prefix, const UNetSpec& spec, Rng& rng);

  Tensor forward(Tape& t, Tensor x, const blocks::RunOpt& opt = {}) const;
  /// Convenience wrapper running its own tape (inference only).
  ArrayD forward_value(const ArrayD& x, const blocks::RunOpt& opt = {}) const;

  const UNetSpec& spec() const { return spec_; }
  const std::string& prefix() const { return prefix_; }
  /// Enumerated parameter count (sum of array lengths under this prefix).
  Index param_count() const;

 private:
  using AnyBlock = std::variant<blocks::TwoConvBlock, blocks::FfcBlock, blocks::FasterFcBlock>;
  Tensor run_block(Tape& t, const AnyBlock& b, Tensor x, const blocks::RunOpt& opt) const;
  AnyBlock make_block(const std::string& p, Index in_ch, Index out_ch, Rng& rng) const;

  ParamStore* store_ = nullptr;
  std::string prefix_;
  UNetSpec spec_;
  std::vector<AnyBlock> enc_;  // [0] = entry, then one per level
  std::vector<AnyBlock> dec_;  // dec_[i] consumes level i+1 output
};

/// Eq-for-eq evaluation of the printed closed forms for the parameter count
/// of an L-level network with entry width c.
long long count_params_closed_form_unet(Index c, int L);
long long count_params_closed_form_fasterfc_unet(Index c, int L);

/// Closed-form ratio r(c, L) between the two.
double param_ratio(Index c, int L);

/// Analytic forward cost of the built network on a given input shape
/// (conv: 2*MACs, FFT: 5 N log2 N per complex channel, pointwise linear).
double flops_estimate(const UNet& net, const Shape& input_shape);

}  // namespace ffr::unet
