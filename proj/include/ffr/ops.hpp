#pragma once

#include <optional>
#include <vector>

#include "ffr/tape.hpp"

namespace ffr::ad {

// Elementwise binary ops with numpy-style broadcasting (right-aligned,
// extents equal or 1). The adjoint of a broadcast operand sums over the
// broadcast axes.
Tensor add(Tensor a, Tensor b);
Tensor sub(Tensor a, Tensor b);
Tensor mul(Tensor a, Tensor b);
Tensor div(Tensor a, Tensor b);

Tensor scale(Tensor a, double s);
Tensor add_scalar(Tensor a, double s);
Tensor neg(Tensor a);
Tensor sqrt_op(Tensor a);
Tensor square(Tensor a);

Tensor sum_all(Tensor a);   // -> shape {1}
Tensor mean_all(Tensor a);  // -> shape {1}
/// Sum over the given axes, keeping them as extent-1 dims.
Tensor sum_axes(Tensor a, std::vector<int> axes);

Tensor relu(Tensor a);
/// max(x, 0) + slope*min(x, 0); the adjoint uses the same gate.
Tensor leaky_relu(Tensor a, double slope);

/// x: (B, C, spatial...). Per (b, c): zero mean / unit variance over the
/// spatial extents, then *gamma[c] + beta[c].
Tensor instance_norm(Tensor x, Tensor gamma, Tensor beta, double eps = 1e-5);

Tensor concat(Tensor a, Tensor b, int axis);
Tensor narrow(Tensor a, int axis, Index start, Index len);
Tensor reshape(Tensor a, Shape shape);

struct ConvOpt {
  Shape stride;    // per spatial axis; empty = all 1
  Shape dilation;  // empty = all 1
  Shape pad_lo;    // empty = all 0
  Shape pad_hi;
};
/// Zero "same" padding for a given kernel/dilation (output extents = input
/// extents at stride 1). Even spans split low = span/2, hi = span - lo.
ConvOpt same_conv(const Shape& kernel, const Shape& dilation = {});

/// x: (B, Ci, sp...), w: (Co, Ci, k...), bias: (Co).
Tensor conv_nd(Tensor x, Tensor w, std::optional<Tensor> bias, const ConvOpt& opt = {});

/// Stride-2, kernel-2 transposed convolution; doubles every spatial extent.
/// w: (Ci, Co, 2...).
Tensor conv_transpose2(Tensor x, Tensor w, std::optional<Tensor> bias);

/// Non-overlapping mean pooling; spatial extents must divide by the window.
Tensor avg_pool(Tensor x, Shape window);
/// Nearest-neighbour (replicating) upsample.
Tensor upsample_nn(Tensor x, Shape factor);

// Channel-halves complex convention: a (B, 2C, sp...) real tensor carries C
// complex channels, channel k paired with channel k + C.
/// Unitary FFT over all spatial axes of the paired channels. The map is
/// orthogonal, so the adjoint of fft_pairs is ifft_pairs (and vice versa).
Tensor fft_pairs(Tensor x);
Tensor ifft_pairs(Tensor x);

/// Channel-pair complex multiply (optionally conjugating `a`); broadcasting
/// over the batch axis as in mul. Built from elementwise primitives.
Tensor cmul_pairs(Tensor a, Tensor b, bool conj_a = false);

/// Pixelwise magnitude sqrt(re^2 + im^2) of a paired tensor: (B, 2C, sp...)
/// -> (B, C, sp...).
Tensor abs_pairs(Tensor x);

/// Root-sum-of-squares over batch (coil) axis and pair channels:
/// (N, 2, sp...) -> (1, 1, sp...).
Tensor rss_pairs(Tensor x);

/// Divides each coil-batched map by the pixelwise RSS (eps-guarded), so that
/// sum_i |S_i|^2 = 1 wherever RSS > eps and -> 0 where RSS vanishes.
Tensor dss_normalize(Tensor u, double eps = 1e-12);

// ---- value-level helpers for the paired layout ----

/// (B, C, sp...) real with C even -> (B, C/2, sp...) complex,
/// channel k = f[k] + i f[k + C/2].
ArrayC channels_to_complex(const ArrayD& f);
ArrayD complex_to_channels(const ArrayC& z);

/// (N, sp...) complex coils -> (N, 2, sp...) real (coils as batch).
ArrayD coil_batch_pairs(const ArrayC& k);
ArrayC complex_from_coil_batch(const ArrayD& x);

/// (N, sp...) complex coils -> (1, 2N, sp...) real (coils as channel halves).
ArrayD coil_channel_pairs(const ArrayC& k);
ArrayC complex_from_coil_channels(const ArrayD& x);

}  // namespace ffr::ad
