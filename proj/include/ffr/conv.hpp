#pragma once

#include <vector>

#include "ffr/ndarray.hpp"

namespace ffr::convk {

/// Geometry of one n-d convolution. Spatial rank 1..3.
struct Geom {
  Shape in_sp;      // input spatial extents
  Shape kernel;     // kernel spatial extents
  Shape stride;     // per spatial axis
  Shape dilation;   // per spatial axis
  Shape pad_lo;     // zero padding, low side
  Shape pad_hi;     // high side
  Shape out_sp;     // derived

  static Geom make(const Shape& in_sp, const Shape& kernel, Shape stride, Shape dilation,
                   Shape pad_lo, Shape pad_hi);
};

/// x: (B, Ci, sp...), w: (Co, Ci, k...), bias: Co or null -> y: (B, Co, out...)
ArrayD forward(const ArrayD& x, const ArrayD& w, const double* bias, const Geom& g);
ArrayD backward_input(const ArrayD& w, const ArrayD& dy, const Geom& g, Index batch);
ArrayD backward_weight(const ArrayD& x, const ArrayD& dy, const Geom& g, const Shape& wshape);
ArrayD backward_bias(const ArrayD& dy);

/// Stride-2 kernel-2 transposed convolution (the U-Net up-convolution).
/// x: (B, Ci, sp...), w: (Ci, Co, 2...) -> y: (B, Co, 2*sp...)
ArrayD transpose2_forward(const ArrayD& x, const ArrayD& w, const double* bias);
ArrayD transpose2_backward_input(const ArrayD& w, const ArrayD& dy);
ArrayD transpose2_backward_weight(const ArrayD& x, const ArrayD& dy, const Shape& wshape);

}  // namespace ffr::convk
