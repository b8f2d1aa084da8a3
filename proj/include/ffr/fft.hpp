#pragma once

#include <vector>

#include "ffr/ndarray.hpp"

namespace ffr::fft {

/// Unitary FFT (1/sqrt(N) scaling in each direction) along the given axes.
/// Any positive length is supported: mixed radix over factors {2,3,4,5,7,11,13},
/// Bluestein for the rest.
ArrayC fft_nd(const ArrayC& x, const std::vector<int>& axes);
ArrayC ifft_nd(const ArrayC& x, const std::vector<int>& axes);

/// In-place variant used by the autodiff ops. `shape` describes `data`.
void transform_inplace(cdouble* data, const Shape& shape, const std::vector<int>& axes,
                       bool inverse);

/// 5 N log2(N) per complex channel, the standard analytic cost of one
/// length-N transform (N = product of transformed extents).
double flops(Index n);

/// Tensor-level invocation counters (one fft_nd/ifft_nd call = one count),
/// used to instrument how many domain transformations a block performs.
struct Counters {
  long long forward = 0;
  long long inverse = 0;
};
Counters counters();
void reset_counters();

}  // namespace ffr::fft
