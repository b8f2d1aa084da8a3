#pragma once

#include <string>

#include "ffr/ndarray.hpp"

namespace ffr {

/// Binary P5 PGM, 16-bit big-endian samples (the PNM convention), values
/// scaled so that `hi` maps to 65535 and `lo` to 0. `img` is (rows, cols).
void write_pgm16(const std::string& path, const ArrayD& img, double lo, double hi);

}  // namespace ffr
