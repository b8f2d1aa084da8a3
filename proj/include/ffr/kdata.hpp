#pragma once

#include <cmath>

#include "ffr/ndarray.hpp"

namespace ffr {

/// Multi-coil frequency-domain measurement. Layout (N, F, P) for 2-d data or
/// (N, F, P, S) for 3-d; the mask covers the trailing phase axes, (P) or
/// (P, S), and broadcasts over coils and the frequency axis. Unsampled
/// positions of `data` are exactly zero.
struct KSpaceVolume {
  ArrayC data;
  ArrayD mask;
  double center_fraction = 0.08;  // ACS: fully sampled center per phase axis

  Index coils() const { return data.extent(0); }
  int phase_rank() const { return static_cast<int>(mask.rank()); }
  int spatial_rank() const { return static_cast<int>(data.rank()) - 1; }

  /// Checks the invariants: binary mask, unsampled entries exactly zero.
  void validate() const;
};

/// Per-coil complex spatial maps, (N, spatial...).
struct SensitivityMaps {
  ArrayC maps;
};

/// Number of fully sampled center lines for a given axis extent.
inline Index acs_extent(Index n, double fraction) {
  Index e = static_cast<Index>(std::llround(fraction * static_cast<double>(n)));
  return std::min(n, std::max<Index>(e, 0));
}

/// First line of the centered run of length `len` in an axis of extent `n`.
inline Index center_start(Index n, Index len) { return (n - len + 1) / 2; }

/// Fully sampled center region along each phase axis (frequency axis always
/// whole). start/extent per phase axis, in phase-axis order.
struct AcsRegion {
  Shape start;
  Shape extent;
};

AcsRegion acs_region(const KSpaceVolume& k);

/// Zeros every phase position outside the ACS region; idempotent.
KSpaceVolume mask_center(const KSpaceVolume& k);

/// Elementwise product with the mask, broadcast over coils and frequency.
ArrayC apply_phase_mask(const ArrayC& data, const ArrayD& mask);

/// Root-sum-of-squares magnitude over coils: (N, sp...) -> (sp...).
ArrayD rss(const ArrayC& coil_images);

}  // namespace ffr
