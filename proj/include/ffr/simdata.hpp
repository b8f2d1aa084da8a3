#pragma once

#include <cstdint>
#include <string>

#include "ffr/kdata.hpp"
#include "ffr/rng.hpp"

namespace ffr::sim {

/// Piecewise-constant magnitude volume in [0, 1]: a fixed sum of randomized
/// ellipsoids. Deterministic under the seed.
ArrayD make_phantom(std::uint64_t seed, const Shape& extents);

/// N smooth complex coil profiles with pixelwise RSS normalized to one, so
/// the RSS of the noiseless coil images reproduces the phantom exactly.
ArrayC make_coils(Index n_coils, const Shape& extents, std::uint64_t seed);

/// Eq-1 forward model before masking: K_i = F(S_i x) + eps_i, unitary FFT
/// over all spatial axes, complex white noise of the given sigma.
ArrayC simulate_kspace(const ArrayD& phantom, const ArrayC& coils, double noise_sigma,
                       std::uint64_t seed);

enum class MaskKind { Random1d, Equispaced2d };

struct MaskSpec {
  MaskKind kind = MaskKind::Random1d;
  double acceleration = 4.0;      // overall AF for random-1d; per-axis stride 2 for equispaced-2d
  double center_fraction = 0.08;  // fully sampled center per phase axis
  std::uint64_t seed = 0;
};

/// random-1d: mask over (P); round(cf*P) center lines always on, the rest of
/// the round(P/AF) budget drawn uniformly without replacement.
/// equispaced-2d: mask over (P, S); stride-2 lattice on both axes plus the
/// fully sampled center rectangle.
ArrayD make_mask(const MaskSpec& spec, const Shape& phase_extents);

/// Measured volume: data masked over the phase axes, descriptor attached.
KSpaceVolume apply_mask(const ArrayC& full_k, const ArrayD& mask, double center_fraction);

/// One simulated acquisition bundled for persistence.
struct Volume {
  ArrayD ground_truth;  // RSS of the noiseless coil images
  ArrayC full_k;        // (N, sp...)
  KSpaceVolume measured;
  ArrayC coils;
};

struct DatasetSpec {
  Index volumes = 2;
  Index n_coils = 4;
  Shape extents = {64, 64, 64};  // (F, P, S); use rank 2 for 2-d slices
  MaskSpec mask;
  double noise_sigma = 0.0;
  std::uint64_t seed = 7;
};

Volume make_volume(const DatasetSpec& spec, Index index);

/// Writes vol_%03d.nav files (ground truth, full and measured k-space, coils,
/// mask) under `dir` with the provenance string in every container header.
void write_dataset(const DatasetSpec& spec, const std::string& dir, const std::string& provenance);

Volume load_volume(const std::string& path);
void save_volume(const std::string& path, const Volume& v, const std::string& provenance);

}  // namespace ffr::sim
