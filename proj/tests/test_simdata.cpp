#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "ffr/fft.hpp"
#include "ffr/simdata.hpp"

using namespace ffr;
using namespace ffr::sim;

TEST_SUITE_BEGIN("simdata");

TEST_CASE("phantom: deterministic, bounded, seed-sensitive") {
  ArrayD a = make_phantom(5, {16, 16, 16});
  ArrayD b = make_phantom(5, {16, 16, 16});
  ArrayD c = make_phantom(6, {16, 16, 16});
  CHECK(rel_error(a, b) == 0.0);
  CHECK(rel_error(a, c) > 0.0);
  for (Index i = 0; i < a.size(); ++i) {
    CHECK(a[i] >= 0.0);
    CHECK(a[i] <= 1.0);
  }
  CHECK(max_abs(a) > 0.0);
  CHECK_THROWS(make_phantom(1, {4, 16}));
}

TEST_CASE("coils: unit RSS everywhere, single coil has unit magnitude") {
  ArrayC m = make_coils(4, {12, 10}, 3);
  const Index S = 120;
  for (Index i = 0; i < S; ++i) {
    double r = 0;
    for (Index n = 0; n < 4; ++n) r += std::norm(m[n * S + i]);
    CHECK(std::abs(std::sqrt(r) - 1.0) < 1e-6);
  }
  ArrayC one = make_coils(1, {8, 8}, 4);
  for (Index i = 0; i < one.size(); ++i) CHECK(std::abs(std::abs(one[i]) - 1.0) < 1e-6);
}

TEST_CASE("coils are smooth: bounded finite-difference increments") {
  ArrayC m = make_coils(4, {24, 24}, 9);
  double worst = 0;
  for (Index n = 0; n < 4; ++n)
    for (Index r = 0; r < 24; ++r)
      for (Index c = 1; c < 24; ++c)
        worst = std::max(worst, std::abs(m(n, r, c) - m(n, r, c - 1)));
  CHECK(worst < 0.35);  // regression bound for this seed and grid
}

TEST_CASE("noiseless forward model is self-consistent: RSS of IFFT equals phantom") {
  ArrayD ph = make_phantom(11, {16, 12});
  ArrayC coils = make_coils(3, {16, 12}, 12);
  ArrayC k = simulate_kspace(ph, coils, 0.0, 13);
  ArrayC img = fft::ifft_nd(k, {1, 2});
  ArrayD r = rss(img);
  CHECK(rel_error(r, ph) < 1e-10);
}

TEST_CASE("single unit coil and zero noise gives K = F(x) exactly") {
  ArrayD ph = make_phantom(14, {8, 8});
  ArrayC unit({1, 8, 8}, cdouble(1, 0));
  ArrayC k = simulate_kspace(ph, unit, 0.0, 15);
  ArrayC want = fft::fft_nd(make_complex(ph, ArrayD(ph.shape())), {0, 1}).reshaped({1, 8, 8});
  CHECK(rel_error(k, want) < 1e-12);
}

TEST_CASE("fixed seed reproduces the identical noise realization") {
  ArrayD ph = make_phantom(16, {8, 8});
  ArrayC coils = make_coils(2, {8, 8}, 17);
  ArrayC k1 = simulate_kspace(ph, coils, 1e-3, 18);
  ArrayC k2 = simulate_kspace(ph, coils, 1e-3, 18);
  CHECK(rel_error(k1, k2) == 0.0);
}

TEST_CASE("random-1d mask: 368 lines at AF 4 with 8% center = 29 ACS, 92 total") {
  MaskSpec ms{MaskKind::Random1d, 4.0, 0.08, 21};
  ArrayD m = make_mask(ms, {368});
  Index total = 0;
  for (Index i = 0; i < 368; ++i) total += m[i] > 0 ? 1 : 0;
  CHECK(total == 92);
  Index start = center_start(368, 29);
  for (Index i = 0; i < 29; ++i) CHECK(m[start + i] == 1.0);
  // center alone exceeding the budget is rejected
  MaskSpec bad{MaskKind::Random1d, 4.0, 0.5, 21};
  CHECK_THROWS(make_mask(bad, {368}));
}

TEST_CASE("equispaced-2d mask: stride-2 lattice plus 16% ACS rectangle") {
  MaskSpec ms{MaskKind::Equispaced2d, 4.0, 0.16, 22};
  ArrayD m = make_mask(ms, {320, 256});
  // ACS rectangle 51 x 41 fully on
  Index sp = center_start(320, 51), ss = center_start(256, 41);
  for (Index p = sp; p < sp + 51; ++p)
    for (Index s = ss; s < ss + 41; ++s) CHECK(m(p, s) == 1.0);
  // outside: exactly the even lattice
  CHECK(m(1, 1) == 0.0);
  CHECK(m(0, 0) == 1.0);
  CHECK(m(2, 4) == 1.0);
  CHECK(m(2, 5) == 0.0);
}

TEST_CASE("apply_mask zeroes unsampled positions; idempotent; fraction matches") {
  ArrayD ph = make_phantom(23, {8, 16});
  ArrayC coils = make_coils(2, {8, 16}, 24);
  ArrayC k = simulate_kspace(ph, coils, 0.0, 25);
  MaskSpec ms{MaskKind::Random1d, 2.0, 0.25, 26};
  ArrayD mask = make_mask(ms, {16});
  KSpaceVolume v = apply_mask(k, mask, 0.25);
  v.validate();
  KSpaceVolume v2 = apply_mask(v.data, mask, 0.25);
  CHECK(rel_error(v2.data, v.data) == 0.0);
  // all-ones mask = identity
  KSpaceVolume w = apply_mask(k, ArrayD({16}, 1.0), 0.25);
  CHECK(rel_error(w.data, k) == 0.0);
  // nonzero count equals |mask support| * coils * F
  Index on = 0;
  for (Index i = 0; i < mask.size(); ++i) on += mask[i] > 0 ? 1 : 0;
  Index nz = 0;
  for (Index i = 0; i < v.data.size(); ++i) nz += v.data[i] != cdouble(0, 0) ? 1 : 0;
  CHECK(nz <= on * 2 * 8);
  CHECK(nz > 0);
  // zero-filled RSS of masked data differs from the phantom (aliasing)
  ArrayC img = fft::ifft_nd(v.data, {1, 2});
  CHECK(rel_error(rss(img), ph) > 1e-3);
}

TEST_CASE("datasets are byte-identical under the same seed") {
  namespace fs = std::filesystem;
  DatasetSpec ds;
  ds.volumes = 1;
  ds.n_coils = 2;
  ds.extents = {8, 12};
  ds.mask = {MaskKind::Random1d, 2.0, 0.25, 5};
  ds.seed = 77;
  auto base = fs::temp_directory_path();
  write_dataset(ds, (base / "ffr_ds_a").string(), "prov");
  write_dataset(ds, (base / "ffr_ds_b").string(), "prov");
  auto slurp = [](const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    return std::vector<char>(std::istreambuf_iterator<char>(f), {});
  };
  CHECK(slurp(base / "ffr_ds_a/vol_000.nav") == slurp(base / "ffr_ds_b/vol_000.nav"));
  Volume v = load_volume((base / "ffr_ds_a/vol_000.nav").string());
  v.measured.validate();
  CHECK(v.ground_truth.shape() == Shape{8, 12});
}

TEST_SUITE_END();
