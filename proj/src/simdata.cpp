#include "ffr/simdata.hpp"

#include <algorithm>
#include <filesystem>

#include "ffr/container.hpp"
#include "ffr/fft.hpp"

namespace ffr::sim {

ArrayD make_phantom(std::uint64_t seed, const Shape& extents) {
  for (Index e : extents)
    if (e < 8) throw std::invalid_argument("phantom: extents must be >= 8, got " + shape_str(extents));
  Rng rng(seed * 0x9e3779b97f4a7c15ull + 1);
  const int r = static_cast<int>(extents.size());
  const int n_ellipsoids = 6;
  ArrayD vol(extents);
  const Shape st = strides_of(extents);

  struct Ell {
    double c[3], inv_r[3], cs[3], sn[3], val;
  };
  std::vector<Ell> es;
  // one big background body plus smaller internal structures
  for (int e = 0; e < n_ellipsoids; ++e) {
    Ell el{};
    for (int a = 0; a < r; ++a) {
      el.c[a] = e == 0 ? 0.0 : rng.uniform(-0.45, 0.45);
      double rad = e == 0 ? rng.uniform(0.98, 1.15) : rng.uniform(0.12, 0.4);
      el.inv_r[a] = 1.0 / rad;
      double ang = rng.uniform(0, 2 * M_PI);
      el.cs[a] = std::cos(ang);
      el.sn[a] = std::sin(ang);
    }
    el.val = e == 0 ? 0.45 : rng.uniform(-0.35, 0.45);
    es.push_back(el);
  }
  for (Index i = 0; i < vol.size(); ++i) {
    double u[3] = {0, 0, 0};
    for (int a = 0; a < r; ++a) {
      Index c = (i / st[a]) % extents[a];
      u[a] = 2.0 * (static_cast<double>(c) + 0.5) / static_cast<double>(extents[a]) - 1.0;
    }
    double acc = 0;
    for (const Ell& el : es) {
      double q = 0;
      for (int a = 0; a < r; ++a) {
        int b = (a + 1) % r;
        double da = u[a] - el.c[a];
        double db = r > 1 ? u[b] - el.c[b] : 0.0;
        double rot = da * el.cs[a] + db * el.sn[a];  // mild in-plane rotation
        q += rot * rot * el.inv_r[a] * el.inv_r[a];
      }
      if (q <= 1.0) acc += el.val;
    }
    vol[i] = std::clamp(acc, 0.0, 1.0);
  }
  return vol;
}

ArrayC make_coils(Index n_coils, const Shape& extents, std::uint64_t seed) {
  if (n_coils < 1) throw std::invalid_argument("coils: need at least one coil");
  Rng rng(seed * 0x2545f4914f6cdd1dull + 3);
  const int r = static_cast<int>(extents.size());
  const Index S = numel(extents);
  const Shape st = strides_of(extents);
  Shape full = {n_coils};
  for (Index e : extents) full.push_back(e);
  ArrayC maps(full);

  // boundary centers, broad gaussians, smooth linear phase
  std::vector<std::vector<double>> centers;
  std::vector<std::vector<double>> phases;
  std::vector<double> widths;
  for (Index n = 0; n < n_coils; ++n) {
    double ang = 2.0 * M_PI * (static_cast<double>(n) + rng.uniform(-0.1, 0.1)) /
                 static_cast<double>(n_coils);
    std::vector<double> c(r, 0.0);
    c[r - 1] = 1.15 * std::cos(ang);
    c[r >= 2 ? r - 2 : 0] = 1.15 * std::sin(ang);
    if (r == 3) c[0] = rng.uniform(-0.3, 0.3);
    centers.push_back(c);
    std::vector<double> ph(r);
    for (int a = 0; a < r; ++a) ph[a] = rng.uniform(-1.2, 1.2);
    phases.push_back(ph);
    widths.push_back(rng.uniform(0.9, 1.2));
  }
  for (Index i = 0; i < S; ++i) {
    double u[3] = {0, 0, 0};
    for (int a = 0; a < r; ++a) {
      Index c = (i / st[a]) % extents[a];
      u[a] = 2.0 * (static_cast<double>(c) + 0.5) / static_cast<double>(extents[a]) - 1.0;
    }
    double norm2 = 0;
    std::vector<cdouble> vals(n_coils);
    for (Index n = 0; n < n_coils; ++n) {
      double d2 = 0, ph = 0;
      for (int a = 0; a < r; ++a) {
        double d = u[a] - centers[n][a];
        d2 += d * d;
        ph += phases[n][a] * u[a];
      }
      double mag = std::exp(-d2 / (2.0 * widths[n] * widths[n]));
      vals[n] = std::polar(mag, ph);
      norm2 += mag * mag;
    }
    double inv = 1.0 / std::sqrt(std::max(norm2, 1e-30));
    for (Index n = 0; n < n_coils; ++n) maps[n * S + i] = vals[n] * inv;
  }
  return maps;
}

ArrayC simulate_kspace(const ArrayD& phantom, const ArrayC& coils, double noise_sigma,
                       std::uint64_t seed) {
  if (Shape(coils.shape().begin() + 1, coils.shape().end()) != phantom.shape())
    throw std::invalid_argument("simulate: coil extents " + shape_str(coils.shape()) +
                                " do not match phantom " + shape_str(phantom.shape()));
  const Index N = coils.extent(0);
  const Index S = phantom.size();
  ArrayC k(coils.shape());
  for (Index n = 0; n < N; ++n)
    for (Index i = 0; i < S; ++i) k[n * S + i] = coils[n * S + i] * phantom[i];
  std::vector<int> axes;
  for (int a = 1; a < static_cast<int>(k.rank()); ++a) axes.push_back(a);
  fft::transform_inplace(k.data(), k.shape(), axes, false);
  if (noise_sigma > 0) {
    Rng rng(seed ^ 0xdeadbeefcafef00dull);
    for (Index i = 0; i < k.size(); ++i)
      k[i] += cdouble(noise_sigma * rng.normal(), noise_sigma * rng.normal());
  }
  return k;
}

ArrayD make_mask(const MaskSpec& spec, const Shape& phase_extents) {
  ArrayD mask(phase_extents);
  if (spec.kind == MaskKind::Random1d) {
    if (phase_extents.size() != 1)
      throw std::invalid_argument("mask: random-1d wants one phase axis, got " +
                                  shape_str(phase_extents));
    const Index P = phase_extents[0];
    const Index n_center = acs_extent(P, spec.center_fraction);
    const Index budget =
        static_cast<Index>(std::llround(static_cast<double>(P) / spec.acceleration));
    if (n_center > budget)
      throw std::invalid_argument("mask: ACS lines (" + std::to_string(n_center) +
                                  ") exceed the sampling budget (" + std::to_string(budget) +
                                  ") at AF " + std::to_string(spec.acceleration));
    const Index start = center_start(P, n_center);
    for (Index i = 0; i < n_center; ++i) mask[start + i] = 1.0;
    std::vector<Index> rest;
    for (Index p = 0; p < P; ++p)
      if (mask[p] == 0.0) rest.push_back(p);
    Rng rng(spec.seed * 0x100000001b3ull + 11);
    // Fisher-Yates prefix of the non-center lines
    for (Index i = 0; i < budget - n_center; ++i) {
      Index j = i + rng.below(static_cast<Index>(rest.size()) - i);
      std::swap(rest[i], rest[j]);
      mask[rest[i]] = 1.0;
    }
    return mask;
  }
  if (phase_extents.size() != 2)
    throw std::invalid_argument("mask: equispaced-2d wants two phase axes, got " +
                                shape_str(phase_extents));
  const Index P = phase_extents[0], S = phase_extents[1];
  const Index ep = acs_extent(P, spec.center_fraction);
  const Index es = acs_extent(S, spec.center_fraction);
  const Index sp = center_start(P, ep), ss = center_start(S, es);
  for (Index p = 0; p < P; ++p)
    for (Index s = 0; s < S; ++s) {
      bool lattice = (p % 2 == 0) && (s % 2 == 0);
      bool acs = p >= sp && p < sp + ep && s >= ss && s < ss + es;
      mask(p, s) = (lattice || acs) ? 1.0 : 0.0;
    }
  return mask;
}

KSpaceVolume apply_mask(const ArrayC& full_k, const ArrayD& mask, double center_fraction) {
  KSpaceVolume v;
  v.data = apply_phase_mask(full_k, mask);
  v.mask = mask;
  v.center_fraction = center_fraction;
  return v;
}

Volume make_volume(const DatasetSpec& spec, Index index) {
  Volume v;
  std::uint64_t vseed = spec.seed + 1000003ull * static_cast<std::uint64_t>(index);
  ArrayD phantom = make_phantom(vseed, spec.extents);
  v.coils = make_coils(spec.n_coils, spec.extents, vseed + 17);
  ArrayC imgs(v.coils.shape());
  const Index S = phantom.size();
  for (Index n = 0; n < spec.n_coils; ++n)
    for (Index i = 0; i < S; ++i) imgs[n * S + i] = v.coils[n * S + i] * phantom[i];
  v.ground_truth = rss(imgs);
  v.full_k = simulate_kspace(phantom, v.coils, spec.noise_sigma, vseed + 29);
  MaskSpec ms = spec.mask;
  ms.seed = spec.mask.seed + static_cast<std::uint64_t>(index);
  Shape phase(spec.extents.end() - (spec.mask.kind == MaskKind::Equispaced2d ? 2 : 1),
              spec.extents.end());
  ArrayD mask = make_mask(ms, phase);
  v.measured = apply_mask(v.full_k, mask, ms.center_fraction);
  return v;
}

void save_volume(const std::string& path, const Volume& v, const std::string& provenance) {
  save_container(path,
                 {{"ground_truth", v.ground_truth},
                  {"full_k", v.full_k},
                  {"measured_k", v.measured.data},
                  {"mask", v.measured.mask},
                  {"center_fraction", ArrayD({1}, v.measured.center_fraction)},
                  {"coils", v.coils}},
                 provenance);
}

Volume load_volume(const std::string& path) {
  Container c = load_container(path);
  Volume v;
  v.ground_truth = c.get_f64("ground_truth");
  v.full_k = c.get_c64("full_k");
  v.measured.data = c.get_c64("measured_k");
  v.measured.mask = c.get_f64("mask");
  v.measured.center_fraction = c.get_f64("center_fraction")[0];
  v.coils = c.get_c64("coils");
  return v;
}

void write_dataset(const DatasetSpec& spec, const std::string& dir,
                   const std::string& provenance) {
  std::filesystem::create_directories(dir);
  for (Index i = 0; i < spec.volumes; ++i) {
    Volume v = make_volume(spec, i);
    char name[32];
    std::snprintf(name, sizeof(name), "vol_%03lld.nav", static_cast<long long>(i));
    save_volume(dir + "/" + name, v, provenance);
  }
}

}  // namespace ffr::sim
