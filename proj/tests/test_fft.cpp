#include <doctest.h>

#include <cmath>

#include "ffr/fft.hpp"
#include "ffr/rng.hpp"

using namespace ffr;

namespace {

// O(n^2) reference DFT with unitary scaling, one axis of a 1-d array.
ArrayC dft_ref(const ArrayC& x, bool inverse) {
  Index n = x.size();
  ArrayC out(x.shape());
  double sign = inverse ? 1.0 : -1.0;
  for (Index k = 0; k < n; ++k) {
    cdouble acc(0, 0);
    for (Index j = 0; j < n; ++j) {
      double ang = sign * 2.0 * M_PI * double(k) * double(j) / double(n);
      acc += x[j] * cdouble(std::cos(ang), std::sin(ang));
    }
    out[k] = acc / std::sqrt(double(n));
  }
  return out;
}

double l2(const ArrayC& a) {
  double s = 0;
  for (Index i = 0; i < a.size(); ++i) s += std::norm(a[i]);
  return std::sqrt(s);
}

}  // namespace

TEST_SUITE_BEGIN("fft");

TEST_CASE("delta transforms to the flat spectrum 1/sqrt(8)") {
  ArrayC x({8});
  x[0] = 1.0;
  ArrayC y = fft::fft_nd(x, {0});
  for (Index i = 0; i < 8; ++i) {
    CHECK(std::abs(y[i].real() - 1.0 / std::sqrt(8.0)) < 1e-14);
    CHECK(std::abs(y[i].imag()) < 1e-14);
  }
}

TEST_CASE("matches the quadratic DFT for assorted lengths") {
  Rng rng(7);
  for (Index n : {1, 2, 3, 4, 5, 6, 8, 12, 15, 17, 20, 23, 29, 41, 320, 256, 301}) {
    ArrayC x = random_complex({n}, rng);
    ArrayC got = fft::fft_nd(x, {0});
    ArrayC want = dft_ref(x, false);
    CHECK_MESSAGE(rel_error(got, want) < 1e-11, "forward length ", n);
    ArrayC gi = fft::ifft_nd(x, {0});
    ArrayC wi = dft_ref(x, true);
    CHECK_MESSAGE(rel_error(gi, wi) < 1e-11, "inverse length ", n);
  }
}

TEST_CASE("round-trip error stays at machine scale for a non power of two") {
  Rng rng(3);
  ArrayC x = random_complex({12}, rng);
  ArrayC y = fft::ifft_nd(fft::fft_nd(x, {0}), {0});
  CHECK(rel_error(y, x) < 1e-10);
}

TEST_CASE("Parseval: unitary in both directions") {
  Rng rng(4);
  ArrayC x = random_complex({6, 10}, rng);
  ArrayC y = fft::fft_nd(x, {0, 1});
  CHECK(std::abs(l2(y) - l2(x)) / l2(x) < 1e-12);
  ArrayC z = fft::ifft_nd(x, {0, 1});
  CHECK(std::abs(l2(z) - l2(x)) / l2(x) < 1e-12);
}

TEST_CASE("nd transform equals per-axis composition") {
  Rng rng(5);
  ArrayC x = random_complex({4, 6, 5}, rng);
  ArrayC a = fft::fft_nd(x, {0, 1, 2});
  ArrayC b = fft::fft_nd(fft::fft_nd(fft::fft_nd(x, {0}), {1}), {2});
  CHECK(rel_error(a, b) < 1e-12);
}

TEST_CASE("transform on one axis leaves other axes independent") {
  Rng rng(6);
  ArrayC x = random_complex({3, 8}, rng);
  ArrayC y = fft::fft_nd(x, {1});
  for (Index r = 0; r < 3; ++r) {
    ArrayC row({8});
    for (Index c = 0; c < 8; ++c) row[c] = x(r, c);
    ArrayC want = dft_ref(row, false);
    for (Index c = 0; c < 8; ++c) CHECK(std::abs(y(r, c) - want[c]) < 1e-12);
  }
}

TEST_CASE("invocation counters track calls") {
  fft::reset_counters();
  ArrayC x({4}, cdouble(1, 0));
  (void)fft::fft_nd(x, {0});
  (void)fft::ifft_nd(x, {0});
  (void)fft::ifft_nd(x, {0});
  auto c = fft::counters();
  CHECK(c.forward == 1);
  CHECK(c.inverse == 2);
}

TEST_SUITE_END();
