#include <doctest.h>

#include "ffr/ndarray.hpp"
#include "ffr/rng.hpp"

using namespace ffr;

TEST_SUITE_BEGIN("ndarray");

TEST_CASE("shape and flat layout agree") {
  NdArray<double> a({2, 3, 4});
  CHECK(a.size() == 24);
  CHECK(a.rank() == 3);
  a(1, 2, 3) = 7.5;
  CHECK(a[1 * 12 + 2 * 4 + 3] == 7.5);
}

TEST_CASE("data length always matches the shape product") {
  CHECK_THROWS(NdArray<double>({2, 3}, std::vector<double>(5)));
  NdArray<double> a({2, 3}, std::vector<double>(6, 1.0));
  CHECK(a.size() == numel(a.shape()));
  CHECK_THROWS(a.reshaped({4, 2}));
  auto b = a.reshaped({3, 2});
  CHECK(b.extent(0) == 3);
}

TEST_CASE("nonpositive extents rejected") {
  CHECK_THROWS(NdArray<double>({2, 0, 3}));
  CHECK_THROWS(NdArray<double>({-1}));
}

TEST_CASE("complex conversions round-trip") {
  Rng rng(1);
  ArrayC z = random_complex({3, 5}, rng);
  ArrayC back = make_complex(real_part(z), imag_part(z));
  CHECK(rel_error(back, z) == 0.0);
}

TEST_CASE("rng is deterministic and distinct across seeds") {
  Rng a(42), b(42), c(43);
  ArrayD x = random_normal({64}, a);
  ArrayD y = random_normal({64}, b);
  ArrayD z = random_normal({64}, c);
  CHECK(rel_error(x, y) == 0.0);
  CHECK(rel_error(x, z) > 0.0);
}

TEST_SUITE_END();
