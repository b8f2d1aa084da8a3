#include <doctest.h>

#include "ffr/ops.hpp"
#include "ffr/params.hpp"
#include "ffr/rng.hpp"
#include "testutil.hpp"

using namespace ffr;
using namespace ffr::ad;

namespace {
ArrayD rough(const Shape& s, Rng& rng) {
  ArrayD a = random_normal(s, rng);
  for (Index i = 0; i < a.size(); ++i)
    if (std::abs(a[i]) < 0.05) a[i] = a[i] < 0 ? -0.05 : 0.05;
  return a;
}

// Direct summation convolution oracle, same geometry semantics as conv_nd.
ArrayD conv_oracle(const ArrayD& x, const ArrayD& w, const ArrayD* bias, const Shape& stride,
                   const Shape& dilation, const Shape& pad_lo) {
  Index B = x.extent(0), Ci = x.extent(1), Co = w.extent(0);
  Index r = x.rank() - 2;
  Shape in_sp(x.shape().begin() + 2, x.shape().end());
  Shape k(w.shape().begin() + 2, w.shape().end());
  Shape out_sp(r);
  for (Index a = 0; a < r; ++a) {
    Index span = (k[a] - 1) * dilation[a] + 1;
    out_sp[a] = (in_sp[a] + 2 * pad_lo[a] - span) / stride[a] + 1;  // symmetric pads here
  }
  Shape os = {B, Co};
  for (Index e : out_sp) os.push_back(e);
  ArrayD y(os);
  Shape ist = strides_of(in_sp), ost = strides_of(out_sp), kst = strides_of(k);
  Index P = numel(out_sp), K = numel(k);
  for (Index b = 0; b < B; ++b)
    for (Index co = 0; co < Co; ++co)
      for (Index p = 0; p < P; ++p) {
        double acc = bias ? (*bias)[co] : 0.0;
        for (Index ci = 0; ci < Ci; ++ci)
          for (Index kk = 0; kk < K; ++kk) {
            Index rem = p, krem = kk, off = 0;
            bool ok = true;
            for (Index a = 0; a < r; ++a) {
              Index oc = (rem / ost[a]) % out_sp[a];
              Index kc = (krem / kst[a]) % k[a];
              Index ix = oc * stride[a] + kc * dilation[a] - pad_lo[a];
              if (ix < 0 || ix >= in_sp[a]) { ok = false; break; }
              off += ix * ist[a];
            }
            if (ok) acc += x[((b * Ci + ci) * numel(in_sp)) + off] *
                           w[(co * Ci + ci) * K + kk];
          }
        y[(b * Co + co) * P + p] = acc;
      }
  return y;
}
}  // namespace

TEST_SUITE_BEGIN("ops");

TEST_CASE("1x1 identity kernel is the identity") {
  Rng rng(1);
  ArrayD x = rough({2, 3, 5, 4}, rng);
  ArrayD w({3, 3, 1, 1});
  for (Index i = 0; i < 3; ++i) w(i, i, 0, 0) = 1.0;
  Tape t;
  Tensor y = conv_nd(t.input(x), t.constant(w), std::nullopt);
  CHECK(rel_error(t.value(y), x) == 0.0);
}

TEST_CASE("3x3 ones/9 on a constant 5x5: interior unchanged, border scaled by coverage") {
  ArrayD x({1, 1, 5, 5}, 2.0);
  ArrayD w({1, 1, 3, 3}, 1.0 / 9.0);
  Tape t;
  Tensor y = conv_nd(t.input(x), t.constant(w), std::nullopt, same_conv({3, 3}));
  const ArrayD& v = t.value(y);
  REQUIRE(v.shape() == Shape{1, 1, 5, 5});
  CHECK(v(0, 0, 2, 2) == doctest::Approx(2.0));
  CHECK(v(0, 0, 0, 0) == doctest::Approx(2.0 * 4.0 / 9.0));  // corner: 4 in-bounds taps
  CHECK(v(0, 0, 0, 2) == doctest::Approx(2.0 * 6.0 / 9.0));  // edge: 6 in-bounds taps
}

TEST_CASE("dilated valid conv: [a0..a3] * [1,1] dil 2 -> [a0+a2, a1+a3]") {
  ArrayD x({1, 1, 4}, std::vector<double>{1.0, 10.0, 100.0, 1000.0});
  ArrayD w({1, 1, 2}, 1.0);
  Tape t;
  ConvOpt opt;
  opt.dilation = {2};
  Tensor y = conv_nd(t.input(x), t.constant(w), std::nullopt, opt);
  REQUIRE(t.value(y).size() == 2);
  CHECK(t.value(y)[0] == doctest::Approx(101.0));
  CHECK(t.value(y)[1] == doctest::Approx(1010.0));
}

TEST_CASE("channel mismatch rejected naming both shapes") {
  Tape t;
  Tensor x = t.input(ArrayD({1, 3, 4, 4}, 1.0));
  Tensor w = t.constant(ArrayD({2, 4, 1, 1}, 1.0));
  CHECK_THROWS_WITH_AS(conv_nd(x, w, std::nullopt), doctest::Contains("(1,3,4,4)"),
                       std::invalid_argument);
}

TEST_CASE("conv matches the direct summation oracle on random geometry") {
  Rng rng(2);
  ArrayD x = rough({2, 3, 9, 7}, rng);
  ArrayD w = rough({4, 3, 3, 2}, rng);
  ArrayD b = rough({4}, rng);
  for (Shape stride : {Shape{1, 1}, Shape{2, 1}}) {
    for (Shape dil : {Shape{1, 1}, Shape{1, 2}}) {
      Tape t;
      ConvOpt opt;
      opt.stride = stride;
      opt.dilation = dil;
      opt.pad_lo = {1, 1};
      opt.pad_hi = {1, 1};
      Tensor y = conv_nd(t.input(x), t.constant(w), t.constant(b), opt);
      ArrayD want = conv_oracle(x, w, &b, stride, dil, {1, 1});
      CHECK(rel_error(t.value(y), want) < 1e-13);
    }
  }
}

TEST_CASE("conv 3d matches oracle") {
  Rng rng(3);
  ArrayD x = rough({1, 2, 4, 5, 6}, rng);
  ArrayD w = rough({3, 2, 3, 3, 3}, rng);
  Tape t;
  Tensor y = conv_nd(t.input(x), t.constant(w), std::nullopt, same_conv({3, 3, 3}));
  ArrayD want = conv_oracle(x, w, nullptr, {1, 1, 1}, {1, 1, 1}, {1, 1, 1});
  CHECK(rel_error(t.value(y), want) < 1e-13);
}

TEST_CASE("conv FD gradients (weights, bias, input; stride and dilation)") {
  Rng rng(4);
  ParamStore ps;
  ps.create("x", rough({2, 2, 6, 5}, rng));
  ps.create("w", rough({3, 2, 3, 3}, rng));
  ps.create("b", rough({3}, rng));
  auto build = [&](Tape& t) {
    ConvOpt opt = same_conv({3, 3}, {1, 2});
    Tensor y = conv_nd(t.param(ps, "x"), t.param(ps, "w"), t.param(ps, "b"), opt);
    return mean_all(square(y));
  };
  CHECK(testing::max_grad_rel_error(ps, build) < 1e-4);
}

TEST_CASE("conv_transpose2: single tap expands to a 2x2 block") {
  ArrayD x({1, 1, 1, 1}, 3.0);
  ArrayD w({1, 1, 2, 2}, 1.0);
  Tape t;
  Tensor y = conv_transpose2(t.input(x), t.constant(w), std::nullopt);
  REQUIRE(t.value(y).shape() == Shape{1, 1, 2, 2});
  for (Index i = 0; i < 4; ++i) CHECK(t.value(y)[i] == doctest::Approx(3.0));
}

TEST_CASE("conv_transpose2 then avg_pool on a constant field gives kernel-sum scaling") {
  Rng rng(5);
  ArrayD x({1, 2, 3, 3}, 1.7);
  ArrayD w = rough({2, 2, 2, 2}, rng);
  Tape t;
  Tensor y = conv_transpose2(t.input(x), t.constant(w), std::nullopt);
  Tensor p = avg_pool(y, {2, 2});
  // pooled value at (co) = 1.7 * sum_ci mean_off w[ci,co,off] ... mean over the
  // 4 offsets of the block = sum(w[:,co,:,:]) / 4 * ... constant per channel
  for (Index co = 0; co < 2; ++co) {
    double want = 0;
    for (Index ci = 0; ci < 2; ++ci)
      for (Index o = 0; o < 4; ++o) want += w[(ci * 2 + co) * 4 + o];
    want *= 1.7 / 4.0;
    for (Index i = 0; i < 9; ++i) CHECK(t.value(p)[(co)*9 + i] == doctest::Approx(want));
  }
}

TEST_CASE("conv_transpose2 FD gradient at shape (1,2,4,4)") {
  Rng rng(6);
  ParamStore ps;
  ps.create("x", rough({1, 2, 4, 4}, rng));
  ps.create("w", rough({2, 3, 2, 2}, rng));
  ps.create("b", rough({3}, rng));
  auto build = [&](Tape& t) {
    Tensor y = conv_transpose2(t.param(ps, "x"), t.param(ps, "w"), t.param(ps, "b"));
    return mean_all(square(y));
  };
  CHECK(testing::max_grad_rel_error(ps, build) < 1e-4);
}

TEST_CASE("avg_pool values and divisibility error") {
  ArrayD x({1, 1, 2, 2}, std::vector<double>{1, 3, 5, 7});
  Tape t;
  Tensor y = avg_pool(t.input(x), {2, 2});
  CHECK(t.value(y).size() == 1);
  CHECK(t.value(y)[0] == doctest::Approx(4.0));
  Tensor up = upsample_nn(y, {2, 2});
  for (Index i = 0; i < 4; ++i) CHECK(t.value(up)[i] == doctest::Approx(4.0));
  CHECK_THROWS(avg_pool(t.input(ArrayD({1, 1, 5, 4}, 0.0)), {2, 2}));
}

TEST_CASE("pool after upsample with matching factors is the identity") {
  Rng rng(7);
  ArrayD x = rough({2, 3, 4, 5}, rng);
  Tape t;
  Tensor y = avg_pool(upsample_nn(t.input(x), {2, 3}), {2, 3});
  CHECK(rel_error(t.value(y), x) < 1e-15);
}

TEST_CASE("pool/upsample FD gradients") {
  Rng rng(8);
  ParamStore ps;
  ps.create("x", rough({2, 2, 4, 6}, rng));
  auto build = [&](Tape& t) {
    Tensor y = upsample_nn(avg_pool(t.param(ps, "x"), {2, 2}), {2, 2});
    return mean_all(square(y));
  };
  CHECK(testing::max_grad_rel_error(ps, build) < 1e-4);
}

TEST_CASE("channels_to_complex pairs channel halves") {
  ArrayD f({1, 2, 1}, std::vector<double>{1.0, 0.0});
  ArrayC z = channels_to_complex(f);
  CHECK(z[0] == cdouble(1, 0));
  ArrayD f2({1, 2, 1}, std::vector<double>{0.0, 1.0});
  CHECK(channels_to_complex(f2)[0] == cdouble(0, 1));
  CHECK_THROWS(channels_to_complex(ArrayD({1, 3, 1}, 0.0)));

  Rng rng(9);
  ArrayD any = rough({2, 6, 3, 2}, rng);
  CHECK(rel_error(complex_to_channels(channels_to_complex(any)), any) == 0.0);
}

TEST_CASE("coil pair layouts round-trip") {
  Rng rng(10);
  ArrayC k = random_complex({3, 4, 5}, rng);
  CHECK(rel_error(complex_from_coil_batch(coil_batch_pairs(k)), k) == 0.0);
  CHECK(rel_error(complex_from_coil_channels(coil_channel_pairs(k)), k) == 0.0);
}

TEST_SUITE_END();
