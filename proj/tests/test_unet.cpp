#include <doctest.h>

#include "ffr/unet.hpp"
#include "testutil.hpp"

using namespace ffr;
using namespace ffr::ad;
using namespace ffr::unet;

TEST_SUITE_BEGIN("unet");

TEST_CASE("closed forms reproduce the printed anchors at c=32, L=4") {
  long long nu = count_params_closed_form_unet(32, 4);
  long long nf = count_params_closed_form_fasterfc_unet(32, 4);
  CHECK(nu == 7756416);  // ~7.8 M
  CHECK(nf == 6715520);  // ~6.7 M
  double r = param_ratio(32, 4);
  CHECK(r > 0.85);
  CHECK(r < 0.87);
}

TEST_CASE("ratio stays below one across the plotted range") {
  for (Index c : {8, 16, 32, 48, 64})
    for (int L : {2, 3, 4, 5}) CHECK(param_ratio(c, L) < 1.0);
}

TEST_CASE("enumerated counts match closed forms within 2 percent") {
  Rng rng(1);
  ParamStore ps;
  UNetSpec su{32, 4, 1, 1, 2, BlockKind::TwoConv};
  UNet u(ps, "u", su, rng);
  double actual = double(u.param_count());
  double closed = double(count_params_closed_form_unet(32, 4));
  CHECK(std::abs(actual - closed) / closed < 0.02);
  CHECK(std::abs(actual - 7.8e6) / 7.8e6 < 0.02);  // Table anchor

  ParamStore ps2;
  UNetSpec sf{32, 4, 1, 1, 2, BlockKind::FasterFc};
  UNet f(ps2, "f", sf, rng);
  double actual_f = double(f.param_count());
  double closed_f = double(count_params_closed_form_fasterfc_unet(32, 4));
  CHECK(std::abs(actual_f - closed_f) / closed_f < 0.02);
  CHECK(std::abs(actual_f - 6.7e6) / 6.7e6 < 0.02);

  ParamStore ps3;
  UNetSpec sc{32, 4, 1, 1, 2, BlockKind::Ffc};
  UNet c(ps3, "c", sc, rng);
  CHECK(std::abs(double(c.param_count()) - 6.6e6) / 6.6e6 < 0.05);
}

TEST_CASE("param count is pure structure (invariant under value changes)") {
  Rng rng(2);
  ParamStore ps;
  UNet u(ps, "u", UNetSpec{4, 1, 1, 1, 2, BlockKind::TwoConv}, rng);
  Index before = u.param_count();
  ps.for_each([](const std::string&, ParamStore::Entry& e) { e.value.fill(3.25); });
  CHECK(u.param_count() == before);
}

TEST_CASE("single 1x1 conv with bias counts 2*4 + 4 = 12") {
  Rng rng(3);
  ParamStore ps;
  ps.create("w", init_conv_weight({4, 2, 1, 1}, 2, rng));
  ps.create("b", init_conv_weight({4}, 2, rng));
  CHECK(ps.num_params() == 12);
}

TEST_CASE("forward preserves extents and is deterministic") {
  Rng rng(4);
  ParamStore ps;
  UNet u(ps, "u", UNetSpec{8, 2, 1, 1, 2, BlockKind::FasterFc}, rng);
  ArrayD x = random_normal({1, 1, 16, 24}, rng);
  ArrayD y1 = u.forward_value(x);
  ArrayD y2 = u.forward_value(x);
  CHECK(y1.shape() == Shape{1, 1, 16, 24});
  CHECK(rel_error(y1, y2) == 0.0);
}

TEST_CASE("indivisible extents rejected with a padding hint") {
  Rng rng(5);
  ParamStore ps;
  UNet u(ps, "u", UNetSpec{4, 2, 1, 1, 2, BlockKind::TwoConv}, rng);
  ArrayD x({1, 1, 18, 16}, 0.5);
  Tape t;
  CHECK_THROWS_WITH_AS((void)u.forward(t, t.constant(x)), doctest::Contains("pad to 20"),
                       std::invalid_argument);
}

TEST_CASE("L=0 degenerates to entry block plus output conv") {
  Rng rng(6);
  ParamStore ps;
  UNet u(ps, "u", UNetSpec{6, 0, 1, 1, 2, BlockKind::TwoConv}, rng);
  ArrayD x = random_normal({1, 1, 5, 7}, rng);
  ArrayD y = u.forward_value(x);
  CHECK(y.shape() == Shape{1, 1, 5, 7});
  // entry two-conv (1->6->6) + final conv 6->1: 9*6+6 + 9*36+6 + 2*6+2*6 + 6+1
  Index n = 9 * 6 + 6 + 2 * 6 + 9 * 36 + 6 + 2 * 6 + 6 + 1;
  CHECK(u.param_count() == n);
}

TEST_CASE("unet gradient check on 16x16, c=8, L=2 fasterfc") {
  Rng rng(7);
  ParamStore ps;
  UNet u(ps, "u", UNetSpec{8, 2, 1, 1, 2, BlockKind::FasterFc}, rng);
  ArrayD x = random_normal({1, 1, 16, 16}, rng);
  auto build = [&](Tape& t) { return mean_all(square(u.forward(t, t.constant(x)))); };
  CHECK(testing::max_grad_rel_error(ps, build, 1e-5, 4) < 1e-4);
}

TEST_CASE("flops: 1x1 conv 2->2 channels on 4x4 counts 128 + 32 bias adds") {
  Rng rng(8);
  Tape t;
  Tensor x = t.constant(ArrayD({1, 2, 4, 4}));
  Tensor w = t.constant(ArrayD({2, 2, 1, 1}));
  Tensor b = t.constant(ArrayD({2}));
  (void)conv_nd(x, w, b);
  CHECK(t.flops() == doctest::Approx(128.0 + 32.0));
}

TEST_CASE("flops ordering fasterfc < ffc < two-conv at the paper configuration") {
  Rng rng(9);
  ParamStore ps;
  UNet uu(ps, "uu", UNetSpec{32, 4, 1, 1, 2, BlockKind::TwoConv}, rng);
  UNet uf(ps, "uf", UNetSpec{32, 4, 1, 1, 2, BlockKind::Ffc}, rng);
  UNet ua(ps, "ua", UNetSpec{32, 4, 1, 1, 2, BlockKind::FasterFc}, rng);
  Shape in = {1, 1, 320, 320};
  double g_two = flops_estimate(uu, in);
  double g_ffc = flops_estimate(uf, in);
  double g_fast = flops_estimate(ua, in);
  CHECK(g_fast < g_ffc);
  CHECK(g_ffc < g_two);
  // doubling spatial extents quadruples conv-dominated cost (2d)
  ParamStore ps2;
  Rng rng2(10);
  UNet small(ps2, "s", UNetSpec{8, 1, 1, 1, 2, BlockKind::TwoConv}, rng2);
  double g1 = flops_estimate(small, {1, 1, 32, 32});
  double g2 = flops_estimate(small, {1, 1, 64, 64});
  CHECK(g2 / g1 == doctest::Approx(4.0).epsilon(0.05));
}

TEST_SUITE_END();
