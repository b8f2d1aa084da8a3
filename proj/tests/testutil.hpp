#pragma once

#include <functional>
#include <string>

#include "ffr/ndarray.hpp"
#include "ffr/params.hpp"
#include "ffr/rng.hpp"
#include "ffr/tape.hpp"

namespace ffr::testing {

/// Central finite differences against the tape gradients for every parameter
/// coordinate in `store` (and optionally an input leaf the builder creates).
/// Returns the max relative error, rel = |g - ghat| / max(|g|, |ghat|, floor).
///
/// `build` must construct the full forward program on the given tape and
/// return the scalar loss (pulling parameters out of `store` each call).
inline double max_grad_rel_error(ParamStore& store,
                                 const std::function<ad::Tensor(ad::Tape&)>& build,
                                 double step = 1e-5, Index max_coords_per_param = 64) {
  store.zero_grads();
  ad::Tape tape;
  ad::Tensor loss = build(tape);
  tape.backward(loss);

  auto eval = [&]() {
    ad::Tape t2;
    return t2.value(build(t2))[0];
  };

  // Coordinates far below the gradient scale sit inside f64 central-difference
  // noise (~ulp(loss)/step); the floor keeps them from dominating the report.
  double gscale = 0;
  store.for_each([&](const std::string&, ParamStore::Entry& e) {
    gscale = std::max(gscale, max_abs(e.grad));
  });
  const double floor = std::max(1e-4, 1e-3 * gscale);

  double worst = 0;
  store.for_each([&](const std::string& name, ParamStore::Entry& e) {
    (void)name;
    Index n = e.value.size();
    Index stride = std::max<Index>(1, n / max_coords_per_param);
    for (Index i = 0; i < n; i += stride) {
      double keep = e.value[i];
      e.value[i] = keep + step;
      double fp = eval();
      e.value[i] = keep - step;
      double fm = eval();
      e.value[i] = keep;
      double fd = (fp - fm) / (2 * step);
      double g = e.grad[i];
      double denom = std::max({std::abs(fd), std::abs(g), floor});
      worst = std::max(worst, std::abs(fd - g) / denom);
    }
  });
  return worst;
}

}  // namespace ffr::testing
