#include "ffr/fft.hpp"

#include <atomic>
#include <cmath>
#include <map>
#include <memory>
#include <mutex>

namespace ffr::fft {
namespace {

using cd = cdouble;

std::atomic<long long> g_forward{0};
std::atomic<long long> g_inverse{0};

struct Plan {
  Index n = 0;
  std::vector<Index> factors;  // radix at each recursion depth, product == n
  std::vector<cd> twiddle;     // twiddle[t] = exp(-2*pi*i*t/n)
  double norm = 1.0;           // 1/sqrt(n)

  // Bluestein state (empty when mixed radix applies).
  bool bluestein = false;
  Index m = 0;                  // pow2 convolution length >= 2n-1
  std::vector<cd> chirp;        // exp(-i*pi*j^2/n), j in [0,n)
  std::vector<cd> chirp_spec;   // sqrt(m) * FFT_m(wrapped conj chirp)
  std::shared_ptr<Plan> sub;    // pow2 plan for length m
};

bool factorize(Index n, std::vector<Index>& out) {
  out.clear();
  for (Index r : {4, 2, 3, 5, 7, 11, 13}) {
    while (n % r == 0) {
      out.push_back(r);
      n /= r;
    }
  }
  return n == 1;
}

// Recursive decimation-in-time step. Reads a strided line from `in`,
// leaves the spectrum contiguous in `out`.
void rec(const cd* in, cd* out, Index n, Index stride, Index twstep, const Plan& p, size_t depth) {
  if (n == 1) {
    out[0] = in[0];
    return;
  }
  const Index r = p.factors[depth];
  const Index m = n / r;
  for (Index j = 0; j < r; ++j) rec(in + j * stride, out + j * m, m, stride * r, twstep * r, p, depth + 1);

  const cd* w = p.twiddle.data();
  const Index nw = p.n;
  cd t[13];
  if (r == 2) {
    for (Index k = 0; k < m; ++k) {
      cd a = out[k];
      cd b = out[m + k] * w[(k * twstep) % nw];
      out[k] = a + b;
      out[m + k] = a - b;
    }
  } else if (r == 4) {
    for (Index k = 0; k < m; ++k) {
      cd a = out[k];
      cd b = out[m + k] * w[(k * twstep) % nw];
      cd c = out[2 * m + k] * w[(2 * k * twstep) % nw];
      cd d = out[3 * m + k] * w[(3 * k * twstep) % nw];
      cd ac = a + c, amc = a - c;
      cd bd = b + d;
      cd jbd = cd(-(b - d).imag(), (b - d).real());  // i*(b-d)
      out[k] = ac + bd;
      out[m + k] = amc - jbd;
      out[2 * m + k] = ac - bd;
      out[3 * m + k] = amc + jbd;
    }
  } else {
    for (Index k = 0; k < m; ++k) {
      t[0] = out[k];
      for (Index j = 1; j < r; ++j) t[j] = out[j * m + k] * w[(j * k * twstep) % nw];
      for (Index q = 0; q < r; ++q) {
        cd acc = t[0];
        for (Index j = 1; j < r; ++j) acc += t[j] * w[(j * q * m * twstep) % nw];
        out[q * m + k] = acc;
      }
    }
  }
}

std::shared_ptr<Plan> make_plan(Index n);

void run_contiguous(const Plan& p, const cd* in, cd* out);  // forward, unnormalized

std::shared_ptr<Plan> make_bluestein_plan(Index n) {
  auto p = std::make_shared<Plan>();
  p->n = n;
  p->norm = 1.0 / std::sqrt(static_cast<double>(n));
  p->bluestein = true;
  Index m = 1;
  while (m < 2 * n - 1) m *= 2;
  p->m = m;
  p->sub = make_plan(m);
  p->chirp.resize(n);
  for (Index j = 0; j < n; ++j) {
    // exp(-i*pi*j^2/n); reduce j^2 mod 2n to keep the angle well conditioned
    Index jj = (j * j) % (2 * n);
    double ang = -M_PI * static_cast<double>(jj) / static_cast<double>(n);
    p->chirp[j] = cd(std::cos(ang), std::sin(ang));
  }
  std::vector<cd> v(m, cd(0, 0));
  v[0] = std::conj(p->chirp[0]);
  for (Index t = 1; t < n; ++t) {
    v[t] = std::conj(p->chirp[t]);
    v[m - t] = std::conj(p->chirp[t]);
  }
  p->chirp_spec.resize(m);
  run_contiguous(*p->sub, v.data(), p->chirp_spec.data());
  // Fold the 1/m of the forward+inverse pow2 pair into the kernel spectrum.
  for (auto& c : p->chirp_spec) c /= static_cast<double>(m);
  return p;
}

std::shared_ptr<Plan> make_plan(Index n) {
  auto p = std::make_shared<Plan>();
  p->n = n;
  p->norm = 1.0 / std::sqrt(static_cast<double>(n));
  if (!factorize(n, p->factors)) return make_bluestein_plan(n);
  p->twiddle.resize(n);
  for (Index t = 0; t < n; ++t) {
    double ang = -2.0 * M_PI * static_cast<double>(t) / static_cast<double>(n);
    p->twiddle[t] = cd(std::cos(ang), std::sin(ang));
  }
  return p;
}

// Unnormalized forward DFT of a contiguous line (mixed-radix plans only).
void run_contiguous(const Plan& p, const cd* in, cd* out) { rec(in, out, p.n, 1, 1, p, 0); }

std::shared_ptr<Plan> get_plan(Index n) {
  static std::mutex mu;
  static std::map<Index, std::shared_ptr<Plan>> cache;
  std::lock_guard<std::mutex> lock(mu);
  auto it = cache.find(n);
  if (it != cache.end()) return it->second;
  auto p = make_plan(n);
  cache[n] = p;
  return p;
}

// One strided line, forward unnormalized DFT into `out` (contiguous).
void line_forward(const Plan& p, const cd* in, Index stride, cd* out, std::vector<cd>& scratch) {
  if (!p.bluestein) {
    rec(in, out, p.n, stride, 1, p, 0);
    return;
  }
  const Index n = p.n, m = p.m;
  scratch.assign(static_cast<size_t>(2 * m), cd(0, 0));
  cd* u = scratch.data();
  cd* uhat = scratch.data() + m;
  for (Index j = 0; j < n; ++j) u[j] = in[j * stride] * p.chirp[j];
  run_contiguous(*p.sub, u, uhat);
  for (Index t = 0; t < m; ++t) uhat[t] *= p.chirp_spec[t];
  // inverse pow2 transform via conjugation (scaling already folded in)
  for (Index t = 0; t < m; ++t) uhat[t] = std::conj(uhat[t]);
  run_contiguous(*p.sub, uhat, u);
  for (Index k = 0; k < n; ++k) out[k] = std::conj(u[k]) * p.chirp[k];
}

}  // namespace

void transform_inplace(cd* data, const Shape& shape, const std::vector<int>& axes, bool inverse) {
  (inverse ? g_inverse : g_forward).fetch_add(1, std::memory_order_relaxed);
  const Shape strides = strides_of(shape);
  const Index total = numel(shape);
  std::vector<cd> line_in, line_out, scratch;
  for (int axis : axes) {
    if (axis < 0 || axis >= static_cast<int>(shape.size()))
      throw std::invalid_argument("fft: axis " + std::to_string(axis) + " out of range for " +
                                  shape_str(shape));
    const Index n = shape[axis];
    const Index st = strides[axis];
    auto plan = get_plan(n);
    line_in.resize(static_cast<size_t>(n));
    line_out.resize(static_cast<size_t>(n));
    const Index lines = total / n;
    // Enumerate line bases: all index combinations with this axis at zero.
    for (Index li = 0; li < lines; ++li) {
      Index rem = li, base = 0;
      for (int a = static_cast<int>(shape.size()) - 1; a >= 0; --a) {
        if (a == axis) continue;
        Index e = shape[a];
        base += (rem % e) * strides[a];
        rem /= e;
      }
      cd* p = data + base;
      if (inverse) {
        for (Index t = 0; t < n; ++t) line_in[t] = std::conj(p[t * st]);
      } else {
        for (Index t = 0; t < n; ++t) line_in[t] = p[t * st];
      }
      line_forward(*plan, line_in.data(), 1, line_out.data(), scratch);
      const double s = plan->norm;
      if (inverse) {
        for (Index t = 0; t < n; ++t) p[t * st] = std::conj(line_out[t]) * s;
      } else {
        for (Index t = 0; t < n; ++t) p[t * st] = line_out[t] * s;
      }
    }
  }
}

ArrayC fft_nd(const ArrayC& x, const std::vector<int>& axes) {
  ArrayC out = x;
  transform_inplace(out.data(), out.shape(), axes, false);
  return out;
}

ArrayC ifft_nd(const ArrayC& x, const std::vector<int>& axes) {
  ArrayC out = x;
  transform_inplace(out.data(), out.shape(), axes, true);
  return out;
}

double flops(Index n) {
  return 5.0 * static_cast<double>(n) * std::log2(static_cast<double>(n));
}

Counters counters() { return {g_forward.load(), g_inverse.load()}; }

void reset_counters() {
  g_forward.store(0);
  g_inverse.store(0);
}

}  // namespace ffr::fft
