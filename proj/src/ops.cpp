#include "ffr/ops.hpp"

#include <cmath>
#include <cstring>

#include "ffr/conv.hpp"
#include "ffr/fft.hpp"

namespace ffr::ad {
namespace {

void check_same_tape(const Tensor& a, const Tensor& b) {
  if (a.tape != b.tape) throw std::invalid_argument("ops: tensors from different tapes");
}

// ---- broadcasting ----

Shape broadcast_shape(const Shape& a, const Shape& b) {
  size_t r = std::max(a.size(), b.size());
  Shape out(r);
  for (size_t i = 0; i < r; ++i) {
    Index ea = i < r - a.size() ? 1 : a[i - (r - a.size())];
    Index eb = i < r - b.size() ? 1 : b[i - (r - b.size())];
    if (ea != eb && ea != 1 && eb != 1)
      throw std::invalid_argument("ops: shapes not broadcastable " + shape_str(a) + " vs " +
                                  shape_str(b));
    out[i] = std::max(ea, eb);
  }
  return out;
}

// Row-major strides of `s` aligned to rank of `out`, zero on broadcast axes.
Shape aligned_strides(const Shape& s, const Shape& out) {
  Shape st = strides_of(s);
  Shape r(out.size(), 0);
  size_t off = out.size() - s.size();
  for (size_t i = 0; i < s.size(); ++i) r[off + i] = (s[i] == 1) ? 0 : st[i];
  return r;
}

template <class F>
ArrayD bc_apply(const ArrayD& a, const ArrayD& b, F f) {
  if (a.shape() == b.shape()) {
    ArrayD out(a.shape());
    for (Index i = 0; i < out.size(); ++i) out[i] = f(a[i], b[i]);
    return out;
  }
  Shape os = broadcast_shape(a.shape(), b.shape());
  ArrayD out(os);
  Shape sa = aligned_strides(a.shape(), os);
  Shape sb = aligned_strides(b.shape(), os);
  size_t r = os.size();
  Shape idx(r, 0);
  Index offa = 0, offb = 0;
  for (Index i = 0; i < out.size(); ++i) {
    out[i] = f(a[offa], b[offb]);
    for (int ax = static_cast<int>(r) - 1; ax >= 0; --ax) {
      idx[ax]++;
      offa += sa[ax];
      offb += sb[ax];
      if (idx[ax] < os[ax]) break;
      offa -= sa[ax] * os[ax];
      offb -= sb[ax] * os[ax];
      idx[ax] = 0;
    }
  }
  return out;
}

// Sums `big` down to `target` (the adjoint of broadcasting target up to big).
ArrayD reduce_to(const ArrayD& big, const Shape& target) {
  if (big.shape() == target) return big;
  ArrayD out(target);
  Shape st = aligned_strides(target, big.shape());
  const Shape& bs = big.shape();
  size_t r = bs.size();
  Shape idx(r, 0);
  Index off = 0;
  for (Index i = 0; i < big.size(); ++i) {
    out[off] += big[i];
    for (int ax = static_cast<int>(r) - 1; ax >= 0; --ax) {
      idx[ax]++;
      off += st[ax];
      if (idx[ax] < bs[ax]) break;
      off -= st[ax] * bs[ax];
      idx[ax] = 0;
    }
  }
  return out;
}

void accumulate(ArrayD& dst, const ArrayD& src) {
  for (Index i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

using BinGrad = void (*)(const ArrayD& a, const ArrayD& b, const ArrayD& out, const ArrayD& dy,
                         ArrayD* da, ArrayD* db);

Tensor binary_op(Tensor a, Tensor b, double (*f)(double, double), BinGrad grad) {
  check_same_tape(a, b);
  Tape& t = *a.tape;
  ArrayD out = bc_apply(t.node_value(a.id), t.node_value(b.id), f);
  double fl = static_cast<double>(out.size());
  int aid = a.id, bid = b.id;
  int id = t.add_node(
      std::move(out), {aid, bid},
      [aid, bid, grad](Tape& tt, int self) {
        const ArrayD& av = tt.node_value(aid);
        const ArrayD& bv = tt.node_value(bid);
        const ArrayD& ov = tt.node_value(self);
        const ArrayD& dy = tt.adjoint(self);
        ArrayD da_big, db_big;
        grad(av, bv, ov, dy, tt.needs_grad(aid) ? &da_big : nullptr,
             tt.needs_grad(bid) ? &db_big : nullptr);
        if (tt.needs_grad(aid)) accumulate(tt.adjoint(aid), reduce_to(da_big, av.shape()));
        if (tt.needs_grad(bid)) accumulate(tt.adjoint(bid), reduce_to(db_big, bv.shape()));
      },
      fl);
  return {&t, id};
}

}  // namespace

Tensor add(Tensor a, Tensor b) {
  return binary_op(
      a, b, [](double x, double y) { return x + y; },
      [](const ArrayD& av, const ArrayD& bv, const ArrayD&, const ArrayD& dy, ArrayD* da,
         ArrayD* db) {
        if (da) *da = dy;
        if (db) *db = dy;
        (void)av;
        (void)bv;
      });
}

Tensor sub(Tensor a, Tensor b) {
  return binary_op(
      a, b, [](double x, double y) { return x - y; },
      [](const ArrayD& av, const ArrayD& bv, const ArrayD&, const ArrayD& dy, ArrayD* da,
         ArrayD* db) {
        if (da) *da = dy;
        if (db) {
          *db = dy;
          for (Index i = 0; i < db->size(); ++i) (*db)[i] = -(*db)[i];
        }
        (void)av;
        (void)bv;
      });
}

Tensor mul(Tensor a, Tensor b) {
  return binary_op(
      a, b, [](double x, double y) { return x * y; },
      [](const ArrayD& av, const ArrayD& bv, const ArrayD&, const ArrayD& dy, ArrayD* da,
         ArrayD* db) {
        if (da) *da = bc_apply(dy, bv, [](double g, double y) { return g * y; });
        if (db) *db = bc_apply(dy, av, [](double g, double x) { return g * x; });
      });
}

Tensor div(Tensor a, Tensor b) {
  return binary_op(
      a, b, [](double x, double y) { return x / y; },
      [](const ArrayD& av, const ArrayD& bv, const ArrayD&, const ArrayD& dy, ArrayD* da,
         ArrayD* db) {
        if (da) *da = bc_apply(dy, bv, [](double g, double y) { return g / y; });
        if (db) {
          ArrayD t = bc_apply(av, bv, [](double x, double y) { return -x / (y * y); });
          *db = bc_apply(dy, t, [](double g, double v) { return g * v; });
        }
      });
}

namespace {

template <class Fwd, class Bwd>
Tensor unary_op(Tensor a, Fwd f, Bwd dfdx_times) {
  Tape& t = *a.tape;
  const ArrayD& av = t.node_value(a.id);
  ArrayD out(av.shape());
  for (Index i = 0; i < av.size(); ++i) out[i] = f(av[i]);
  int aid = a.id;
  int id = t.add_node(
      std::move(out), {aid},
      [aid, dfdx_times](Tape& tt, int self) {
        if (!tt.needs_grad(aid)) return;
        const ArrayD& av = tt.node_value(aid);
        const ArrayD& ov = tt.node_value(self);
        const ArrayD& dy = tt.adjoint(self);
        ArrayD& da = tt.adjoint(aid);
        for (Index i = 0; i < da.size(); ++i) da[i] += dfdx_times(av[i], ov[i], dy[i]);
      },
      static_cast<double>(av.size()));
  return {&t, id};
}

}  // namespace

Tensor scale(Tensor a, double s) {
  return unary_op(
      a, [s](double x) { return s * x; },
      [s](double, double, double g) { return s * g; });
}

Tensor add_scalar(Tensor a, double s) {
  return unary_op(
      a, [s](double x) { return x + s; }, [](double, double, double g) { return g; });
}

Tensor neg(Tensor a) { return scale(a, -1.0); }

Tensor sqrt_op(Tensor a) {
  return unary_op(
      a, [](double x) { return std::sqrt(x); },
      [](double, double y, double g) { return y > 0 ? g / (2 * y) : 0.0; });
}

Tensor square(Tensor a) {
  return unary_op(
      a, [](double x) { return x * x; },
      [](double x, double, double g) { return 2 * x * g; });
}

Tensor relu(Tensor a) { return leaky_relu(a, 0.0); }

Tensor leaky_relu(Tensor a, double slope) {
  if (slope < 0 || slope >= 1)
    throw std::invalid_argument("leaky_relu: slope must be in [0, 1), got " +
                                std::to_string(slope));
  return unary_op(
      a, [slope](double x) { return x >= 0 ? x : slope * x; },
      [slope](double x, double, double g) { return x >= 0 ? g : slope * g; });
}

Tensor sum_all(Tensor a) {
  Tape& t = *a.tape;
  const ArrayD& av = t.node_value(a.id);
  double s = 0;
  for (Index i = 0; i < av.size(); ++i) s += av[i];
  int aid = a.id;
  int id = t.add_node(
      ArrayD({1}, s), {aid},
      [aid](Tape& tt, int self) {
        if (!tt.needs_grad(aid)) return;
        double g = tt.adjoint(self)[0];
        ArrayD& da = tt.adjoint(aid);
        for (Index i = 0; i < da.size(); ++i) da[i] += g;
      },
      static_cast<double>(av.size()));
  return {&t, id};
}

Tensor mean_all(Tensor a) {
  Index n = a.tape->node_value(a.id).size();
  return scale(sum_all(a), 1.0 / static_cast<double>(n));
}

Tensor sum_axes(Tensor a, std::vector<int> axes) {
  Tape& t = *a.tape;
  const ArrayD& av = t.node_value(a.id);
  Shape os = av.shape();
  for (int ax : axes) os.at(ax) = 1;
  ArrayD out = reduce_to(av, os);
  int aid = a.id;
  int id = t.add_node(
      std::move(out), {aid},
      [aid](Tape& tt, int self) {
        if (!tt.needs_grad(aid)) return;
        const ArrayD& dy = tt.adjoint(self);
        ArrayD& da = tt.adjoint(aid);
        // broadcast dy back over the reduced axes
        ArrayD g = bc_apply(ArrayD(da.shape(), 0.0), dy, [](double, double v) { return v; });
        accumulate(da, g);
      },
      static_cast<double>(av.size()));
  return {&t, id};
}

Tensor instance_norm(Tensor x, Tensor gamma, Tensor beta, double eps) {
  check_same_tape(x, gamma);
  check_same_tape(x, beta);
  Tape& t = *x.tape;
  const ArrayD& xv = t.node_value(x.id);
  if (xv.rank() < 3)
    throw std::invalid_argument("instance_norm: need (B, C, spatial...), got " +
                                shape_str(xv.shape()));
  const Index B = xv.extent(0), C = xv.extent(1);
  const Index S = xv.size() / (B * C);
  const ArrayD& gv = t.node_value(gamma.id);
  const ArrayD& bv = t.node_value(beta.id);
  if (gv.size() != C || bv.size() != C)
    throw std::invalid_argument("instance_norm: scale/shift must have one entry per channel (" +
                                std::to_string(C) + "), got " + shape_str(gv.shape()) + " and " +
                                shape_str(bv.shape()));

  ArrayD out(xv.shape());
  ArrayD mu({B, C});
  ArrayD istd({B, C});
  for (Index b = 0; b < B; ++b)
    for (Index c = 0; c < C; ++c) {
      const double* px = xv.data() + (b * C + c) * S;
      double m = 0;
      for (Index i = 0; i < S; ++i) m += px[i];
      m /= static_cast<double>(S);
      double var = 0;
      for (Index i = 0; i < S; ++i) {
        double d = px[i] - m;
        var += d * d;
      }
      var /= static_cast<double>(S);
      double is = 1.0 / std::sqrt(var + eps);
      mu(b, c) = m;
      istd(b, c) = is;
      double* po = out.data() + (b * C + c) * S;
      const double g = gv[c], bb = bv[c];
      for (Index i = 0; i < S; ++i) po[i] = (px[i] - m) * is * g + bb;
    }

  int xid = x.id, gid = gamma.id, bid = beta.id;
  int id = t.add_node(
      std::move(out), {xid, gid, bid},
      [xid, gid, bid, B, C, S, mu = std::move(mu), istd = std::move(istd)](Tape& tt, int self) {
        const ArrayD& xv = tt.node_value(xid);
        const ArrayD& gv = tt.node_value(gid);
        const ArrayD& dy = tt.adjoint(self);
        const bool needx = tt.needs_grad(xid);
        ArrayD* dg = tt.needs_grad(gid) ? &tt.adjoint(gid) : nullptr;
        ArrayD* db = tt.needs_grad(bid) ? &tt.adjoint(bid) : nullptr;
        ArrayD* dx = needx ? &tt.adjoint(xid) : nullptr;
        for (Index b = 0; b < B; ++b)
          for (Index c = 0; c < C; ++c) {
            const double* px = xv.data() + (b * C + c) * S;
            const double* pdy = dy.data() + (b * C + c) * S;
            const double m = mu(b, c), is = istd(b, c);
            double sum_dy = 0, sum_dy_xhat = 0;
            for (Index i = 0; i < S; ++i) {
              double xhat = (px[i] - m) * is;
              sum_dy += pdy[i];
              sum_dy_xhat += pdy[i] * xhat;
            }
            if (db) (*db)[c] += sum_dy;
            if (dg) (*dg)[c] += sum_dy_xhat;
            if (dx) {
              double* pdx = dx->data() + (b * C + c) * S;
              const double g = gv[c];
              const double mdy = sum_dy / static_cast<double>(S);
              const double mdyx = sum_dy_xhat / static_cast<double>(S);
              for (Index i = 0; i < S; ++i) {
                double xhat = (px[i] - m) * is;
                pdx[i] += g * is * (pdy[i] - mdy - xhat * mdyx);
              }
            }
          }
      },
      5.0 * static_cast<double>(xv.size()));
  return {&t, id};
}

Tensor concat(Tensor a, Tensor b, int axis) {
  check_same_tape(a, b);
  Tape& t = *a.tape;
  const ArrayD& av = t.node_value(a.id);
  const ArrayD& bv = t.node_value(b.id);
  if (av.rank() != bv.rank())
    throw std::invalid_argument("concat: rank mismatch " + shape_str(av.shape()) + " vs " +
                                shape_str(bv.shape()));
  for (Index ax = 0; ax < av.rank(); ++ax)
    if (ax != axis && av.extent(ax) != bv.extent(ax))
      throw std::invalid_argument("concat: extents differ off-axis " + shape_str(av.shape()) +
                                  " vs " + shape_str(bv.shape()));
  Shape os = av.shape();
  os[axis] += bv.extent(axis);
  ArrayD out(os);
  // views as (outer, axis, inner)
  Index outer = 1, inner = 1;
  for (Index ax = 0; ax < axis; ++ax) outer *= os[ax];
  for (Index ax = axis + 1; ax < av.rank(); ++ax) inner *= os[ax];
  const Index ea = av.extent(axis), eb = bv.extent(axis);
  for (Index o = 0; o < outer; ++o) {
    std::memcpy(out.data() + (o * (ea + eb)) * inner, av.data() + o * ea * inner,
                sizeof(double) * ea * inner);
    std::memcpy(out.data() + (o * (ea + eb) + ea) * inner, bv.data() + o * eb * inner,
                sizeof(double) * eb * inner);
  }
  int aid = a.id, bid = b.id;
  int id = t.add_node(
      std::move(out), {aid, bid},
      [aid, bid, outer, inner, ea, eb](Tape& tt, int self) {
        const ArrayD& dy = tt.adjoint(self);
        if (tt.needs_grad(aid)) {
          ArrayD& da = tt.adjoint(aid);
          for (Index o = 0; o < outer; ++o) {
            const double* s = dy.data() + (o * (ea + eb)) * inner;
            double* d = da.data() + o * ea * inner;
            for (Index i = 0; i < ea * inner; ++i) d[i] += s[i];
          }
        }
        if (tt.needs_grad(bid)) {
          ArrayD& db = tt.adjoint(bid);
          for (Index o = 0; o < outer; ++o) {
            const double* s = dy.data() + (o * (ea + eb) + ea) * inner;
            double* d = db.data() + o * eb * inner;
            for (Index i = 0; i < eb * inner; ++i) d[i] += s[i];
          }
        }
      },
      0.0);
  return {&t, id};
}

Tensor narrow(Tensor a, int axis, Index start, Index len) {
  Tape& t = *a.tape;
  const ArrayD& av = t.node_value(a.id);
  if (axis < 0 || axis >= av.rank() || start < 0 || start + len > av.extent(axis))
    throw std::invalid_argument("narrow: range [" + std::to_string(start) + "," +
                                std::to_string(start + len) + ") out of bounds on axis " +
                                std::to_string(axis) + " of " + shape_str(av.shape()));
  Shape os = av.shape();
  os[axis] = len;
  Index outer = 1, inner = 1;
  for (Index ax = 0; ax < axis; ++ax) outer *= os[ax];
  for (Index ax = axis + 1; ax < av.rank(); ++ax) inner *= os[ax];
  const Index ea = av.extent(axis);
  ArrayD out(os);
  for (Index o = 0; o < outer; ++o)
    std::memcpy(out.data() + o * len * inner, av.data() + (o * ea + start) * inner,
                sizeof(double) * len * inner);
  int aid = a.id;
  int id = t.add_node(
      std::move(out), {aid},
      [aid, outer, inner, ea, start, len](Tape& tt, int self) {
        if (!tt.needs_grad(aid)) return;
        const ArrayD& dy = tt.adjoint(self);
        ArrayD& da = tt.adjoint(aid);
        for (Index o = 0; o < outer; ++o) {
          const double* s = dy.data() + o * len * inner;
          double* d = da.data() + (o * ea + start) * inner;
          for (Index i = 0; i < len * inner; ++i) d[i] += s[i];
        }
      },
      0.0);
  return {&t, id};
}

Tensor reshape(Tensor a, Shape shape) {
  Tape& t = *a.tape;
  ArrayD out = t.node_value(a.id).reshaped(std::move(shape));
  int aid = a.id;
  int id = t.add_node(
      std::move(out), {aid},
      [aid](Tape& tt, int self) {
        if (!tt.needs_grad(aid)) return;
        const ArrayD& dy = tt.adjoint(self);
        ArrayD& da = tt.adjoint(aid);
        for (Index i = 0; i < da.size(); ++i) da[i] += dy[i];
      },
      0.0);
  return {&t, id};
}

ConvOpt same_conv(const Shape& kernel, const Shape& dilation) {
  ConvOpt o;
  o.dilation = dilation.empty() ? Shape(kernel.size(), 1) : dilation;
  o.pad_lo.resize(kernel.size());
  o.pad_hi.resize(kernel.size());
  for (size_t a = 0; a < kernel.size(); ++a) {
    Index span = (kernel[a] - 1) * o.dilation[a];
    o.pad_lo[a] = span / 2;
    o.pad_hi[a] = span - o.pad_lo[a];
  }
  return o;
}

Tensor conv_nd(Tensor x, Tensor w, std::optional<Tensor> bias, const ConvOpt& opt) {
  check_same_tape(x, w);
  Tape& t = *x.tape;
  const ArrayD& xv = t.node_value(x.id);
  const ArrayD& wv = t.node_value(w.id);
  const Index spatial = xv.rank() - 2;
  if (spatial < 1 || spatial > 3)
    throw std::invalid_argument("conv: input must be (B, C, spatial...) with 1..3 spatial axes, got " +
                                shape_str(xv.shape()));
  if (wv.rank() != spatial + 2)
    throw std::invalid_argument("conv: weight rank must be spatial rank + 2, got weight " +
                                shape_str(wv.shape()) + " for input " + shape_str(xv.shape()));
  if (wv.extent(1) != xv.extent(1))
    throw std::invalid_argument("conv: input has " + std::to_string(xv.extent(1)) +
                                " channels but weight expects " + std::to_string(wv.extent(1)) +
                                " (input " + shape_str(xv.shape()) + ", weight " +
                                shape_str(wv.shape()) + ")");
  Shape in_sp(xv.shape().begin() + 2, xv.shape().end());
  Shape kernel(wv.shape().begin() + 2, wv.shape().end());
  convk::Geom g = convk::Geom::make(in_sp, kernel, opt.stride, opt.dilation, opt.pad_lo, opt.pad_hi);

  const double* pb = nullptr;
  int bias_id = -1;
  if (bias) {
    check_same_tape(x, *bias);
    const ArrayD& bvv = t.node_value(bias->id);
    if (bvv.size() != wv.extent(0))
      throw std::invalid_argument("conv: bias size " + std::to_string(bvv.size()) +
                                  " != out channels " + std::to_string(wv.extent(0)));
    pb = bvv.data();
    bias_id = bias->id;
  }
  ArrayD out = convk::forward(xv, wv, pb, g);
  const Index B = xv.extent(0);
  // 2*B*Co*Ci*K*P  (wv.size() = Co*Ci*K)
  double macs = 2.0 * static_cast<double>(B) * static_cast<double>(wv.size()) *
                static_cast<double>(numel(g.out_sp));
  double fl = macs + (pb ? static_cast<double>(B * wv.extent(0) * numel(g.out_sp)) : 0.0);

  std::vector<int> parents = {x.id, w.id};
  if (bias_id >= 0) parents.push_back(bias_id);
  int xid = x.id, wid = w.id;
  int id = t.add_node(
      std::move(out), std::move(parents),
      [xid, wid, bias_id, g, B](Tape& tt, int self) {
        const ArrayD& dy = tt.adjoint(self);
        const ArrayD& xv = tt.node_value(xid);
        const ArrayD& wv = tt.node_value(wid);
        if (tt.needs_grad(xid))
          accumulate(tt.adjoint(xid), convk::backward_input(wv, dy, g, B));
        if (tt.needs_grad(wid))
          accumulate(tt.adjoint(wid), convk::backward_weight(xv, dy, g, wv.shape()));
        if (bias_id >= 0 && tt.needs_grad(bias_id)) {
          ArrayD db = convk::backward_bias(dy);
          ArrayD& acc = tt.adjoint(bias_id);
          for (Index i = 0; i < acc.size(); ++i) acc[i] += db[i];
        }
      },
      fl);
  return {&t, id};
}

Tensor conv_transpose2(Tensor x, Tensor w, std::optional<Tensor> bias) {
  check_same_tape(x, w);
  Tape& t = *x.tape;
  const ArrayD& xv = t.node_value(x.id);
  const ArrayD& wv = t.node_value(w.id);
  const Index spatial = xv.rank() - 2;
  if (wv.rank() != spatial + 2)
    throw std::invalid_argument("conv_transpose2: weight rank mismatch, weight " +
                                shape_str(wv.shape()) + " input " + shape_str(xv.shape()));
  for (Index a = 2; a < wv.rank(); ++a)
    if (wv.extent(a) != 2)
      throw std::invalid_argument(
          "conv_transpose2: only stride 2 = kernel 2 is supported, got kernel " +
          shape_str(wv.shape()));
  if (wv.extent(0) != xv.extent(1))
    throw std::invalid_argument("conv_transpose2: input has " + std::to_string(xv.extent(1)) +
                                " channels but weight expects " + std::to_string(wv.extent(0)));
  const double* pb = nullptr;
  int bias_id = -1;
  if (bias) {
    pb = t.node_value(bias->id).data();
    bias_id = bias->id;
  }
  ArrayD out = convk::transpose2_forward(xv, wv, pb);
  Index P = 1;
  for (Index a = 2; a < xv.rank(); ++a) P *= xv.extent(a);
  double fl = 2.0 * static_cast<double>(xv.extent(0)) * wv.size() * P;
  std::vector<int> parents = {x.id, w.id};
  if (bias_id >= 0) parents.push_back(bias_id);
  int xid = x.id, wid = w.id;
  int id = t.add_node(
      std::move(out), std::move(parents),
      [xid, wid, bias_id](Tape& tt, int self) {
        const ArrayD& dy = tt.adjoint(self);
        const ArrayD& xv = tt.node_value(xid);
        const ArrayD& wv = tt.node_value(wid);
        if (tt.needs_grad(xid))
          accumulate(tt.adjoint(xid), convk::transpose2_backward_input(wv, dy));
        if (tt.needs_grad(wid))
          accumulate(tt.adjoint(wid), convk::transpose2_backward_weight(xv, dy, wv.shape()));
        if (bias_id >= 0 && tt.needs_grad(bias_id)) {
          ArrayD db = convk::backward_bias(dy);
          ArrayD& acc = tt.adjoint(bias_id);
          for (Index i = 0; i < acc.size(); ++i) acc[i] += db[i];
        }
      },
      fl);
  return {&t, id};
}

namespace {

// Iterates output position <-> window mapping shared by pool/upsample.
struct WindowMap {
  Shape in_sp, out_sp, win;
  Index B_C;     // batch*channels
  Index in_size, out_size, wsize;
  Shape in_strides;

  static WindowMap make(const ArrayD& x, const Shape& win, bool pool) {
    WindowMap m;
    m.in_sp.assign(x.shape().begin() + 2, x.shape().end());
    if (win.size() != m.in_sp.size())
      throw std::invalid_argument("pool/upsample: window rank mismatch for " +
                                  shape_str(x.shape()));
    m.win = win;
    m.out_sp.resize(m.in_sp.size());
    for (size_t a = 0; a < m.in_sp.size(); ++a) {
      if (pool) {
        if (m.in_sp[a] % win[a] != 0)
          throw std::invalid_argument("avg_pool: extent " + std::to_string(m.in_sp[a]) +
                                      " not divisible by window " + std::to_string(win[a]) +
                                      " on axis " + std::to_string(a));
        m.out_sp[a] = m.in_sp[a] / win[a];
      } else {
        m.out_sp[a] = m.in_sp[a] * win[a];
      }
    }
    m.B_C = x.extent(0) * x.extent(1);
    m.in_size = numel(m.in_sp);
    m.out_size = numel(m.out_sp);
    m.wsize = numel(win);
    m.in_strides = strides_of(m.in_sp);
    return m;
  }
};

}  // namespace

Tensor avg_pool(Tensor x, Shape window) {
  Tape& t = *x.tape;
  const ArrayD& xv = t.node_value(x.id);
  WindowMap m = WindowMap::make(xv, window, true);
  Shape os = {xv.extent(0), xv.extent(1)};
  for (Index e : m.out_sp) os.push_back(e);
  ArrayD out(os);
  const double inv = 1.0 / static_cast<double>(m.wsize);
  Shape oc(m.out_sp.size()), wc(m.win.size());
  for (Index bc = 0; bc < m.B_C; ++bc) {
    const double* px = xv.data() + bc * m.in_size;
    double* po = out.data() + bc * m.out_size;
    for (Index op = 0; op < m.out_size; ++op) {
      Index rem = op;
      for (int a = static_cast<int>(m.out_sp.size()) - 1; a >= 0; --a) {
        oc[a] = rem % m.out_sp[a];
        rem /= m.out_sp[a];
      }
      double s = 0;
      for (Index wi = 0; wi < m.wsize; ++wi) {
        Index wrem = wi, off = 0;
        for (int a = static_cast<int>(m.win.size()) - 1; a >= 0; --a) {
          wc[a] = wrem % m.win[a];
          wrem /= m.win[a];
        }
        for (size_t a = 0; a < m.win.size(); ++a)
          off += (oc[a] * m.win[a] + wc[a]) * m.in_strides[a];
        s += px[off];
      }
      po[op] = s * inv;
    }
  }
  int xid = x.id;
  int id = t.add_node(
      std::move(out), {xid},
      [xid, m](Tape& tt, int self) {
        if (!tt.needs_grad(xid)) return;
        const ArrayD& dy = tt.adjoint(self);
        ArrayD& dx = tt.adjoint(xid);
        const double inv = 1.0 / static_cast<double>(m.wsize);
        Shape oc(m.out_sp.size()), wc(m.win.size());
        for (Index bc = 0; bc < m.B_C; ++bc) {
          const double* pdy = dy.data() + bc * m.out_size;
          double* pdx = dx.data() + bc * m.in_size;
          for (Index op = 0; op < m.out_size; ++op) {
            Index rem = op;
            for (int a = static_cast<int>(m.out_sp.size()) - 1; a >= 0; --a) {
              oc[a] = rem % m.out_sp[a];
              rem /= m.out_sp[a];
            }
            const double g = pdy[op] * inv;
            for (Index wi = 0; wi < m.wsize; ++wi) {
              Index wrem = wi, off = 0;
              for (int a = static_cast<int>(m.win.size()) - 1; a >= 0; --a) {
                wc[a] = wrem % m.win[a];
                wrem /= m.win[a];
              }
              for (size_t a = 0; a < m.win.size(); ++a)
                off += (oc[a] * m.win[a] + wc[a]) * m.in_strides[a];
              pdx[off] += g;
            }
          }
        }
      },
      static_cast<double>(xv.size()));
  return {&t, id};
}

Tensor upsample_nn(Tensor x, Shape factor) {
  Tape& t = *x.tape;
  const ArrayD& xv = t.node_value(x.id);
  WindowMap m = WindowMap::make(xv, factor, false);
  Shape os = {xv.extent(0), xv.extent(1)};
  for (Index e : m.out_sp) os.push_back(e);
  ArrayD out(os);
  Shape oc(m.out_sp.size());
  const Shape out_strides = strides_of(m.out_sp);
  for (Index bc = 0; bc < m.B_C; ++bc) {
    const double* px = xv.data() + bc * m.in_size;
    double* po = out.data() + bc * m.out_size;
    for (Index op = 0; op < m.out_size; ++op) {
      Index rem = op, off = 0;
      for (int a = static_cast<int>(m.out_sp.size()) - 1; a >= 0; --a) {
        oc[a] = rem % m.out_sp[a];
        rem /= m.out_sp[a];
      }
      for (size_t a = 0; a < m.out_sp.size(); ++a) off += (oc[a] / m.win[a]) * m.in_strides[a];
      po[op] = px[off];
    }
  }
  int xid = x.id;
  int id = t.add_node(
      std::move(out), {xid},
      [xid, m](Tape& tt, int self) {
        if (!tt.needs_grad(xid)) return;
        const ArrayD& dy = tt.adjoint(self);
        ArrayD& dx = tt.adjoint(xid);
        Shape oc(m.out_sp.size());
        for (Index bc = 0; bc < m.B_C; ++bc) {
          const double* pdy = dy.data() + bc * m.out_size;
          double* pdx = dx.data() + bc * m.in_size;
          for (Index op = 0; op < m.out_size; ++op) {
            Index rem = op, off = 0;
            for (int a = static_cast<int>(m.out_sp.size()) - 1; a >= 0; --a) {
              oc[a] = rem % m.out_sp[a];
              rem /= m.out_sp[a];
            }
            for (size_t a = 0; a < m.out_sp.size(); ++a) off += (oc[a] / m.win[a]) * m.in_strides[a];
            pdx[off] += pdy[op];
          }
        }
      },
      static_cast<double>(out.size()));
  return {&t, id};
}

namespace {

// (B, 2C, sp...) <-> batched complex (B*C, sp...), then transform in place.
ArrayD fft_pairs_value(const ArrayD& xv, bool inverse) {
  if (xv.rank() < 3 || xv.extent(1) % 2 != 0)
    throw std::invalid_argument("fft_pairs: need (B, 2C, spatial...) with even channels, got " +
                                shape_str(xv.shape()));
  const Index B = xv.extent(0), C2 = xv.extent(1), C = C2 / 2;
  Index S = 1;
  for (Index a = 2; a < xv.rank(); ++a) S *= xv.extent(a);
  Shape csp = {B * C};
  for (Index a = 2; a < xv.rank(); ++a) csp.push_back(xv.extent(a));
  ArrayC z(csp);
  for (Index b = 0; b < B; ++b)
    for (Index c = 0; c < C; ++c) {
      const double* re = xv.data() + (b * C2 + c) * S;
      const double* im = xv.data() + (b * C2 + C + c) * S;
      cdouble* pz = z.data() + (b * C + c) * S;
      for (Index i = 0; i < S; ++i) pz[i] = cdouble(re[i], im[i]);
    }
  std::vector<int> axes;
  for (int a = 1; a < static_cast<int>(csp.size()); ++a) axes.push_back(a);
  fft::transform_inplace(z.data(), csp, axes, inverse);
  ArrayD out(xv.shape());
  for (Index b = 0; b < B; ++b)
    for (Index c = 0; c < C; ++c) {
      double* re = out.data() + (b * C2 + c) * S;
      double* im = out.data() + (b * C2 + C + c) * S;
      const cdouble* pz = z.data() + (b * C + c) * S;
      for (Index i = 0; i < S; ++i) {
        re[i] = pz[i].real();
        im[i] = pz[i].imag();
      }
    }
  return out;
}

Tensor fft_pairs_op(Tensor x, bool inverse) {
  Tape& t = *x.tape;
  const ArrayD& xv = t.node_value(x.id);
  ArrayD out = fft_pairs_value(xv, inverse);
  Index S = 1;
  for (Index a = 2; a < xv.rank(); ++a) S *= xv.extent(a);
  double fl = static_cast<double>(xv.extent(0)) * (xv.extent(1) / 2) * fft::flops(S);
  int xid = x.id;
  int id = t.add_node(
      std::move(out), {xid},
      [xid, inverse](Tape& tt, int self) {
        if (!tt.needs_grad(xid)) return;
        // unitary => the adjoint is the opposite-direction transform
        accumulate(tt.adjoint(xid), fft_pairs_value(tt.adjoint(self), !inverse));
      },
      fl);
  return {&t, id};
}

}  // namespace

Tensor fft_pairs(Tensor x) { return fft_pairs_op(x, false); }
Tensor ifft_pairs(Tensor x) { return fft_pairs_op(x, true); }

Tensor cmul_pairs(Tensor a, Tensor b, bool conj_a) {
  const Index Ca = a.shape().at(1), Cb = b.shape().at(1);
  if (Ca != Cb || Ca % 2 != 0)
    throw std::invalid_argument("cmul_pairs: channel mismatch " + shape_str(a.shape()) + " vs " +
                                shape_str(b.shape()));
  const Index C = Ca / 2;
  Tensor ar = narrow(a, 1, 0, C), ai = narrow(a, 1, C, C);
  Tensor br = narrow(b, 1, 0, C), bi = narrow(b, 1, C, C);
  if (conj_a) {
    // (ar - i ai)(br + i bi) = (ar br + ai bi) + i (ar bi - ai br)
    Tensor re = add(mul(ar, br), mul(ai, bi));
    Tensor im = sub(mul(ar, bi), mul(ai, br));
    return concat(re, im, 1);
  }
  Tensor re = sub(mul(ar, br), mul(ai, bi));
  Tensor im = add(mul(ar, bi), mul(ai, br));
  return concat(re, im, 1);
}

Tensor abs_pairs(Tensor x) {
  const Index C2 = x.shape().at(1);
  if (C2 % 2 != 0) throw std::invalid_argument("abs_pairs: odd channel count " + shape_str(x.shape()));
  const Index C = C2 / 2;
  Tensor re = narrow(x, 1, 0, C), im = narrow(x, 1, C, C);
  return sqrt_op(add(square(re), square(im)));
}

Tensor rss_pairs(Tensor x) {
  Tensor s = sum_axes(square(x), {0, 1});
  return sqrt_op(s);
}

Tensor dss_normalize(Tensor u, double eps) {
  Tensor r = rss_pairs(u);
  // max(r, eps) without a dedicated primitive: r + eps keeps the guard smooth
  // near zero and changes normalized magnitudes by O(eps).
  Tensor denom = add_scalar(r, eps);
  return div(u, denom);
}

// ---- value-level pair helpers ----

ArrayC channels_to_complex(const ArrayD& f) {
  if (f.rank() < 2 || f.extent(1) % 2 != 0)
    throw std::invalid_argument("channels_to_complex: need even channel count, got " +
                                shape_str(f.shape()));
  const Index B = f.extent(0), C2 = f.extent(1), C = C2 / 2;
  Index S = 1;
  for (Index a = 2; a < f.rank(); ++a) S *= f.extent(a);
  Shape os = f.shape();
  os[1] = C;
  ArrayC z(os);
  for (Index b = 0; b < B; ++b)
    for (Index c = 0; c < C; ++c) {
      const double* re = f.data() + (b * C2 + c) * S;
      const double* im = f.data() + (b * C2 + C + c) * S;
      cdouble* pz = z.data() + (b * C + c) * S;
      for (Index i = 0; i < S; ++i) pz[i] = cdouble(re[i], im[i]);
    }
  return z;
}

ArrayD complex_to_channels(const ArrayC& z) {
  const Index B = z.extent(0), C = z.extent(1);
  Index S = 1;
  for (Index a = 2; a < z.rank(); ++a) S *= z.extent(a);
  Shape os = z.shape();
  os[1] = 2 * C;
  ArrayD f(os);
  for (Index b = 0; b < B; ++b)
    for (Index c = 0; c < C; ++c) {
      double* re = f.data() + (b * 2 * C + c) * S;
      double* im = f.data() + (b * 2 * C + C + c) * S;
      const cdouble* pz = z.data() + (b * C + c) * S;
      for (Index i = 0; i < S; ++i) {
        re[i] = pz[i].real();
        im[i] = pz[i].imag();
      }
    }
  return f;
}

ArrayD coil_batch_pairs(const ArrayC& k) {
  const Index N = k.extent(0);
  Index S = k.size() / N;
  Shape os = {N, 2};
  for (Index a = 1; a < k.rank(); ++a) os.push_back(k.extent(a));
  ArrayD out(os);
  for (Index n = 0; n < N; ++n) {
    const cdouble* pz = k.data() + n * S;
    double* re = out.data() + n * 2 * S;
    double* im = re + S;
    for (Index i = 0; i < S; ++i) {
      re[i] = pz[i].real();
      im[i] = pz[i].imag();
    }
  }
  return out;
}

ArrayC complex_from_coil_batch(const ArrayD& x) {
  const Index N = x.extent(0);
  if (x.extent(1) != 2)
    throw std::invalid_argument("complex_from_coil_batch: need (N, 2, sp...), got " +
                                shape_str(x.shape()));
  Index S = x.size() / (2 * N);
  Shape os = {N};
  for (Index a = 2; a < x.rank(); ++a) os.push_back(x.extent(a));
  ArrayC z(os);
  for (Index n = 0; n < N; ++n) {
    const double* re = x.data() + n * 2 * S;
    const double* im = re + S;
    cdouble* pz = z.data() + n * S;
    for (Index i = 0; i < S; ++i) pz[i] = cdouble(re[i], im[i]);
  }
  return z;
}

ArrayD coil_channel_pairs(const ArrayC& k) {
  const Index N = k.extent(0);
  Index S = k.size() / N;
  Shape os = {1, 2 * N};
  for (Index a = 1; a < k.rank(); ++a) os.push_back(k.extent(a));
  ArrayD out(os);
  for (Index n = 0; n < N; ++n) {
    const cdouble* pz = k.data() + n * S;
    double* re = out.data() + n * S;
    double* im = out.data() + (N + n) * S;
    for (Index i = 0; i < S; ++i) {
      re[i] = pz[i].real();
      im[i] = pz[i].imag();
    }
  }
  return out;
}

ArrayC complex_from_coil_channels(const ArrayD& x) {
  if (x.extent(0) != 1 || x.extent(1) % 2 != 0)
    throw std::invalid_argument("complex_from_coil_channels: need (1, 2N, sp...), got " +
                                shape_str(x.shape()));
  const Index N = x.extent(1) / 2;
  Index S = x.size() / (2 * N);
  Shape os = {N};
  for (Index a = 2; a < x.rank(); ++a) os.push_back(x.extent(a));
  ArrayC z(os);
  for (Index n = 0; n < N; ++n) {
    const double* re = x.data() + n * S;
    const double* im = x.data() + (N + n) * S;
    cdouble* pz = z.data() + n * S;
    for (Index i = 0; i < S; ++i) pz[i] = cdouble(re[i], im[i]);
  }
  return z;
}

}  // namespace ffr::ad
