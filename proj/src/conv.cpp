#include "ffr/conv.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cstring>

namespace ffr::convk {
namespace {

using MatRM = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapRM = Eigen::Map<const MatRM>;
using MapRMmut = Eigen::Map<MatRM>;

constexpr Index kTileBytes = 4 << 20;

void decode(Index p, const Shape& extents, Shape& c) {
  for (int a = static_cast<int>(extents.size()) - 1; a >= 0; --a) {
    c[a] = p % extents[a];
    p /= extents[a];
  }
}

Index tile_size(Index rows) {
  Index t = kTileBytes / (8 * std::max<Index>(rows, 1));
  return std::max<Index>(256, t);
}

// Fills col(ci*K + k, t) = x value feeding output position p0+t through kernel
// offset k, zero where the tap lands in padding. col is row-major so each
// (row, inner-axis run) is contiguous.
void im2col(const double* x, const Geom& g, Index ci_count, Index p0, Index tn, MatRM& col) {
  const Index r = static_cast<Index>(g.in_sp.size());
  const Index in_size = numel(g.in_sp);
  const Shape in_strides = strides_of(g.in_sp);
  const Index K = numel(g.kernel);
  const Index Wout = g.out_sp[r - 1];
  const Index Win = g.in_sp[r - 1];
  const Index sx = g.stride[r - 1];
  Shape kc(r), oc(r);
  for (Index ci = 0; ci < ci_count; ++ci) {
    const double* xc = x + ci * in_size;
    for (Index k = 0; k < K; ++k) {
      decode(k, g.kernel, kc);
      const Index xoff = kc[r - 1] * g.dilation[r - 1] - g.pad_lo[r - 1];
      double* dst = col.data() + (ci * K + k) * col.cols();
      Index p = p0;
      while (p < p0 + tn) {
        const Index ox0 = p % Wout;
        const Index outer = p / Wout;
        const Index nrun = std::min(Wout - ox0, p0 + tn - p);
        double* d = dst + (p - p0);
        decode(outer * Wout, g.out_sp, oc);
        Index base = 0;
        bool ok = true;
        for (Index a = 0; a + 1 < r; ++a) {
          Index ix = oc[a] * g.stride[a] + kc[a] * g.dilation[a] - g.pad_lo[a];
          if (ix < 0 || ix >= g.in_sp[a]) {
            ok = false;
            break;
          }
          base += ix * in_strides[a];
        }
        if (!ok) {
          std::memset(d, 0, sizeof(double) * nrun);
        } else if (sx == 1) {
          // valid ox where 0 <= ox + xoff < Win
          Index lo = std::clamp(-xoff, ox0, ox0 + nrun);
          Index hi = std::clamp(Win - xoff, ox0, ox0 + nrun);
          if (lo > ox0) std::memset(d, 0, sizeof(double) * (lo - ox0));
          if (hi > lo) std::memcpy(d + (lo - ox0), xc + base + lo + xoff, sizeof(double) * (hi - lo));
          if (ox0 + nrun > hi) std::memset(d + (hi - ox0), 0, sizeof(double) * (ox0 + nrun - hi));
        } else {
          for (Index t = 0; t < nrun; ++t) {
            Index ix = (ox0 + t) * sx + xoff;
            d[t] = (ix >= 0 && ix < Win) ? xc[base + ix] : 0.0;
          }
        }
        p += nrun;
      }
    }
  }
}

// Adjoint of im2col: scatter-adds col back into dx.
void col2im_add(const MatRM& col, const Geom& g, Index ci_count, Index p0, Index tn, double* dx) {
  const Index r = static_cast<Index>(g.in_sp.size());
  const Index in_size = numel(g.in_sp);
  const Shape in_strides = strides_of(g.in_sp);
  const Index K = numel(g.kernel);
  const Index Wout = g.out_sp[r - 1];
  const Index Win = g.in_sp[r - 1];
  const Index sx = g.stride[r - 1];
  Shape kc(r), oc(r);
  for (Index ci = 0; ci < ci_count; ++ci) {
    double* xc = dx + ci * in_size;
    for (Index k = 0; k < K; ++k) {
      decode(k, g.kernel, kc);
      const Index xoff = kc[r - 1] * g.dilation[r - 1] - g.pad_lo[r - 1];
      const double* src = col.data() + (ci * K + k) * col.cols();
      Index p = p0;
      while (p < p0 + tn) {
        const Index ox0 = p % Wout;
        const Index outer = p / Wout;
        const Index nrun = std::min(Wout - ox0, p0 + tn - p);
        const double* s = src + (p - p0);
        decode(outer * Wout, g.out_sp, oc);
        Index base = 0;
        bool ok = true;
        for (Index a = 0; a + 1 < r; ++a) {
          Index ix = oc[a] * g.stride[a] + kc[a] * g.dilation[a] - g.pad_lo[a];
          if (ix < 0 || ix >= g.in_sp[a]) {
            ok = false;
            break;
          }
          base += ix * in_strides[a];
        }
        if (ok) {
          if (sx == 1) {
            Index lo = std::clamp(-xoff, ox0, ox0 + nrun);
            Index hi = std::clamp(Win - xoff, ox0, ox0 + nrun);
            double* xrun = xc + base + lo + xoff;
            const double* srun = s + (lo - ox0);
            for (Index t = 0; t < hi - lo; ++t) xrun[t] += srun[t];
          } else {
            for (Index t = 0; t < nrun; ++t) {
              Index ix = (ox0 + t) * sx + xoff;
              if (ix >= 0 && ix < Win) xc[base + ix] += s[t];
            }
          }
        }
        p += nrun;
      }
    }
  }
}

bool is_pointwise(const Geom& g) {
  for (size_t a = 0; a < g.kernel.size(); ++a)
    if (g.kernel[a] != 1 || g.stride[a] != 1 || g.pad_lo[a] != 0 || g.pad_hi[a] != 0) return false;
  return true;
}

}  // namespace

Geom Geom::make(const Shape& in_sp, const Shape& kernel, Shape stride, Shape dilation,
                Shape pad_lo, Shape pad_hi) {
  Geom g;
  g.in_sp = in_sp;
  g.kernel = kernel;
  size_t r = in_sp.size();
  auto dflt = [&](Shape& s, Index v) {
    if (s.empty()) s.assign(r, v);
    if (s.size() != r) throw std::invalid_argument("conv: option rank mismatch");
  };
  g.stride = std::move(stride);
  g.dilation = std::move(dilation);
  g.pad_lo = std::move(pad_lo);
  g.pad_hi = std::move(pad_hi);
  dflt(g.stride, 1);
  dflt(g.dilation, 1);
  dflt(g.pad_lo, 0);
  dflt(g.pad_hi, 0);
  g.out_sp.resize(r);
  for (size_t a = 0; a < r; ++a) {
    Index span = (kernel[a] - 1) * g.dilation[a] + 1;
    Index padded = in_sp[a] + g.pad_lo[a] + g.pad_hi[a];
    if (padded < span)
      throw std::invalid_argument("conv: kernel span " + std::to_string(span) +
                                  " exceeds padded extent " + std::to_string(padded) + " on axis " +
                                  std::to_string(a));
    g.out_sp[a] = (padded - span) / g.stride[a] + 1;
  }
  return g;
}

ArrayD forward(const ArrayD& x, const ArrayD& w, const double* bias, const Geom& g) {
  const Index B = x.extent(0), Ci = x.extent(1);
  const Index Co = w.extent(0);
  const Index K = numel(g.kernel);
  const Index P = numel(g.out_sp);
  const Index in_size = numel(g.in_sp);
  Shape out_shape = {B, Co};
  for (Index e : g.out_sp) out_shape.push_back(e);
  ArrayD y(out_shape);

  MapRM W(w.data(), Co, Ci * K);
  if (is_pointwise(g)) {
    for (Index b = 0; b < B; ++b) {
      MapRM X(x.data() + b * Ci * in_size, Ci, P);
      MapRMmut Y(y.data() + b * Co * P, Co, P);
      Y.noalias() = W * X;
    }
  } else {
    const Index tile = std::min(tile_size(Ci * K), P);
    MatRM col(Ci * K, tile);
    for (Index b = 0; b < B; ++b) {
      const double* xb = x.data() + b * Ci * in_size;
      double* yb = y.data() + b * Co * P;
      for (Index p0 = 0; p0 < P; p0 += tile) {
        Index tn = std::min(tile, P - p0);
        im2col(xb, g, Ci, p0, tn, col);
        // write straight into the output rows (columns p0..p0+tn of each row)
        Eigen::Map<MatRM, 0, Eigen::OuterStride<>> Y(yb + p0, Co, tn, Eigen::OuterStride<>(P));
        Y.noalias() = W * col.leftCols(tn);
      }
    }
  }
  if (bias) {
    for (Index b = 0; b < B; ++b)
      for (Index co = 0; co < Co; ++co) {
        double* row = y.data() + (b * Co + co) * P;
        double bv = bias[co];
        for (Index p = 0; p < P; ++p) row[p] += bv;
      }
  }
  return y;
}

ArrayD backward_input(const ArrayD& w, const ArrayD& dy, const Geom& g, Index batch) {
  const Index Co = w.extent(0), Ci = w.extent(1);
  const Index K = numel(g.kernel);
  const Index P = numel(g.out_sp);
  const Index in_size = numel(g.in_sp);
  Shape in_shape = {batch, Ci};
  for (Index e : g.in_sp) in_shape.push_back(e);
  ArrayD dx(in_shape);

  MapRM W(w.data(), Co, Ci * K);
  if (is_pointwise(g)) {
    for (Index b = 0; b < batch; ++b) {
      MapRM DY(dy.data() + b * Co * P, Co, P);
      MapRMmut DX(dx.data() + b * Ci * in_size, Ci, P);
      DX.noalias() = W.transpose() * DY;
    }
    return dx;
  }
  const Index tile = std::min(tile_size(Ci * K), P);
  MatRM cold(Ci * K, tile);
  for (Index b = 0; b < batch; ++b) {
    const double* dyb = dy.data() + b * Co * P;
    double* dxb = dx.data() + b * Ci * in_size;
    for (Index p0 = 0; p0 < P; p0 += tile) {
      Index tn = std::min(tile, P - p0);
      Eigen::Map<const MatRM, 0, Eigen::OuterStride<>> DY(dyb + p0, Co, tn,
                                                          Eigen::OuterStride<>(P));
      cold.leftCols(tn).noalias() = W.transpose() * DY;
      col2im_add(cold, g, Ci, p0, tn, dxb);
    }
  }
  return dx;
}

ArrayD backward_weight(const ArrayD& x, const ArrayD& dy, const Geom& g, const Shape& wshape) {
  const Index B = x.extent(0), Ci = x.extent(1);
  const Index Co = wshape[0];
  const Index K = numel(g.kernel);
  const Index P = numel(g.out_sp);
  const Index in_size = numel(g.in_sp);
  ArrayD dw(wshape);
  MapRMmut DW(dw.data(), Co, Ci * K);

  if (is_pointwise(g)) {
    for (Index b = 0; b < B; ++b) {
      MapRM X(x.data() + b * Ci * in_size, Ci, P);
      MapRM DY(dy.data() + b * Co * P, Co, P);
      DW.noalias() += DY * X.transpose();
    }
    return dw;
  }
  const Index tile = std::min(tile_size(Ci * K), P);
  MatRM col(Ci * K, tile);
  for (Index b = 0; b < B; ++b) {
    const double* xb = x.data() + b * Ci * in_size;
    const double* dyb = dy.data() + b * Co * P;
    for (Index p0 = 0; p0 < P; p0 += tile) {
      Index tn = std::min(tile, P - p0);
      im2col(xb, g, Ci, p0, tn, col);
      Eigen::Map<const MatRM, 0, Eigen::OuterStride<>> DY(dyb + p0, Co, tn,
                                                          Eigen::OuterStride<>(P));
      DW.noalias() += DY * col.leftCols(tn).transpose();
    }
  }
  return dw;
}

ArrayD backward_bias(const ArrayD& dy) {
  const Index B = dy.extent(0), Co = dy.extent(1);
  Index P = 1;
  for (Index a = 2; a < dy.rank(); ++a) P *= dy.extent(a);
  ArrayD db({Co});
  for (Index b = 0; b < B; ++b)
    for (Index co = 0; co < Co; ++co) {
      const double* row = dy.data() + (b * Co + co) * P;
      double s = 0;
      for (Index p = 0; p < P; ++p) s += row[p];
      db[co] += s;
    }
  return db;
}

// ---- transposed conv, stride = kernel = 2 per axis ----

ArrayD transpose2_forward(const ArrayD& x, const ArrayD& w, const double* bias) {
  const Index B = x.extent(0), Ci = x.extent(1);
  const Index Co = w.extent(1);
  const Index r = x.rank() - 2;
  Shape in_sp(x.shape().begin() + 2, x.shape().end());
  const Index P = numel(in_sp);
  Shape out_sp(r);
  for (Index a = 0; a < r; ++a) out_sp[a] = 2 * in_sp[a];
  const Index OP = numel(out_sp);
  Shape out_shape = {B, Co};
  for (Index e : out_sp) out_shape.push_back(e);
  ArrayD y(out_shape);
  const Index noff = Index(1) << r;

  MatRM Woff(Ci, Co);
  MatRM out(Co, P);
  const Shape out_strides = strides_of(out_sp);
  Shape ic(r);
  for (Index off = 0; off < noff; ++off) {
    for (Index ci = 0; ci < Ci; ++ci)
      for (Index co = 0; co < Co; ++co) Woff(ci, co) = w[(ci * Co + co) * noff + off];
    for (Index b = 0; b < B; ++b) {
      MapRM X(x.data() + b * Ci * P, Ci, P);
      out.noalias() = Woff.transpose() * X;
      double* yb = y.data() + b * Co * OP;
      for (Index p = 0; p < P; ++p) {
        decode(p, in_sp, ic);
        Index o = 0;
        for (Index a = 0; a < r; ++a) o += (2 * ic[a] + ((off >> (r - 1 - a)) & 1)) * out_strides[a];
        for (Index co = 0; co < Co; ++co) yb[co * OP + o] = out(co, p);
      }
    }
  }
  if (bias) {
    for (Index b = 0; b < B; ++b)
      for (Index co = 0; co < Co; ++co) {
        double* row = y.data() + (b * Co + co) * OP;
        for (Index p = 0; p < OP; ++p) row[p] += bias[co];
      }
  }
  return y;
}

ArrayD transpose2_backward_input(const ArrayD& w, const ArrayD& dy) {
  const Index B = dy.extent(0);
  const Index Ci = w.extent(0), Co = w.extent(1);
  const Index r = dy.rank() - 2;
  Shape out_sp(dy.shape().begin() + 2, dy.shape().end());
  Shape in_sp(r);
  for (Index a = 0; a < r; ++a) in_sp[a] = out_sp[a] / 2;
  const Index P = numel(in_sp), OP = numel(out_sp);
  Shape in_shape = {B, Ci};
  for (Index e : in_sp) in_shape.push_back(e);
  ArrayD dx(in_shape);
  const Index noff = Index(1) << r;
  const Shape out_strides = strides_of(out_sp);

  MatRM Woff(Ci, Co);
  MatRM dyg(Co, P);
  Shape ic(r);
  for (Index off = 0; off < noff; ++off) {
    for (Index ci = 0; ci < Ci; ++ci)
      for (Index co = 0; co < Co; ++co) Woff(ci, co) = w[(ci * Co + co) * noff + off];
    for (Index b = 0; b < B; ++b) {
      const double* dyb = dy.data() + b * Co * OP;
      for (Index p = 0; p < P; ++p) {
        decode(p, in_sp, ic);
        Index o = 0;
        for (Index a = 0; a < r; ++a) o += (2 * ic[a] + ((off >> (r - 1 - a)) & 1)) * out_strides[a];
        for (Index co = 0; co < Co; ++co) dyg(co, p) = dyb[co * OP + o];
      }
      MapRMmut DX(dx.data() + b * Ci * P, Ci, P);
      DX.noalias() += Woff * dyg;
    }
  }
  return dx;
}

ArrayD transpose2_backward_weight(const ArrayD& x, const ArrayD& dy, const Shape& wshape) {
  const Index B = x.extent(0), Ci = x.extent(1);
  const Index Co = wshape[1];
  const Index r = x.rank() - 2;
  Shape in_sp(x.shape().begin() + 2, x.shape().end());
  Shape out_sp(r);
  for (Index a = 0; a < r; ++a) out_sp[a] = 2 * in_sp[a];
  const Index P = numel(in_sp), OP = numel(out_sp);
  ArrayD dw(wshape);
  const Index noff = Index(1) << r;
  const Shape out_strides = strides_of(out_sp);

  MatRM dyg(Co, P);
  MatRM acc(Ci, Co);
  Shape ic(r);
  for (Index off = 0; off < noff; ++off) {
    acc.setZero();
    for (Index b = 0; b < B; ++b) {
      const double* dyb = dy.data() + b * Co * OP;
      for (Index p = 0; p < P; ++p) {
        decode(p, in_sp, ic);
        Index o = 0;
        for (Index a = 0; a < r; ++a) o += (2 * ic[a] + ((off >> (r - 1 - a)) & 1)) * out_strides[a];
        for (Index co = 0; co < Co; ++co) dyg(co, p) = dyb[co * OP + o];
      }
      MapRM X(x.data() + b * Ci * P, Ci, P);
      acc.noalias() += X * dyg.transpose();
    }
    for (Index ci = 0; ci < Ci; ++ci)
      for (Index co = 0; co < Co; ++co) dw[(ci * Co + co) * noff + off] = acc(ci, co);
  }
  return dw;
}

}  // namespace ffr::convk
