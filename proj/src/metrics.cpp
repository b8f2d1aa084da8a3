#include "ffr/metrics.hpp"

#include <cmath>
#include <fstream>
#include <limits>

namespace ffr::metrics {

double nmse(const ArrayD& pred, const ArrayD& gt) {
  if (pred.shape() != gt.shape())
    throw std::invalid_argument("nmse: shape mismatch " + shape_str(pred.shape()) + " vs " +
                                shape_str(gt.shape()));
  double num = 0, den = 0;
  for (Index i = 0; i < gt.size(); ++i) {
    double d = pred[i] - gt[i];
    num += d * d;
    den += gt[i] * gt[i];
  }
  if (den == 0) throw std::invalid_argument("nmse: all-zero ground truth");
  return num / den;
}

double psnr(const ArrayD& pred, const ArrayD& gt, double data_range) {
  if (pred.shape() != gt.shape())
    throw std::invalid_argument("psnr: shape mismatch " + shape_str(pred.shape()) + " vs " +
                                shape_str(gt.shape()));
  bool allzero = true;
  double mx = 0;
  for (Index i = 0; i < gt.size(); ++i) {
    if (gt[i] != 0) allzero = false;
    mx = std::max(mx, gt[i]);
  }
  if (allzero) throw std::invalid_argument("psnr: all-zero ground truth");
  double range = data_range > 0 ? data_range : mx;
  if (range <= 0) range = 1.0;
  double mse = 0;
  for (Index i = 0; i < gt.size(); ++i) {
    double d = pred[i] - gt[i];
    mse += d * d;
  }
  mse /= static_cast<double>(gt.size());
  if (mse == 0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(range * range / mse);
}

namespace {

// Sliding sums over all valid w x w windows via a separable moving average.
ArrayD window_mean(const ArrayD& img, Index w) {
  const Index H = img.extent(0), W = img.extent(1);
  const Index oh = H - w + 1, ow = W - w + 1;
  ArrayD rows({H, ow});
  for (Index r = 0; r < H; ++r) {
    double s = 0;
    for (Index c = 0; c < w; ++c) s += img(r, c);
    rows(r, 0) = s;
    for (Index c = 1; c < ow; ++c) {
      s += img(r, c + w - 1) - img(r, c - 1);
      rows(r, c) = s;
    }
  }
  ArrayD out({oh, ow});
  const double inv = 1.0 / static_cast<double>(w * w);
  for (Index c = 0; c < ow; ++c) {
    double s = 0;
    for (Index r = 0; r < w; ++r) s += rows(r, c);
    out(0, c) = s * inv;
    for (Index r = 1; r < oh; ++r) {
      s += rows(r + w - 1, c) - rows(r - 1, c);
      out(r, c) = s * inv;
    }
  }
  return out;
}

}  // namespace

double ssim2d(const ArrayD& pred, const ArrayD& gt, double data_range, Index window) {
  if (pred.shape() != gt.shape() || pred.rank() != 2)
    throw std::invalid_argument("ssim: need equal rank-2 slices, got " + shape_str(pred.shape()) +
                                " vs " + shape_str(gt.shape()));
  if (window > pred.extent(0) || window > pred.extent(1))
    throw std::invalid_argument("ssim: window " + std::to_string(window) +
                                " larger than slice " + shape_str(pred.shape()));
  double range = data_range > 0 ? data_range : 1.0;
  const double c1 = (0.01 * range) * (0.01 * range);
  const double c2 = (0.03 * range) * (0.03 * range);

  ArrayD xx(pred.shape()), yy(pred.shape()), xy(pred.shape());
  for (Index i = 0; i < pred.size(); ++i) {
    xx[i] = pred[i] * pred[i];
    yy[i] = gt[i] * gt[i];
    xy[i] = pred[i] * gt[i];
  }
  ArrayD mx = window_mean(pred, window);
  ArrayD my = window_mean(gt, window);
  ArrayD mxx = window_mean(xx, window);
  ArrayD myy = window_mean(yy, window);
  ArrayD mxy = window_mean(xy, window);
  double acc = 0;
  for (Index i = 0; i < mx.size(); ++i) {
    double vx = mxx[i] - mx[i] * mx[i];
    double vy = myy[i] - my[i] * my[i];
    double cxy = mxy[i] - mx[i] * my[i];
    double s = ((2 * mx[i] * my[i] + c1) * (2 * cxy + c2)) /
               ((mx[i] * mx[i] + my[i] * my[i] + c1) * (vx + vy + c2));
    acc += s;
  }
  return acc / static_cast<double>(mx.size());
}

MetricsReport evaluate_volume(const ArrayD& pred, const ArrayD& gt) {
  if (pred.shape() != gt.shape())
    throw std::invalid_argument("evaluate: shape mismatch " + shape_str(pred.shape()) + " vs " +
                                shape_str(gt.shape()));
  Index F = 1;
  Shape slice_shape = pred.shape();
  if (pred.rank() == 3) {
    F = pred.extent(0);
    slice_shape = {pred.extent(1), pred.extent(2)};
  } else if (pred.rank() != 2) {
    throw std::invalid_argument("evaluate: need (F, P, S) or (P, S), got " +
                                shape_str(pred.shape()));
  }
  double range = max_abs(gt);
  const Index S = numel(slice_shape);
  MetricsReport rep;
  for (Index f = 0; f < F; ++f) {
    ArrayD ps(slice_shape), gs(slice_shape);
    std::copy(pred.data() + f * S, pred.data() + (f + 1) * S, ps.data());
    std::copy(gt.data() + f * S, gt.data() + (f + 1) * S, gs.data());
    SliceMetrics m;
    m.slice = f;
    m.nmse = nmse(ps, gs);
    m.psnr = psnr(ps, gs, range);
    m.ssim = ssim2d(ps, gs, range);
    rep.slices.push_back(m);
  }
  for (const auto& m : rep.slices) {
    rep.mean_nmse += m.nmse;
    rep.mean_psnr += m.psnr;
    rep.mean_ssim += m.ssim;
  }
  double n = static_cast<double>(rep.slices.size());
  rep.mean_nmse /= n;
  rep.mean_psnr /= n;
  rep.mean_ssim /= n;
  return rep;
}

void write_csv(const std::string& path, const MetricsReport& r, const std::string& provenance) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("csv: cannot open '" + path + "'");
  f << "# " << provenance << "\n";
  f << "slice-index,nmse,psnr,ssim\n";
  f.precision(12);
  for (const auto& m : r.slices)
    f << m.slice << "," << m.nmse << "," << m.psnr << "," << m.ssim << "\n";
  f << "# mean," << r.mean_nmse << "," << r.mean_psnr << "," << r.mean_ssim << "\n";
}

ad::Tensor ssim_loss(ad::Tape& t, ad::Tensor pred, const ArrayD& gt, double data_range,
                     Index window) {
  using namespace ffr::ad;
  const Shape& ps = pred.shape();
  if (ps.size() != 4 || ps[1] != 1)
    throw std::invalid_argument("ssim_loss: need (B, 1, H, W) slices, got " + shape_str(ps));
  if (gt.shape() != ps)
    throw std::invalid_argument("ssim_loss: ground truth shape " + shape_str(gt.shape()) +
                                " != prediction " + shape_str(ps));
  if (window > ps[2] || window > ps[3])
    throw std::invalid_argument("ssim_loss: window larger than slice " + shape_str(ps));
  double range = data_range > 0 ? data_range : 1.0;
  const double c1 = (0.01 * range) * (0.01 * range);
  const double c2 = (0.03 * range) * (0.03 * range);

  Tensor kernel = t.constant(
      ArrayD({1, 1, window, window}, 1.0 / static_cast<double>(window * window)));
  Tensor y = t.constant(gt);
  Tensor mx = conv_nd(pred, kernel, std::nullopt);
  Tensor my = conv_nd(y, kernel, std::nullopt);
  Tensor mxx = conv_nd(square(pred), kernel, std::nullopt);
  Tensor myy = conv_nd(square(y), kernel, std::nullopt);
  Tensor mxy = conv_nd(mul(pred, y), kernel, std::nullopt);
  Tensor vx = sub(mxx, square(mx));
  Tensor vy = sub(myy, square(my));
  Tensor cxy = sub(mxy, mul(mx, my));
  Tensor num = mul(add_scalar(scale(mul(mx, my), 2.0), c1), add_scalar(scale(cxy, 2.0), c2));
  Tensor den = mul(add_scalar(add(square(mx), square(my)), c1),
                   add_scalar(add(vx, vy), c2));
  Tensor ssim_map = div(num, den);
  return add_scalar(neg(mean_all(ssim_map)), 1.0);
}

}  // namespace ffr::metrics
