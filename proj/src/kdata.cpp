#include "ffr/kdata.hpp"

namespace ffr {

void KSpaceVolume::validate() const {
  if (static_cast<Index>(mask.rank()) >= data.rank())
    throw std::invalid_argument("kspace: mask rank " + shape_str(mask.shape()) +
                                " too large for data " + shape_str(data.shape()));
  for (int a = 0; a < mask.rank(); ++a)
    if (mask.extent(a) != data.extent(data.rank() - mask.rank() + a))
      throw std::invalid_argument("kspace: mask " + shape_str(mask.shape()) +
                                  " does not cover the trailing axes of " +
                                  shape_str(data.shape()));
  for (Index i = 0; i < mask.size(); ++i)
    if (mask[i] != 0.0 && mask[i] != 1.0)
      throw std::invalid_argument("kspace: mask must be binary");
  const Index M = mask.size();
  const Index outer = data.size() / M;
  for (Index o = 0; o < outer; ++o)
    for (Index i = 0; i < M; ++i)
      if (mask[i] == 0.0 && data[o * M + i] != cdouble(0, 0))
        throw std::invalid_argument("kspace: unsampled position holds a nonzero value");
}

AcsRegion acs_region(const KSpaceVolume& k) {
  if (k.center_fraction <= 0) throw std::invalid_argument("kspace: empty ACS descriptor");
  AcsRegion r;
  for (int a = 0; a < k.phase_rank(); ++a) {
    Index n = k.mask.extent(a);
    Index e = acs_extent(n, k.center_fraction);
    if (e <= 0) throw std::invalid_argument("kspace: ACS empty along phase axis " + std::to_string(a));
    r.start.push_back(center_start(n, e));
    r.extent.push_back(e);
  }
  return r;
}

KSpaceVolume mask_center(const KSpaceVolume& k) {
  AcsRegion r = acs_region(k);
  KSpaceVolume out = k;
  const Shape pst = strides_of(k.mask.shape());
  for (Index i = 0; i < k.mask.size(); ++i) {
    bool inside = true;
    for (size_t a = 0; a < pst.size(); ++a) {
      Index c = (i / pst[a]) % k.mask.extent(a);
      if (c < r.start[a] || c >= r.start[a] + r.extent[a]) {
        inside = false;
        break;
      }
    }
    if (!inside) out.mask[i] = 0.0;
  }
  out.data = apply_phase_mask(out.data, out.mask);
  out.center_fraction = k.center_fraction;
  return out;
}

ArrayC apply_phase_mask(const ArrayC& data, const ArrayD& mask) {
  const Index M = mask.size();
  if (data.size() % M != 0)
    throw std::invalid_argument("apply_mask: mask " + shape_str(mask.shape()) +
                                " does not tile data " + shape_str(data.shape()));
  ArrayC out = data;
  const Index outer = data.size() / M;
  for (Index o = 0; o < outer; ++o)
    for (Index i = 0; i < M; ++i)
      if (mask[i] == 0.0) out[o * M + i] = cdouble(0, 0);
  return out;
}

ArrayD rss(const ArrayC& coil_images) {
  const Index N = coil_images.extent(0);
  const Index S = coil_images.size() / N;
  Shape os(coil_images.shape().begin() + 1, coil_images.shape().end());
  ArrayD out(os);
  for (Index i = 0; i < S; ++i) {
    double acc = 0;
    for (Index n = 0; n < N; ++n) acc += std::norm(coil_images[n * S + i]);
    out[i] = std::sqrt(acc);
  }
  return out;
}

}  // namespace ffr
