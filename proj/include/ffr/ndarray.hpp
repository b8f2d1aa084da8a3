#pragma once

#include <complex>
#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace ffr {

using Index = std::int64_t;
using Shape = std::vector<Index>;
using cdouble = std::complex<double>;

inline Index numel(const Shape& s) {
  Index n = 1;
  for (Index e : s) n *= e;
  return n;
}

// Row-major strides.
inline Shape strides_of(const Shape& s) {
  Shape st(s.size(), 1);
  for (int i = static_cast<int>(s.size()) - 2; i >= 0; --i) st[i] = st[i + 1] * s[i + 1];
  return st;
}

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "(";
  for (size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << ")";
  return os.str();
}

/// Dense n-dimensional array, row-major, value semantics.
/// Complex arrays store std::complex elements (interleaved re,im in memory).
template <typename T>
class NdArray {
 public:
  NdArray() = default;

  explicit NdArray(Shape shape) : shape_(std::move(shape)), data_(check_numel(shape_)) {}

  NdArray(Shape shape, T fill) : shape_(std::move(shape)), data_(check_numel(shape_), fill) {}

  NdArray(Shape shape, std::vector<T> data) : shape_(std::move(shape)), data_(std::move(data)) {
    if (static_cast<Index>(data_.size()) != numel(shape_))
      throw std::invalid_argument("NdArray: data length " + std::to_string(data_.size()) +
                                  " does not match shape " + shape_str(shape_));
  }

  Index rank() const { return static_cast<Index>(shape_.size()); }
  const Shape& shape() const { return shape_; }
  Index extent(Index axis) const { return shape_.at(axis); }
  Index size() const { return static_cast<Index>(data_.size()); }
  bool empty() const { return data_.empty(); }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }
  std::vector<T>& storage() { return data_; }
  const std::vector<T>& storage() const { return data_; }

  T& operator[](Index i) { return data_[static_cast<size_t>(i)]; }
  const T& operator[](Index i) const { return data_[static_cast<size_t>(i)]; }

  template <typename... I>
  T& operator()(I... idx) {
    return data_[static_cast<size_t>(flat_index({static_cast<Index>(idx)...}))];
  }
  template <typename... I>
  const T& operator()(I... idx) const {
    return data_[static_cast<size_t>(flat_index({static_cast<Index>(idx)...}))];
  }

  Index flat_index(std::initializer_list<Index> idx) const {
    Shape st = strides_of(shape_);
    Index f = 0;
    Index a = 0;
    for (Index v : idx) f += v * st[static_cast<size_t>(a++)];
    return f;
  }

  /// Same data, new shape (element count must match).
  NdArray reshaped(Shape s) const& {
    NdArray out = *this;
    out.set_shape(std::move(s));
    return out;
  }
  NdArray reshaped(Shape s) && {
    set_shape(std::move(s));
    return std::move(*this);
  }

  void set_shape(Shape s) {
    if (numel(s) != size())
      throw std::invalid_argument("reshape: new shape " + shape_str(s) + " has " +
                                  std::to_string(numel(s)) + " elements, array has " +
                                  std::to_string(size()));
    shape_ = std::move(s);
  }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

 private:
  static size_t check_numel(const Shape& s) {
    for (Index e : s)
      if (e <= 0) throw std::invalid_argument("NdArray: nonpositive extent in " + shape_str(s));
    return static_cast<size_t>(numel(s));
  }

  Shape shape_;
  std::vector<T> data_;
};

using ArrayD = NdArray<double>;
using ArrayF = NdArray<float>;
using ArrayC = NdArray<cdouble>;

template <typename T>
NdArray<T> zeros_like(const NdArray<T>& a) {
  return NdArray<T>(a.shape());
}

template <typename To, typename From>
NdArray<To> cast(const NdArray<From>& a) {
  NdArray<To> out(a.shape());
  for (Index i = 0; i < a.size(); ++i) out[i] = static_cast<To>(a[i]);
  return out;
}

inline ArrayD real_part(const ArrayC& a) {
  ArrayD out(a.shape());
  for (Index i = 0; i < a.size(); ++i) out[i] = a[i].real();
  return out;
}

inline ArrayD imag_part(const ArrayC& a) {
  ArrayD out(a.shape());
  for (Index i = 0; i < a.size(); ++i) out[i] = a[i].imag();
  return out;
}

inline ArrayC make_complex(const ArrayD& re, const ArrayD& im) {
  if (re.shape() != im.shape())
    throw std::invalid_argument("make_complex: shapes differ " + shape_str(re.shape()) + " vs " +
                                shape_str(im.shape()));
  ArrayC out(re.shape());
  for (Index i = 0; i < re.size(); ++i) out[i] = cdouble(re[i], im[i]);
  return out;
}

inline ArrayD abs_of(const ArrayC& a) {
  ArrayD out(a.shape());
  for (Index i = 0; i < a.size(); ++i) out[i] = std::abs(a[i]);
  return out;
}

template <typename T>
double max_abs(const NdArray<T>& a) {
  double m = 0;
  for (Index i = 0; i < a.size(); ++i) m = std::max(m, static_cast<double>(std::abs(a[i])));
  return m;
}

template <typename T>
double rel_error(const NdArray<T>& got, const NdArray<T>& want) {
  if (got.shape() != want.shape()) return 1e300;
  double num = 0, den = 0;
  for (Index i = 0; i < got.size(); ++i) {
    double d = std::abs(got[i] - want[i]);
    num += d * d;
    double w = std::abs(want[i]);
    den += w * w;
  }
  if (den == 0) return num == 0 ? 0.0 : 1e300;
  return std::sqrt(num / den);
}

}  // namespace ffr
