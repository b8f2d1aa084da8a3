#include "ffr/container.hpp"

#include <cstdio>
#include <cstring>
#include <memory>
#include <set>

namespace ffr {
namespace {

constexpr char kMagic[4] = {'N', 'A', 'V', '1'};

struct Writer {
  FILE* f;
  long long offset = 0;

  void bytes(const void* p, size_t n) {
    if (std::fwrite(p, 1, n, f) != n) throw std::runtime_error("container: write failed");
    offset += static_cast<long long>(n);
  }
  void u8(std::uint8_t v) { bytes(&v, 1); }
  void u32(std::uint32_t v) {
    std::uint8_t b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<std::uint8_t>(v >> (8 * i));
    bytes(b, 4);
  }
  void u64(std::uint64_t v) {
    std::uint8_t b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<std::uint8_t>(v >> (8 * i));
    bytes(b, 8);
  }
  void f64(double v) {
    std::uint64_t u;
    std::memcpy(&u, &v, 8);
    u64(u);
  }
  void f32(float v) {
    std::uint32_t u;
    std::memcpy(&u, &v, 4);
    u32(u);
  }
};

struct Reader {
  FILE* f;
  long long offset = 0;

  [[noreturn]] void fail(const std::string& what) const {
    throw std::runtime_error("container: " + what + " at offset " + std::to_string(offset));
  }
  void bytes(void* p, size_t n) {
    if (std::fread(p, 1, n, f) != n) fail("truncated file");
    offset += static_cast<long long>(n);
  }
  std::uint8_t u8() {
    std::uint8_t v;
    bytes(&v, 1);
    return v;
  }
  std::uint32_t u32() {
    std::uint8_t b[4];
    bytes(b, 4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
    return v;
  }
  std::uint64_t u64() {
    std::uint8_t b[8];
    bytes(b, 8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    return v;
  }
  double f64() {
    std::uint64_t u = u64();
    double v;
    std::memcpy(&v, &u, 8);
    return v;
  }
  float f32() {
    std::uint32_t u = u32();
    float v;
    std::memcpy(&v, &u, 4);
    return v;
  }
};

struct FileCloser {
  void operator()(FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<FILE, FileCloser>;

}  // namespace

const NamedArray& Container::find(const std::string& name) const {
  for (const auto& a : arrays)
    if (a.name == name) return a;
  throw std::runtime_error("container: no array named '" + name + "'");
}

bool Container::has(const std::string& name) const {
  for (const auto& a : arrays)
    if (a.name == name) return true;
  return false;
}

const ArrayD& Container::get_f64(const std::string& name) const {
  return std::get<ArrayD>(find(name).value);
}

const ArrayC& Container::get_c64(const std::string& name) const {
  return std::get<ArrayC>(find(name).value);
}

void save_container(const std::string& path, const std::vector<NamedArray>& arrays,
                    const std::string& meta) {
  std::set<std::string> seen;
  for (const auto& a : arrays)
    if (!seen.insert(a.name).second)
      throw std::invalid_argument("container: duplicate array name '" + a.name + "'");

  FilePtr fp(std::fopen(path.c_str(), "wb"));
  if (!fp) throw std::runtime_error("container: cannot open '" + path + "' for writing");
  Writer w{fp.get()};
  w.bytes(kMagic, 4);
  w.u32(static_cast<std::uint32_t>(meta.size()));
  w.bytes(meta.data(), meta.size());
  w.u64(arrays.size());
  for (const auto& a : arrays) {
    w.u32(static_cast<std::uint32_t>(a.name.size()));
    w.bytes(a.name.data(), a.name.size());
    std::visit(
        [&](const auto& arr) {
          using T = typename std::decay_t<decltype(arr)>;
          if constexpr (std::is_same_v<T, ArrayF>)
            w.u8(0);
          else if constexpr (std::is_same_v<T, ArrayD>)
            w.u8(1);
          else
            w.u8(2);
          w.u32(static_cast<std::uint32_t>(arr.rank()));
          for (Index e : arr.shape()) w.u64(static_cast<std::uint64_t>(e));
          if constexpr (std::is_same_v<T, ArrayF>) {
            for (Index i = 0; i < arr.size(); ++i) w.f32(arr[i]);
          } else if constexpr (std::is_same_v<T, ArrayD>) {
            for (Index i = 0; i < arr.size(); ++i) w.f64(arr[i]);
          } else {
            for (Index i = 0; i < arr.size(); ++i) {
              w.f64(arr[i].real());
              w.f64(arr[i].imag());
            }
          }
        },
        a.value);
  }
}

Container load_container(const std::string& path) {
  FilePtr fp(std::fopen(path.c_str(), "rb"));
  if (!fp) throw std::runtime_error("container: cannot open '" + path + "'");
  Reader r{fp.get()};
  char magic[4];
  r.bytes(magic, 4);
  if (std::memcmp(magic, kMagic, 4) != 0) {
    r.offset = 0;
    r.fail("bad magic");
  }
  Container c;
  std::uint32_t meta_len = r.u32();
  c.meta.resize(meta_len);
  if (meta_len) r.bytes(c.meta.data(), meta_len);
  std::uint64_t count = r.u64();
  for (std::uint64_t i = 0; i < count; ++i) {
    NamedArray na;
    std::uint32_t name_len = r.u32();
    na.name.resize(name_len);
    if (name_len) r.bytes(na.name.data(), name_len);
    std::uint8_t kind = r.u8();
    if (kind > 2) r.fail("unknown element kind " + std::to_string(kind));
    std::uint32_t rank = r.u32();
    Shape shape(rank);
    for (std::uint32_t a = 0; a < rank; ++a) shape[a] = static_cast<Index>(r.u64());
    Index n = numel(shape);
    if (kind == 0) {
      ArrayF arr(shape);
      for (Index t = 0; t < n; ++t) arr[t] = r.f32();
      na.value = std::move(arr);
    } else if (kind == 1) {
      ArrayD arr(shape);
      for (Index t = 0; t < n; ++t) arr[t] = r.f64();
      na.value = std::move(arr);
    } else {
      ArrayC arr(shape);
      for (Index t = 0; t < n; ++t) {
        double re = r.f64();
        double im = r.f64();
        arr[t] = cdouble(re, im);
      }
      na.value = std::move(arr);
    }
    c.arrays.push_back(std::move(na));
  }
  return c;
}

}  // namespace ffr
