#pragma once

#include <string>
#include <variant>
#include <vector>

#include "ffr/ndarray.hpp"

namespace ffr {

/// Named-array container file ("NAV1").
///
/// Layout, all integers little-endian:
///   magic "NAV1"
///   u32 meta length, meta bytes (UTF-8 provenance: command line, seed, version)
///   u64 array count
///   per array:
///     u32 name length, name bytes
///     u8 element kind: 0 = f32, 1 = f64, 2 = c64 (complex, two f64 components,
///         interleaved re,im)
///     u32 rank
///     u64 extents[rank]
///     payload, row-major
struct NamedArray {
  std::string name;
  std::variant<ArrayF, ArrayD, ArrayC> value;
};

struct Container {
  std::string meta;
  std::vector<NamedArray> arrays;

  const NamedArray& find(const std::string& name) const;
  bool has(const std::string& name) const;
  const ArrayD& get_f64(const std::string& name) const;
  const ArrayC& get_c64(const std::string& name) const;
};

void save_container(const std::string& path, const std::vector<NamedArray>& arrays,
                    const std::string& meta = "");
Container load_container(const std::string& path);

}  // namespace ffr
