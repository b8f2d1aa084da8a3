#include "ffr/pgm.hpp"

#include <algorithm>
#include <cstdio>
#include <memory>
#include <stdexcept>

namespace ffr {

void write_pgm16(const std::string& path, const ArrayD& img, double lo, double hi) {
  if (img.rank() != 2) throw std::invalid_argument("pgm: image must be rank 2, got " + shape_str(img.shape()));
  if (!(hi > lo)) throw std::invalid_argument("pgm: need hi > lo");
  std::unique_ptr<FILE, int (*)(FILE*)> f(std::fopen(path.c_str(), "wb"), &std::fclose);
  if (!f) throw std::runtime_error("pgm: cannot open '" + path + "'");
  std::fprintf(f.get(), "P5\n%lld %lld\n65535\n", static_cast<long long>(img.extent(1)),
               static_cast<long long>(img.extent(0)));
  for (Index i = 0; i < img.size(); ++i) {
    double t = (img[i] - lo) / (hi - lo);
    int v = static_cast<int>(std::lround(std::clamp(t, 0.0, 1.0) * 65535.0));
    unsigned char b[2] = {static_cast<unsigned char>(v >> 8), static_cast<unsigned char>(v & 0xff)};
    if (std::fwrite(b, 1, 2, f.get()) != 2) throw std::runtime_error("pgm: write failed");
  }
}

}  // namespace ffr
