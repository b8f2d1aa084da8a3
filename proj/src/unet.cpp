#include "ffr/unet.hpp"

namespace ffr::unet {

using namespace ffr::ad;
using blocks::RunOpt;

const char* kind_name(BlockKind k) {
  switch (k) {
    case BlockKind::TwoConv: return "two-conv";
    case BlockKind::Ffc: return "ffc";
    case BlockKind::FasterFc: return "fasterfc";
  }
  return "?";
}

BlockKind kind_from_name(const std::string& name) {
  if (name == "two-conv" || name == "unet") return BlockKind::TwoConv;
  if (name == "ffc") return BlockKind::Ffc;
  if (name == "fasterfc") return BlockKind::FasterFc;
  throw std::invalid_argument("unknown block kind '" + name + "'");
}

UNet::AnyBlock UNet::make_block(const std::string& p, Index in_ch, Index out_ch, Rng& rng) const {
  switch (spec_.kind) {
    case BlockKind::TwoConv:
      return blocks::TwoConvBlock(*store_, p, in_ch, out_ch, spec_.rank, rng);
    case BlockKind::Ffc:
      return blocks::FfcBlock(*store_, p, in_ch, out_ch, spec_.rank, rng);
    case BlockKind::FasterFc:
      return blocks::FasterFcBlock(*store_, p, in_ch, out_ch, spec_.rank, rng);
  }
  throw std::logic_error("unreachable");
}

Tensor UNet::run_block(Tape& t, const AnyBlock& b, Tensor x, const RunOpt& opt) const {
  return std::visit([&](const auto& blk) { return blk.forward(t, x, opt); }, b);
}

UNet::UNet(ParamStore& store, std::string prefix, const UNetSpec& spec, Rng& rng)
    : store_(&store), prefix_(std::move(prefix)), spec_(spec) {
  const Index c = spec.entry_channels;
  enc_.push_back(make_block(prefix_ + ".enc0", spec.in_channels, c, rng));
  for (int i = 1; i <= spec.levels; ++i)
    enc_.push_back(make_block(prefix_ + ".enc" + std::to_string(i), (c << (i - 1)), (c << i), rng));
  for (int i = spec.levels; i >= 1; --i) {
    Index hi = c << i, lo = c << (i - 1);
    Shape ws = {hi, lo};
    for (int a = 0; a < spec.rank; ++a) ws.push_back(2);
    store.create(prefix_ + ".up" + std::to_string(i) + ".w",
                 init_conv_weight(ws, hi * (Index(1) << spec.rank), rng));
    store.create(prefix_ + ".up" + std::to_string(i) + ".b",
                 init_conv_weight({lo}, hi * (Index(1) << spec.rank), rng));
    dec_.push_back(make_block(prefix_ + ".dec" + std::to_string(i), hi, lo, rng));
  }
  Shape fw = {spec.out_channels, c};
  for (int a = 0; a < spec.rank; ++a) fw.push_back(1);
  store.create(prefix_ + ".final.w", init_conv_weight(fw, c, rng));
  store.create(prefix_ + ".final.b", init_conv_weight({spec.out_channels}, c, rng));
}

Tensor UNet::forward(Tape& t, Tensor x, const RunOpt& opt) const {
  const Shape& xs = x.shape();
  if (static_cast<int>(xs.size()) != spec_.rank + 2)
    throw std::invalid_argument("unet: input rank " + shape_str(xs) + " does not match spatial rank " +
                                std::to_string(spec_.rank));
  const Index div = Index(1) << spec_.levels;
  for (int a = 2; a < static_cast<int>(xs.size()); ++a)
    if (xs[a] % div != 0) {
      Index padded = (xs[a] + div - 1) / div * div;
      throw std::invalid_argument("unet: spatial extent " + std::to_string(xs[a]) + " on axis " +
                                  std::to_string(a - 2) + " not divisible by 2^L = " +
                                  std::to_string(div) + "; pad to " + std::to_string(padded));
    }
  Shape win(spec_.rank, 2);
  std::vector<Tensor> skips;
  Tensor cur = run_block(t, enc_[0], x, opt);
  skips.push_back(cur);
  for (int i = 1; i <= spec_.levels; ++i) {
    cur = run_block(t, enc_[i], avg_pool(cur, win), opt);
    skips.push_back(cur);
  }
  for (int d = 0; d < spec_.levels; ++d) {
    int i = spec_.levels - d;  // level being climbed out of
    Tensor up = conv_transpose2(cur, t.param(*store_, prefix_ + ".up" + std::to_string(i) + ".w"),
                                t.param(*store_, prefix_ + ".up" + std::to_string(i) + ".b"));
    cur = run_block(t, dec_[d], concat(up, skips[i - 1], 1), opt);
  }
  return conv_nd(cur, t.param(*store_, prefix_ + ".final.w"),
                 t.param(*store_, prefix_ + ".final.b"), {});
}

ArrayD UNet::forward_value(const ArrayD& x, const RunOpt& opt) const {
  Tape t;
  return t.value(forward(t, t.constant(x), opt));
}

Index UNet::param_count() const { return store_->num_params(prefix_ + "."); }

long long count_params_closed_form_fasterfc_unet(Index c, int L) {
  auto sq = [](long long v) { return v * v; };
  long long n = 4 * c + 4 * c * c + (c * c) * 9;
  for (int i = 1; i <= L; ++i) {
    long long lo = c << (i - 1), hi = c << i;
    n += lo * hi + 4 * sq(hi) + sq(hi) * 9;
  }
  for (int i = 1; i <= L; ++i) {
    long long lo = c << (i - 1), hi = c << i;
    n += hi * lo + 4 * sq(lo) + sq(lo) * 9;
  }
  long long up = 0;
  for (int i = 1; i <= L; ++i) up += (c << i) * (c << (i - 1));
  n += up * 4;
  return n;
}

long long count_params_closed_form_unet(Index c, int L) {
  auto sq = [](long long v) { return v * v; };
  long long enc = 2 * c + c * c;
  for (int i = 1; i <= L - 1; ++i) enc += (c << (i - 1)) * (c << i) + sq(c << i);
  long long n = enc * 9;
  n += 2 * c;
  long long dec = 0;
  for (int i = 1; i <= L; ++i) dec += (c << i) * (c << (i - 1)) + sq(c << (i - 1));
  n += dec * 9;
  n += ((c << (L - 1)) * (c << L) + sq(c << L)) * 9;
  long long up = 0;
  for (int i = 1; i <= L; ++i) up += (c << i) * (c << (i - 1));
  n += up * 4;
  return n;
}

double param_ratio(Index c, int L) {
  return static_cast<double>(count_params_closed_form_fasterfc_unet(c, L)) /
         static_cast<double>(count_params_closed_form_unet(c, L));
}

double flops_estimate(const UNet& net, const Shape& input_shape) {
  Tape t;
  Tensor x = t.constant(ArrayD(input_shape));
  (void)net.forward(t, x);
  return t.flops();
}

}  // namespace ffr::unet
