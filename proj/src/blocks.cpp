#include "ffr/blocks.hpp"

namespace ffr::blocks {

using namespace ffr::ad;

namespace {

Shape ones_shape(int rank, Index v) { return Shape(static_cast<size_t>(rank), v); }

void create_conv(ParamStore& s, const std::string& name, Index co, Index ci, const Shape& k,
                 Rng& rng) {
  Shape ws = {co, ci};
  for (Index e : k) ws.push_back(e);
  s.create(name + ".w", init_conv_weight(ws, ci * numel(k), rng));
  s.create(name + ".b", init_conv_weight({co}, ci * numel(k), rng));
}

void create_norm(ParamStore& s, const std::string& name, Index c) {
  s.create(name + ".g", ArrayD({c}, 1.0));
  s.create(name + ".b", ArrayD({c}));
}

Tensor apply_conv(Tape& t, ParamStore& s, const std::string& name, Tensor x,
                  const ConvOpt& opt) {
  return conv_nd(x, t.param(s, name + ".w"), t.param(s, name + ".b"), opt);
}

Tensor norm_act(Tape& t, ParamStore& s, const std::string& name, Tensor x, const RunOpt& opt) {
  if (!opt.bypass_norm)
    x = instance_norm(x, t.param(s, name + ".g"), t.param(s, name + ".b"));
  return leaky_relu(x, opt.slope);
}

}  // namespace

// ---- FasterFC ----

FasterFcBlock::FasterFcBlock(ParamStore& store, std::string prefix, Index in_ch, Index out_ch,
                             int rank, Rng& rng)
    : store_(&store), prefix_(std::move(prefix)), in_ch_(in_ch), out_ch_(out_ch), rank_(rank) {
  if (out_ch % 2 != 0)
    throw std::invalid_argument("FasterFcBlock: out channels must be even (complex pairing), got " +
                                std::to_string(out_ch));
  create_conv(store, prefix_ + ".conv_in", out_ch, in_ch, ones_shape(rank, 1), rng);
  create_norm(store, prefix_ + ".norm1", out_ch);
  create_conv(store, prefix_ + ".conv3", out_ch, out_ch, ones_shape(rank, 3), rng);
  create_norm(store, prefix_ + ".norm2", out_ch);
  create_conv(store, prefix_ + ".conv_mid", out_ch, out_ch, ones_shape(rank, 1), rng);
  create_norm(store, prefix_ + ".norm3", out_ch);
  create_conv(store, prefix_ + ".spectral", out_ch, out_ch, ones_shape(rank, 1), rng);
  create_norm(store, prefix_ + ".norm4", out_ch);
  create_conv(store, prefix_ + ".conv_out", out_ch, 2 * out_ch, ones_shape(rank, 1), rng);
  create_norm(store, prefix_ + ".norm5", out_ch);
}

Tensor FasterFcBlock::spectral_branch(Tape& t, Tensor f3, const RunOpt& opt) const {
  Tensor z = fft_pairs(f3);
  z = apply_conv(t, *store_, prefix_ + ".spectral", z, {});
  z = norm_act(t, *store_, prefix_ + ".norm4", z, opt);
  z = ifft_pairs(z);
  return add(z, f3);
}

Tensor FasterFcBlock::forward(Tape& t, Tensor f_input, const RunOpt& opt) const {
  Tensor f1 = norm_act(t, *store_, prefix_ + ".norm1",
                       apply_conv(t, *store_, prefix_ + ".conv_in", f_input, {}), opt);
  Tensor f2 = add(norm_act(t, *store_, prefix_ + ".norm2",
                           apply_conv(t, *store_, prefix_ + ".conv3", f1,
                                      same_conv(ones_shape(rank_, 3))),
                           opt),
                  f1);
  Tensor f3 = norm_act(t, *store_, prefix_ + ".norm3",
                       apply_conv(t, *store_, prefix_ + ".conv_mid", f2, {}), opt);
  Tensor f4 = spectral_branch(t, f3, opt);
  Tensor f34 = concat(f3, f4, 1);
  return norm_act(t, *store_, prefix_ + ".norm5",
                  apply_conv(t, *store_, prefix_ + ".conv_out", f34, {}), opt);
}

void FasterFcBlock::set_spectral_identity() {
  ArrayD& w = store_->value(prefix_ + ".spectral.w");
  w.fill(0.0);
  for (Index c = 0; c < out_ch_; ++c) w[c * out_ch_ + c] = 1.0;
  store_->value(prefix_ + ".spectral.b").fill(0.0);
}

// ---- FFC baseline ----

FfcBlock::FfcBlock(ParamStore& store, std::string prefix, Index in_ch, Index out_ch, int rank,
                   Rng& rng)
    : store_(&store), prefix_(std::move(prefix)), in_ch_(in_ch), out_ch_(out_ch), rank_(rank) {
  if (out_ch % 2 != 0)
    throw std::invalid_argument("FfcBlock: out channels must be even, got " +
                                std::to_string(out_ch));
  auto make_layer = [&](const std::string& lp, Index a, Index b) {
    Index a_l = a < 2 ? a : a / 2;
    Index a_g = a - a_l;
    Index b_l = b / 2, b_g = b / 2;
    create_conv(store, lp + ".l2l", b_l, a_l, ones_shape(rank, 3), rng);
    create_conv(store, lp + ".l2g", b_g, a_l, ones_shape(rank, 3), rng);
    if (a_g > 0) {
      create_conv(store, lp + ".g2l", b_l, a_g, ones_shape(rank, 3), rng);
      create_conv(store, lp + ".fu", 2 * b_g, 2 * a_g, ones_shape(rank, 1), rng);
      create_norm(store, lp + ".fu_norm", 2 * b_g);
    }
    create_norm(store, lp + ".norm_l", b_l);
    create_norm(store, lp + ".norm_g", b_g);
  };
  make_layer(prefix_ + ".l1", in_ch, out_ch);
  make_layer(prefix_ + ".l2", out_ch, out_ch);
}

Tensor FfcBlock::layer(Tape& t, Tensor x, int which, Index a, Index b, const RunOpt& opt) const {
  const std::string lp = prefix_ + (which == 1 ? ".l1" : ".l2");
  const Index a_l = a < 2 ? a : a / 2;
  const Index a_g = a - a_l;
  const Index b_l = b / 2;
  const Index b_g = b - b_l;
  ConvOpt c3 = same_conv(ones_shape(rank_, 3));

  Tensor x_l = a_g > 0 ? narrow(x, 1, 0, a_l) : x;
  Tensor y_l = apply_conv(t, *store_, lp + ".l2l", x_l, c3);
  Tensor y_g = apply_conv(t, *store_, lp + ".l2g", x_l, c3);
  if (a_g > 0) {
    Tensor x_g = narrow(x, 1, a_l, a_g);
    y_l = add(y_l, apply_conv(t, *store_, lp + ".g2l", x_g, c3));
    // Fourier unit: spectrum of the global half, 1x1 conv on stacked
    // real/imag planes, back to space, keep the real part.
    Tensor zz = concat(x_g, t.constant(ArrayD(x_g.shape())), 1);
    Tensor spec = fft_pairs(zz);
    spec = apply_conv(t, *store_, lp + ".fu", spec, {});
    spec = norm_act(t, *store_, lp + ".fu_norm", spec, opt);
    Tensor back = ifft_pairs(spec);
    y_g = add(y_g, narrow(back, 1, 0, b_g));
  }
  y_l = norm_act(t, *store_, lp + ".norm_l", y_l, opt);
  y_g = norm_act(t, *store_, lp + ".norm_g", y_g, opt);
  return concat(y_l, y_g, 1);
}

Tensor FfcBlock::forward(Tape& t, Tensor x, const RunOpt& opt) const {
  Tensor h = layer(t, x, 1, in_ch_, out_ch_, opt);
  return layer(t, h, 2, out_ch_, out_ch_, opt);
}

// ---- plain two consecutive convolutions ----

TwoConvBlock::TwoConvBlock(ParamStore& store, std::string prefix, Index in_ch, Index out_ch,
                           int rank, Rng& rng)
    : store_(&store), prefix_(std::move(prefix)), in_ch_(in_ch), out_ch_(out_ch), rank_(rank) {
  create_conv(store, prefix_ + ".conv1", out_ch, in_ch, ones_shape(rank, 3), rng);
  create_norm(store, prefix_ + ".norm1", out_ch);
  create_conv(store, prefix_ + ".conv2", out_ch, out_ch, ones_shape(rank, 3), rng);
  create_norm(store, prefix_ + ".norm2", out_ch);
}

Tensor TwoConvBlock::forward(Tape& t, Tensor x, const RunOpt& opt) const {
  ConvOpt c3 = same_conv(ones_shape(rank_, 3));
  Tensor h = norm_act(t, *store_, prefix_ + ".norm1",
                      apply_conv(t, *store_, prefix_ + ".conv1", x, c3), opt);
  return norm_act(t, *store_, prefix_ + ".norm2",
                  apply_conv(t, *store_, prefix_ + ".conv2", h, c3), opt);
}

// ---- influence probe ----

NdArray<std::uint8_t> receptive_field_probe(const std::function<ArrayD(const ArrayD&)>& forward,
                                            const Shape& input_shape, const Shape& at, Rng& rng,
                                            double delta) {
  ArrayD x0 = random_normal(input_shape, rng);
  ArrayD y0 = forward(x0);
  ArrayD x1 = x0;
  Shape sp(input_shape.begin() + 2, input_shape.end());
  if (at.size() != sp.size())
    throw std::invalid_argument("probe: perturbation coords rank mismatch");
  Shape spst = strides_of(sp);
  Index off = 0;
  for (size_t a = 0; a < sp.size(); ++a) off += at[a] * spst[a];
  const Index B = input_shape[0], C = input_shape[1];
  const Index S = numel(sp);
  for (Index b = 0; b < B; ++b)
    for (Index c = 0; c < C; ++c) x1[(b * C + c) * S + off] += delta;
  ArrayD y1 = forward(x1);
  if (y0.shape() != y1.shape()) throw std::runtime_error("probe: forward not shape-stable");

  Shape osp(y0.shape().begin() + 2, y0.shape().end());
  const Index OS = numel(osp);
  const Index OBC = y0.size() / OS;
  const double tol = 1e-12 * std::max(1.0, max_abs(y0));
  NdArray<std::uint8_t> mask(osp);
  for (Index p = 0; p < OS; ++p) {
    double d = 0;
    for (Index bc = 0; bc < OBC; ++bc) d = std::max(d, std::abs(y1[bc * OS + p] - y0[bc * OS + p]));
    mask[p] = d > tol ? 1 : 0;
  }
  return mask;
}

}  // namespace ffr::blocks
