#include "seflow/flow.hpp"

#include <cmath>
#include <cstddef>
#include <random>

#include "kernel_rows.hpp"

#include "seflow/linalg.hpp"
#include "seflow/rng.hpp"

namespace seflow {

FlowConfig FlowConfig::paper_scale() { return FlowConfig{}; }

FlowConfig FlowConfig::desk_scale() {
  FlowConfig c;
  c.n_blocks = 8;
  c.group_size = 8;
  c.early_every = 4;
  c.early_channels = 2;
  c.wn_layers = 4;
  c.residual_channels = 64;
  c.skip_channels = 32;
  c.kernel_size = 3;
  return c;
}

FlowConfig FlowConfig::tiny() {
  FlowConfig c;
  c.n_blocks = 2;
  c.group_size = 4;
  c.early_every = 0;
  c.early_channels = 0;
  c.wn_layers = 2;
  c.residual_channels = 16;
  c.skip_channels = 16;
  c.kernel_size = 3;
  return c;
}

void FlowConfig::validate() const {
  if (n_blocks < 1) throw DataError(detail::strfmt("flow config: n_blocks %d < 1", n_blocks));
  if (group_size < 2) throw DataError(detail::strfmt("flow config: group_size %d < 2", group_size));
  if (wn_layers < 1) throw DataError(detail::strfmt("flow config: wn_layers %d < 1", wn_layers));
  if (residual_channels < 1 || skip_channels < 1)
    throw DataError(detail::strfmt("flow config: channel counts must be positive (residual %d, "
                                   "skip %d)",
                                   residual_channels, skip_channels));
  if (kernel_size < 1)
    throw DataError(detail::strfmt("flow config: kernel_size %d < 1", kernel_size));
  if (early_every < 0)
    throw DataError(detail::strfmt("flow config: early_every %d < 0", early_every));
  if (early_every > 0) {
    if (early_channels < 1)
      throw DataError("flow config: early outputs enabled but early_channels < 1");
    if (early_channels % 2 != 0)
      throw DataError(detail::strfmt("flow config: early_channels %d must be even to keep the "
                                     "coupling split well defined",
                                     early_channels));
  }
  if (!(sigma_train > 0))
    throw DataError(detail::strfmt("flow config: sigma_train %g must be positive", sigma_train));
  if (sigma_infer < 0)
    throw DataError(detail::strfmt("flow config: sigma_infer %g must be nonnegative", sigma_infer));
  for (int k = 0; k < n_blocks; ++k) {
    const int c = active_channels(k);
    if (c < 2 || c % 2 != 0)
      throw DataError(detail::strfmt("flow config: block %d would see %d channels; every block "
                                     "needs an even count >= 2",
                                     k, c));
  }
}

int FlowConfig::active_channels(int block) const {
  int c = group_size;
  for (int j = 0; j < block; ++j)
    if (emits_after(j)) c -= early_channels;
  return c;
}

bool FlowConfig::emits_after(int block) const {
  return early_every > 0 && (block + 1) % early_every == 0 && block + 1 < n_blocks;
}

std::vector<int> FlowConfig::z_part_channels() const {
  std::vector<int> parts;
  for (int k = 0; k < n_blocks; ++k)
    if (emits_after(k)) parts.push_back(early_channels);
  parts.push_back(active_channels(n_blocks));
  return parts;
}

namespace {

template <class S>
NormConv<S> make_norm_conv(int out_c, int in_c, int kernel, bool with_bias) {
  NormConv<S> nc;
  nc.v = Tensor<S>::zeros(Shape{out_c, in_c, kernel}, true);
  nc.g = Tensor<S>::zeros(Shape{out_c, 1, 1}, true);
  if (with_bias) nc.bias = Tensor<S>::zeros(Shape{1, out_c, 1}, true);
  return nc;
}

/// Gaussian direction with fan-in scaling; magnitude set to the row norm so
/// the effective weight equals the raw draw, or to zero for an identity map.
template <class S>
void init_norm_conv(NormConv<S>& nc, std::mt19937_64& rng, bool zero_magnitude) {
  const Shape vs = nc.v.shape();
  const std::size_t row = static_cast<std::size_t>(vs.channels) * vs.time;
  std::normal_distribution<double> nd(0.0, 1.0 / std::sqrt(static_cast<double>(row)));
  std::vector<S>& v = nc.v.mutable_values();
  for (S& x : v) x = static_cast<S>(nd(rng));
  std::vector<S>& g = nc.g.mutable_values();
  for (int o = 0; o < vs.batch; ++o) {
    if (zero_magnitude) {
      g[o] = S(0);
      continue;
    }
    double n2 = 0;
    for (std::size_t j = 0; j < row; ++j) {
      const double x = static_cast<double>(v[o * row + j]);
      n2 += x * x;
    }
    g[o] = static_cast<S>(std::sqrt(n2));
  }
  if (nc.bias.defined())
    for (S& x : nc.bias.mutable_values()) x = S(0);
}

template <class S>
Tensor<S> inverse_weight(const Tensor<S>& w) {
  const int c = w.shape().batch;
  std::vector<double> m(w.values().begin(), w.values().end());
  linalg::Lu lu = linalg::lu_factor(m, c);
  if (lu.singular || lu.log_abs_det < std::log(1e-12))
    throw NumericError("invertible 1x1 convolution has collapsed: |det| below 1e-12 "
                       "(model degeneracy)");
  const std::vector<double> inv = linalg::lu_inverse(lu);
  std::vector<S> data(inv.size());
  for (std::size_t j = 0; j < inv.size(); ++j) data[j] = static_cast<S>(inv[j]);
  return Tensor<S>::from_vector(Shape{c, c, 1}, std::move(data));
}

}  // namespace

template <class S>
std::pair<Tensor<S>, Tensor<S>> Coupling<S>::forward(const Tensor<S>& x_a,
                                                     const Tensor<S>& cond_sig,
                                                     const FlowConfig& cfg) const {
  const int half = x_a.shape().channels;
  const int R = cfg.residual_channels;
  const int K = cfg.skip_channels;
  const int G = cond_sig.shape().channels;
  const int L = static_cast<int>(layers.size());

  Tensor<S> h = ops::conv1d(x_a, start.weight(), start.bias, ConvSpec{1, 1, half, R});
  Tensor<S> skip;
  for (int l = 0; l < L; ++l) {
    const CouplingLayer<S>& ly = layers[l];
    const bool last = l == L - 1;
    const int dil = 1 << l;
    Tensor<S> u = ops::separable_conv(h, ly.depthwise.weight(), ly.pointwise.weight(),
                                      ly.pointwise.bias, dil);
    Tensor<S> c = ops::conv1d(cond_sig, ly.cond.weight(), ly.cond.bias, ConvSpec{1, 1, G, 2 * R});
    u = ops::add(u, c);
    Tensor<S> gate =
        ops::gated_unit(ops::slice_channels(u, 0, R), ops::slice_channels(u, R, 2 * R));
    Tensor<S> rs = ops::conv1d(gate, ly.res_skip.weight(), ly.res_skip.bias,
                               ConvSpec{1, 1, R, last ? K : R + K});
    if (!last) h = ops::add(h, ops::slice_channels(rs, 0, R));
    Tensor<S> sk = last ? rs : ops::slice_channels(rs, R, R + K);
    skip = l == 0 ? sk : ops::add(skip, sk);
  }
  Tensor<S> out = ops::conv1d(skip, end.weight(), end.bias, ConvSpec{1, 1, K, 2 * half});
  return {ops::slice_channels(out, 0, half), ops::slice_channels(out, half, 2 * half)};
}

template <class S>
FlowModel<S>::FlowModel(const FlowConfig& cfg) : cfg_(cfg) {
  cfg_.validate();
  const int R = cfg_.residual_channels;
  const int K = cfg_.skip_channels;
  const int G = cfg_.group_size;
  blocks_.resize(cfg_.n_blocks);
  for (int k = 0; k < cfg_.n_blocks; ++k) {
    const int c = cfg_.active_channels(k);
    const int half = c / 2;
    FlowBlock<S>& blk = blocks_[k];
    blk.inv_weight = Tensor<S>::zeros(Shape{c, c, 1}, true);
    blk.coupling.start = make_norm_conv<S>(R, half, 1, true);
    blk.coupling.layers.resize(cfg_.wn_layers);
    for (int l = 0; l < cfg_.wn_layers; ++l) {
      const bool last = l == cfg_.wn_layers - 1;
      CouplingLayer<S>& ly = blk.coupling.layers[l];
      ly.depthwise = make_norm_conv<S>(R, 1, cfg_.kernel_size, false);
      ly.pointwise = make_norm_conv<S>(2 * R, R, 1, true);
      ly.cond = make_norm_conv<S>(2 * R, G, 1, true);
      ly.res_skip = make_norm_conv<S>(last ? K : R + K, R, 1, true);
    }
    blk.coupling.end = make_norm_conv<S>(2 * half, K, 1, true);
  }
}

template <class S>
void FlowModel<S>::random_init(std::uint64_t seed) {
  std::mt19937_64 rng = make_rng(derive_seed(seed, 0x636f6e76ULL));
  for (int k = 0; k < cfg_.n_blocks; ++k) {
    FlowBlock<S>& blk = blocks_[k];
    const int c = cfg_.active_channels(k);
    const std::vector<double> q =
        linalg::random_orthogonal(c, derive_seed(seed, 0x777131ULL, static_cast<std::uint64_t>(k)));
    std::vector<S>& w = blk.inv_weight.mutable_values();
    for (std::size_t j = 0; j < w.size(); ++j) w[j] = static_cast<S>(q[j]);
    init_norm_conv(blk.coupling.start, rng, false);
    for (CouplingLayer<S>& ly : blk.coupling.layers) {
      init_norm_conv(ly.depthwise, rng, false);
      init_norm_conv(ly.pointwise, rng, false);
      init_norm_conv(ly.cond, rng, false);
      init_norm_conv(ly.res_skip, rng, false);
    }
    init_norm_conv(blk.coupling.end, rng, true);
  }
}

template <class S>
void FlowModel<S>::identity_init(std::uint64_t seed) {
  random_init(seed);
  for (FlowBlock<S>& blk : blocks_) {
    std::vector<S>& w = blk.inv_weight.mutable_values();
    const int c = blk.inv_weight.shape().batch;
    std::fill(w.begin(), w.end(), S(0));
    for (int i = 0; i < c; ++i) w[static_cast<std::size_t>(i) * c + i] = S(1);
  }
}

template <class S>
FlowOut<S> FlowModel<S>::forward_graph(const Tensor<S>& x, const Tensor<S>& cond) const {
  const Shape xs = x.shape();
  if (xs.channels != cfg_.group_size)
    throw DataError(detail::strfmt("flow forward: input has %d channels, config groups %d",
                                   xs.channels, cfg_.group_size));
  if (!(cond.shape() == xs))
    throw DataError(detail::strfmt("flow forward: conditioning shape %s does not match input %s",
                                   cond.shape().str().c_str(), xs.str().c_str()));
  const long long count = static_cast<long long>(xs.batch) * xs.time;

  Tensor<S> logdet = Tensor<S>::scalar(S(0));
  std::vector<Tensor<S>> parts;
  Tensor<S> active = x;
  for (int k = 0; k < cfg_.n_blocks; ++k) {
    const FlowBlock<S>& blk = blocks_[k];
    Tensor<S> h = ops::channel_matmul(active, blk.inv_weight);
    logdet = ops::add(logdet, ops::channel_logdet(blk.inv_weight, count));
    const int c = h.shape().channels;
    const int half = c / 2;
    Tensor<S> ha = ops::slice_channels(h, 0, half);
    Tensor<S> hb = ops::slice_channels(h, half, c);
    auto [s, t] = blk.coupling.forward(ha, cond, cfg_);
    Tensor<S> yb = ops::affine_scale_shift(hb, s, t);
    logdet = ops::add(logdet, ops::sum(s));
    active = ops::concat_channels<S>({ha, yb});
    if (cfg_.emits_after(k)) {
      parts.push_back(ops::slice_channels(active, 0, cfg_.early_channels));
      active = ops::slice_channels(active, cfg_.early_channels, c);
    }
  }
  parts.push_back(active);
  FlowOut<S> out;
  out.z = parts.size() == 1 ? parts.front() : ops::concat_channels(parts);
  out.logdet = logdet;
  return out;
}

template <class S>
std::pair<Tensor<S>, double> FlowModel<S>::flow_forward(const Tensor<S>& x,
                                                        const Tensor<S>& cond) const {
  autograd::NoGradGuard guard;
  FlowOut<S> out = forward_graph(x, cond);
  return {out.z, static_cast<double>(out.logdet.item())};
}

template <class S>
Tensor<S> FlowModel<S>::flow_inverse(const Tensor<S>& z, const Tensor<S>& cond) const {
  autograd::NoGradGuard guard;
  const Shape zs = z.shape();
  if (zs.channels != cfg_.group_size)
    throw DataError(detail::strfmt("flow inverse: latent has %d channels, config groups %d",
                                   zs.channels, cfg_.group_size));
  if (!(cond.shape() == zs))
    throw DataError(detail::strfmt("flow inverse: conditioning shape %s does not match latent %s",
                                   cond.shape().str().c_str(), zs.str().c_str()));

  const std::vector<int> part_c = cfg_.z_part_channels();
  std::vector<Tensor<S>> parts;
  int off = 0;
  for (int pc : part_c) {
    parts.push_back(ops::slice_channels(z, off, off + pc));
    off += pc;
  }

  Tensor<S> active = parts.back();
  int emit_idx = static_cast<int>(parts.size()) - 2;
  for (int k = cfg_.n_blocks - 1; k >= 0; --k) {
    if (cfg_.emits_after(k)) {
      active = ops::concat_channels<S>({parts[emit_idx], active});
      --emit_idx;
    }
    const int c = active.shape().channels;
    const int half = c / 2;
    Tensor<S> ya = ops::slice_channels(active, 0, half);
    Tensor<S> yb = ops::slice_channels(active, half, c);
    auto [s, t] = blocks_[k].coupling.forward(ya, cond, cfg_);
    std::vector<S> xb(yb.numel());
    const S* pyb = yb.data();
    const S* ps = s.data();
    const S* pt = t.data();
    // Divide by the same exp the forward multiplied with so the scale factor
    // cancels to a single rounding either way.
    for (std::size_t j = 0; j < xb.size(); ++j)
      xb[j] = (pyb[j] - pt[j]) / kernels::detail::kexp(ps[j]);
    Tensor<S> h = ops::concat_channels<S>({ya, Tensor<S>::from_vector(yb.shape(), std::move(xb))});
    active = ops::channel_matmul(h, inverse_weight(blocks_[k].inv_weight));
  }
  return active;
}

template <class S>
Tensor<S> FlowModel<S>::nll_graph(const FlowOut<S>& out, double sigma) const {
  if (!(sigma > 0)) throw DataError(detail::strfmt("nll: sigma %g must be positive", sigma));
  const double d = static_cast<double>(out.z.numel());
  Tensor<S> quad = ops::scale(ops::sum_squares(out.z), static_cast<S>(1.0 / (2.0 * sigma * sigma * d)));
  Tensor<S> ld = ops::scale(out.logdet, static_cast<S>(-1.0 / d));
  const double konst = 0.5 * std::log(2.0 * 3.14159265358979323846 * sigma * sigma);
  return ops::add(ops::add(quad, ld), Tensor<S>::scalar(static_cast<S>(konst)));
}

double nll_value(double sum_squares, double total_logdet, std::size_t n_elements, double sigma) {
  if (!(sigma > 0)) throw DataError(detail::strfmt("nll: sigma %g must be positive", sigma));
  const double d = static_cast<double>(n_elements);
  const double konst = 0.5 * std::log(2.0 * 3.14159265358979323846 * sigma * sigma);
  return konst + sum_squares / (2.0 * sigma * sigma * d) - total_logdet / d;
}

template <class S>
AudioBuffer FlowModel<S>::enhance(const AudioBuffer& noisy, double sigma,
                                  std::uint64_t seed) const {
  if (noisy.sample_rate != 16000)
    throw DataError(detail::strfmt("enhance: sample rate %d, the model expects 16000 Hz",
                                   noisy.sample_rate));
  if (noisy.companded) throw DataError("enhance: input must not be companded");
  if (noisy.samples.empty()) throw DataError("enhance: empty input signal");
  if (sigma < 0) throw DataError(detail::strfmt("enhance: negative sigma %g", sigma));

  AudioBuffer y = companded ? mu_compress(noisy, mu) : noisy;
  const int G = cfg_.group_size;
  const std::size_t n = y.samples.size();
  const std::size_t padded = (n + G - 1) / G * G;
  y.samples.resize(padded, 0.0);

  Tensor<S> cond = group<S>(y, G);
  const Shape zs = cond.shape();
  std::mt19937_64 rng = make_rng(derive_seed(seed, 0x7a6c6174ULL));
  std::normal_distribution<double> nd(0.0, 1.0);
  std::vector<S> zv(zs.numel());
  for (S& v : zv) v = static_cast<S>(sigma * nd(rng));
  Tensor<S> xhat = flow_inverse(Tensor<S>::from_vector(zs, std::move(zv)), cond);

  AudioBuffer out = ungroup(xhat, G, 16000, companded);
  out.samples.resize(n);
  for (double& v : out.samples) v = std::clamp(v, -1.0, 1.0);
  if (companded) out = mu_expand(out, mu);
  return out;
}

template <class S>
std::vector<std::pair<std::string, Tensor<S>>> FlowModel<S>::named_parameters() const {
  std::vector<std::pair<std::string, Tensor<S>>> out;
  auto push_norm = [&out](const std::string& prefix, const NormConv<S>& nc) {
    out.emplace_back(prefix + ".v", nc.v);
    out.emplace_back(prefix + ".g", nc.g);
    if (nc.bias.defined()) out.emplace_back(prefix + ".bias", nc.bias);
  };
  for (int k = 0; k < cfg_.n_blocks; ++k) {
    const FlowBlock<S>& blk = blocks_[k];
    const std::string bp = "block" + std::to_string(k);
    out.emplace_back(bp + ".invconv.weight", blk.inv_weight);
    push_norm(bp + ".coupling.start", blk.coupling.start);
    for (int l = 0; l < static_cast<int>(blk.coupling.layers.size()); ++l) {
      const std::string lp = bp + ".coupling.layer" + std::to_string(l);
      push_norm(lp + ".depthwise", blk.coupling.layers[l].depthwise);
      push_norm(lp + ".pointwise", blk.coupling.layers[l].pointwise);
      push_norm(lp + ".cond", blk.coupling.layers[l].cond);
      push_norm(lp + ".res_skip", blk.coupling.layers[l].res_skip);
    }
    push_norm(bp + ".coupling.end", blk.coupling.end);
  }
  return out;
}

template struct Coupling<float>;
template struct Coupling<double>;
template class FlowModel<float>;
template class FlowModel<double>;

}  // namespace seflow
