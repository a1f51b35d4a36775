#include "seflow/ops.hpp"

#include <cmath>
#include <cstddef>
#include <memory>
#include <utility>
#include <vector>

#include "seflow/kernels.hpp"
#include "seflow/linalg.hpp"

namespace seflow::ops {

namespace {

template <class S>
using NodePtr = std::shared_ptr<detail::TensorNode<S>>;

template <class S>
void check_same_shape(const char* who, const Tensor<S>& a, const Tensor<S>& b) {
  if (!(a.shape() == b.shape()))
    throw Error(detail::strfmt("%s: shape mismatch %s vs %s", who, a.shape().str().c_str(),
                               b.shape().str().c_str()));
}

// Gradient buffer of p when it participates, else a zeroed scratch of its size
// (for kernels that write both operand gradients in one pass).
template <class S>
S* grad_or_scratch(const NodePtr<S>& p, std::vector<S>& scratch) {
  if (p->requires_grad) {
    p->ensure_grad();
    return p->grad.data();
  }
  scratch.assign(p->value.size(), S(0));
  return scratch.data();
}

}  // namespace

template <class S>
Tensor<S> add(const Tensor<S>& a, const Tensor<S>& b) {
  check_same_shape("add", a, b);
  const std::size_t n = a.numel();
  std::vector<S> out(n);
  const S* pa = a.data();
  const S* pb = b.data();
  for (std::size_t j = 0; j < n; ++j) out[j] = pa[j] + pb[j];
  NodePtr<S> an = a.node(), bn = b.node();
  return Tensor<S>::make_op(a.shape(), std::move(out), {a, b},
                            [an, bn](detail::TensorNode<S>& node) {
                              const S* g = node.grad.data();
                              const std::size_t m = node.value.size();
                              for (const NodePtr<S>& p : {an, bn}) {
                                if (!p->requires_grad) continue;
                                p->ensure_grad();
                                S* gp = p->grad.data();
                                for (std::size_t j = 0; j < m; ++j) gp[j] += g[j];
                              }
                            });
}

template <class S>
Tensor<S> mul(const Tensor<S>& a, const Tensor<S>& b) {
  check_same_shape("mul", a, b);
  const std::size_t n = a.numel();
  std::vector<S> out(n);
  const S* pa = a.data();
  const S* pb = b.data();
  for (std::size_t j = 0; j < n; ++j) out[j] = pa[j] * pb[j];
  NodePtr<S> an = a.node(), bn = b.node();
  return Tensor<S>::make_op(a.shape(), std::move(out), {a, b},
                            [an, bn](detail::TensorNode<S>& node) {
                              const S* g = node.grad.data();
                              const std::size_t m = node.value.size();
                              if (an->requires_grad) {
                                an->ensure_grad();
                                S* ga = an->grad.data();
                                const S* vb = bn->value.data();
                                for (std::size_t j = 0; j < m; ++j) ga[j] += g[j] * vb[j];
                              }
                              if (bn->requires_grad) {
                                bn->ensure_grad();
                                S* gb = bn->grad.data();
                                const S* va = an->value.data();
                                for (std::size_t j = 0; j < m; ++j) gb[j] += g[j] * va[j];
                              }
                            });
}

template <class S>
Tensor<S> scale(const Tensor<S>& a, S factor) {
  const std::size_t n = a.numel();
  std::vector<S> out(n);
  const S* pa = a.data();
  for (std::size_t j = 0; j < n; ++j) out[j] = pa[j] * factor;
  NodePtr<S> an = a.node();
  return Tensor<S>::make_op(a.shape(), std::move(out), {a},
                            [an, factor](detail::TensorNode<S>& node) {
                              if (!an->requires_grad) return;
                              an->ensure_grad();
                              const S* g = node.grad.data();
                              S* ga = an->grad.data();
                              const std::size_t m = node.value.size();
                              for (std::size_t j = 0; j < m; ++j) ga[j] += g[j] * factor;
                            });
}

template <class S>
Tensor<S> conv1d(const Tensor<S>& x, const Tensor<S>& weights, const Tensor<S>& bias,
                 const ConvSpec& spec) {
  if (spec.kernel_size < 1 || spec.dilation < 1)
    throw Error(detail::strfmt("conv1d: bad geometry (kernel %d, dilation %d)", spec.kernel_size,
                               spec.dilation));
  const Shape xs = x.shape();
  if (xs.channels != spec.in_channels)
    throw Error(detail::strfmt("conv1d: input has %d channels, spec expects %d", xs.channels,
                               spec.in_channels));
  const Shape want_w{spec.out_channels, spec.in_channels, spec.kernel_size};
  if (!(weights.shape() == want_w))
    throw Error(detail::strfmt("conv1d: weight shape %s, expected %s",
                               weights.shape().str().c_str(), want_w.str().c_str()));
  if (bias.defined() && !(bias.shape() == Shape{1, spec.out_channels, 1}))
    throw Error(detail::strfmt("conv1d: bias shape %s, expected (1,%d,1)",
                               bias.shape().str().c_str(), spec.out_channels));

  const int B = xs.batch, Ci = spec.in_channels, Co = spec.out_channels, T = xs.time;
  const int K = spec.kernel_size, dil = spec.dilation, padL = spec.pad_left();
  std::vector<S> out(static_cast<std::size_t>(B) * Co * T);
  kernels::conv1d_fwd(x.data(), weights.data(), bias.defined() ? bias.data() : nullptr, out.data(),
                      B, Ci, Co, T, K, dil, padL);

  NodePtr<S> xn = x.node(), wn = weights.node();
  NodePtr<S> bn = bias.defined() ? bias.node() : nullptr;
  return Tensor<S>::make_op(
      Shape{B, Co, T}, std::move(out), {x, weights, bias},
      [xn, wn, bn, B, Ci, Co, T, K, dil, padL](detail::TensorNode<S>& node) {
        const S* g = node.grad.data();
        if (xn->requires_grad) {
          xn->ensure_grad();
          kernels::conv1d_bwd_input(g, wn->value.data(), xn->grad.data(), B, Ci, Co, T, K, dil,
                                    padL);
        }
        const bool need_w = wn->requires_grad;
        const bool need_b = bn && bn->requires_grad;
        if (need_w || need_b) {
          std::vector<S> scratch;
          S* gw = grad_or_scratch(wn, scratch);
          S* gb = nullptr;
          if (need_b) {
            bn->ensure_grad();
            gb = bn->grad.data();
          }
          kernels::conv1d_bwd_weight(g, xn->value.data(), gw, gb, B, Ci, Co, T, K, dil, padL);
        }
      });
}

template <class S>
Tensor<S> depthwise_conv(const Tensor<S>& x, const Tensor<S>& weights, int dilation) {
  if (dilation < 1) throw Error(detail::strfmt("depthwise_conv: bad dilation %d", dilation));
  const Shape xs = x.shape();
  const Shape ws = weights.shape();
  if (ws.batch != xs.channels || ws.channels != 1)
    throw Error(detail::strfmt("depthwise_conv: weight shape %s does not match %d input channels",
                               ws.str().c_str(), xs.channels));
  const int B = xs.batch, C = xs.channels, T = xs.time, K = ws.time;
  const int padL = ((K - 1) * dilation) / 2;
  std::vector<S> out(x.numel());
  kernels::depthwise_fwd(x.data(), weights.data(), out.data(), B, C, T, K, dilation, padL);

  NodePtr<S> xn = x.node(), wn = weights.node();
  return Tensor<S>::make_op(xs, std::move(out), {x, weights},
                            [xn, wn, B, C, T, K, dilation, padL](detail::TensorNode<S>& node) {
                              const S* g = node.grad.data();
                              if (xn->requires_grad) {
                                xn->ensure_grad();
                                kernels::depthwise_bwd_input(g, wn->value.data(), xn->grad.data(),
                                                             B, C, T, K, dilation, padL);
                              }
                              if (wn->requires_grad) {
                                wn->ensure_grad();
                                kernels::depthwise_bwd_weight(g, xn->value.data(), wn->grad.data(),
                                                              B, C, T, K, dilation, padL);
                              }
                            });
}

template <class S>
Tensor<S> separable_conv(const Tensor<S>& x, const Tensor<S>& depthwise, const Tensor<S>& pointwise,
                         const Tensor<S>& pointwise_bias, int dilation) {
  Tensor<S> mid = depthwise_conv(x, depthwise, dilation);
  ConvSpec spec;
  spec.kernel_size = 1;
  spec.dilation = 1;
  spec.in_channels = pointwise.shape().channels;
  spec.out_channels = pointwise.shape().batch;
  return conv1d(mid, pointwise, pointwise_bias, spec);
}

template <class S>
Tensor<S> gated_unit(const Tensor<S>& a, const Tensor<S>& b) {
  check_same_shape("gated_unit", a, b);
  const std::size_t n = a.numel();
  std::vector<S> out(n);
  kernels::gated_fwd(a.data(), b.data(), out.data(), n);
  NodePtr<S> an = a.node(), bn = b.node();
  return Tensor<S>::make_op(a.shape(), std::move(out), {a, b},
                            [an, bn](detail::TensorNode<S>& node) {
                              if (!an->requires_grad && !bn->requires_grad) return;
                              std::vector<S> sa, sb;
                              S* ga = grad_or_scratch(an, sa);
                              S* gb = grad_or_scratch(bn, sb);
                              kernels::gated_bwd(an->value.data(), bn->value.data(),
                                                 node.grad.data(), ga, gb, node.value.size());
                            });
}

template <class S>
Tensor<S> channel_matmul(const Tensor<S>& x, const Tensor<S>& w) {
  const Shape xs = x.shape();
  const int C = xs.channels;
  if (!(w.shape() == Shape{C, C, 1}))
    throw Error(detail::strfmt("channel_matmul: weight shape %s, expected (%d,%d,1)",
                               w.shape().str().c_str(), C, C));
  ConvSpec spec;
  spec.kernel_size = 1;
  spec.dilation = 1;
  spec.in_channels = C;
  spec.out_channels = C;
  return conv1d(x, w, Tensor<S>{}, spec);
}

template <class S>
Tensor<S> channel_logdet(const Tensor<S>& w, long long count) {
  const Shape ws = w.shape();
  if (ws.batch != ws.channels || ws.time != 1)
    throw Error(detail::strfmt("channel_logdet: expected square (c,c,1) matrix, got %s",
                               ws.str().c_str()));
  const int C = ws.batch;
  std::vector<double> m(w.values().begin(), w.values().end());
  linalg::Lu lu = linalg::lu_factor(m, C);
  constexpr double kDetFloor = 1e-12;
  if (lu.singular || lu.log_abs_det < std::log(kDetFloor))
    throw NumericError(
        detail::strfmt("invertible 1x1 convolution has collapsed: |det| below %g "
                       "(model degeneracy)",
                       kDetFloor));
  const double value = static_cast<double>(count) * lu.log_abs_det;

  NodePtr<S> wn = w.node();
  return Tensor<S>::make_op(Shape{1, 1, 1}, {static_cast<S>(value)}, {w},
                            [wn, lu = std::move(lu), count, C](detail::TensorNode<S>& node) {
                              if (!wn->requires_grad) return;
                              wn->ensure_grad();
                              const std::vector<double> inv = linalg::lu_inverse(lu);
                              const double coef =
                                  static_cast<double>(node.grad[0]) * static_cast<double>(count);
                              S* gw = wn->grad.data();
                              // d log|det W| / dW = W^{-T}
                              for (int r = 0; r < C; ++r)
                                for (int c = 0; c < C; ++c)
                                  gw[static_cast<std::size_t>(r) * C + c] +=
                                      static_cast<S>(coef * inv[static_cast<std::size_t>(c) * C + r]);
                            });
}

template <class S>
Tensor<S> affine_scale_shift(const Tensor<S>& x, const Tensor<S>& log_scale,
                             const Tensor<S>& shift) {
  check_same_shape("affine_scale_shift", x, log_scale);
  check_same_shape("affine_scale_shift", x, shift);
  const std::size_t n = x.numel();
  auto es = std::make_shared<std::vector<S>>(n);
  kernels::ew_exp(log_scale.data(), es->data(), n);
  std::vector<S> out(n);
  const S* px = x.data();
  const S* pe = es->data();
  const S* pt = shift.data();
  for (std::size_t j = 0; j < n; ++j) out[j] = px[j] * pe[j] + pt[j];

  NodePtr<S> xn = x.node(), sn = log_scale.node(), tn = shift.node();
  return Tensor<S>::make_op(x.shape(), std::move(out), {x, log_scale, shift},
                            [xn, sn, tn, es](detail::TensorNode<S>& node) {
                              const S* g = node.grad.data();
                              const S* pe = es->data();
                              const std::size_t m = node.value.size();
                              if (xn->requires_grad) {
                                xn->ensure_grad();
                                S* gx = xn->grad.data();
                                for (std::size_t j = 0; j < m; ++j) gx[j] += g[j] * pe[j];
                              }
                              if (sn->requires_grad) {
                                sn->ensure_grad();
                                S* gs = sn->grad.data();
                                const S* px = xn->value.data();
                                for (std::size_t j = 0; j < m; ++j)
                                  gs[j] += g[j] * pe[j] * px[j];
                              }
                              if (tn->requires_grad) {
                                tn->ensure_grad();
                                S* gt = tn->grad.data();
                                for (std::size_t j = 0; j < m; ++j) gt[j] += g[j];
                              }
                            });
}

template <class S>
Tensor<S> slice_channels(const Tensor<S>& x, int c_begin, int c_end) {
  const Shape xs = x.shape();
  if (c_begin < 0 || c_end > xs.channels || c_begin >= c_end)
    throw Error(detail::strfmt("slice_channels: range [%d,%d) out of %d channels", c_begin, c_end,
                               xs.channels));
  const int B = xs.batch, C = xs.channels, T = xs.time;
  const int Cs = c_end - c_begin;
  std::vector<S> out(static_cast<std::size_t>(B) * Cs * T);
  const S* px = x.data();
  for (int b = 0; b < B; ++b)
    for (int c = 0; c < Cs; ++c) {
      const S* src = px + (static_cast<std::size_t>(b) * C + c_begin + c) * T;
      S* dst = out.data() + (static_cast<std::size_t>(b) * Cs + c) * T;
      std::copy(src, src + T, dst);
    }

  NodePtr<S> xn = x.node();
  return Tensor<S>::make_op(Shape{B, Cs, T}, std::move(out), {x},
                            [xn, B, C, T, Cs, c_begin](detail::TensorNode<S>& node) {
                              if (!xn->requires_grad) return;
                              xn->ensure_grad();
                              const S* g = node.grad.data();
                              S* gx = xn->grad.data();
                              for (int b = 0; b < B; ++b)
                                for (int c = 0; c < Cs; ++c) {
                                  const S* src = g + (static_cast<std::size_t>(b) * Cs + c) * T;
                                  S* dst =
                                      gx + (static_cast<std::size_t>(b) * C + c_begin + c) * T;
                                  for (int t = 0; t < T; ++t) dst[t] += src[t];
                                }
                            });
}

template <class S>
Tensor<S> concat_channels(const std::vector<Tensor<S>>& parts) {
  if (parts.empty()) throw Error("concat_channels: no operands");
  const Shape s0 = parts.front().shape();
  int Cout = 0;
  for (const Tensor<S>& p : parts) {
    const Shape ps = p.shape();
    if (ps.batch != s0.batch || ps.time != s0.time)
      throw Error(detail::strfmt("concat_channels: shape %s incompatible with %s",
                                 ps.str().c_str(), s0.str().c_str()));
    Cout += ps.channels;
  }
  const int B = s0.batch, T = s0.time;
  std::vector<S> out(static_cast<std::size_t>(B) * Cout * T);
  int off = 0;
  for (const Tensor<S>& p : parts) {
    const int Cp = p.shape().channels;
    const S* px = p.data();
    for (int b = 0; b < B; ++b)
      for (int c = 0; c < Cp; ++c) {
        const S* src = px + (static_cast<std::size_t>(b) * Cp + c) * T;
        S* dst = out.data() + (static_cast<std::size_t>(b) * Cout + off + c) * T;
        std::copy(src, src + T, dst);
      }
    off += Cp;
  }

  std::vector<NodePtr<S>> pnodes;
  pnodes.reserve(parts.size());
  for (const Tensor<S>& p : parts) pnodes.push_back(p.node());
  return Tensor<S>::make_op(Shape{B, Cout, T}, std::move(out), parts,
                            [pnodes, B, T, Cout](detail::TensorNode<S>& node) {
                              const S* g = node.grad.data();
                              int off = 0;
                              for (const NodePtr<S>& p : pnodes) {
                                const int Cp = p->shape.channels;
                                if (p->requires_grad) {
                                  p->ensure_grad();
                                  S* gp = p->grad.data();
                                  for (int b = 0; b < B; ++b)
                                    for (int c = 0; c < Cp; ++c) {
                                      const S* src =
                                          g + (static_cast<std::size_t>(b) * Cout + off + c) * T;
                                      S* dst = gp + (static_cast<std::size_t>(b) * Cp + c) * T;
                                      for (int t = 0; t < T; ++t) dst[t] += src[t];
                                    }
                                }
                                off += Cp;
                              }
                            });
}

template <class S>
Tensor<S> sum(const Tensor<S>& x) {
  double acc = 0;
  for (S v : x.values()) acc += static_cast<double>(v);
  NodePtr<S> xn = x.node();
  return Tensor<S>::make_op(Shape{1, 1, 1}, {static_cast<S>(acc)}, {x},
                            [xn](detail::TensorNode<S>& node) {
                              if (!xn->requires_grad) return;
                              xn->ensure_grad();
                              const S g = node.grad[0];
                              for (S& v : xn->grad) v += g;
                            });
}

template <class S>
Tensor<S> sum_squares(const Tensor<S>& x) {
  double acc = 0;
  for (S v : x.values()) acc += static_cast<double>(v) * static_cast<double>(v);
  NodePtr<S> xn = x.node();
  return Tensor<S>::make_op(Shape{1, 1, 1}, {static_cast<S>(acc)}, {x},
                            [xn](detail::TensorNode<S>& node) {
                              if (!xn->requires_grad) return;
                              xn->ensure_grad();
                              const S g = node.grad[0];
                              const S* px = xn->value.data();
                              S* gx = xn->grad.data();
                              const std::size_t m = xn->value.size();
                              for (std::size_t j = 0; j < m; ++j) gx[j] += S(2) * g * px[j];
                            });
}

template <class S>
Tensor<S> weight_norm(const Tensor<S>& direction, const Tensor<S>& magnitude) {
  const Shape vs = direction.shape();
  const int O = vs.batch;
  if (!(magnitude.shape() == Shape{O, 1, 1}))
    throw Error(detail::strfmt("weight_norm: magnitude shape %s, expected (%d,1,1)",
                               magnitude.shape().str().c_str(), O));
  const std::size_t row = static_cast<std::size_t>(vs.channels) * vs.time;
  const S* pv = direction.data();
  const S* pg = magnitude.data();
  auto norms = std::make_shared<std::vector<double>>(O);
  std::vector<S> out(direction.numel());
  for (int o = 0; o < O; ++o) {
    const S* v = pv + o * row;
    double n2 = 0;
    for (std::size_t j = 0; j < row; ++j) n2 += static_cast<double>(v[j]) * v[j];
    const double n = std::sqrt(n2);
    if (!(n > 0))
      throw NumericError(detail::strfmt("weight_norm: direction row %d has zero norm", o));
    (*norms)[o] = n;
    const double coef = static_cast<double>(pg[o]) / n;
    S* w = out.data() + o * row;
    for (std::size_t j = 0; j < row; ++j) w[j] = static_cast<S>(coef * v[j]);
  }

  NodePtr<S> vn = direction.node(), gn = magnitude.node();
  return Tensor<S>::make_op(
      vs, std::move(out), {direction, magnitude},
      [vn, gn, norms, O, row](detail::TensorNode<S>& node) {
        const S* g = node.grad.data();
        const S* pv = vn->value.data();
        const S* pg = gn->value.data();
        if (gn->requires_grad) gn->ensure_grad();
        if (vn->requires_grad) vn->ensure_grad();
        for (int o = 0; o < O; ++o) {
          const S* v = pv + o * row;
          const S* go = g + o * row;
          const double n = (*norms)[o];
          double dot = 0;
          for (std::size_t j = 0; j < row; ++j)
            dot += static_cast<double>(go[j]) * static_cast<double>(v[j]);
          if (gn->requires_grad) gn->grad[o] += static_cast<S>(dot / n);
          if (vn->requires_grad) {
            const double a = static_cast<double>(pg[o]) / n;
            const double b = static_cast<double>(pg[o]) * dot / (n * n * n);
            S* gv = vn->grad.data() + o * row;
            for (std::size_t j = 0; j < row; ++j)
              gv[j] += static_cast<S>(a * static_cast<double>(go[j]) -
                                      b * static_cast<double>(v[j]));
          }
        }
      });
}

#define SEFLOW_INSTANTIATE_OPS(S)                                                                \
  template Tensor<S> add<S>(const Tensor<S>&, const Tensor<S>&);                                 \
  template Tensor<S> mul<S>(const Tensor<S>&, const Tensor<S>&);                                 \
  template Tensor<S> scale<S>(const Tensor<S>&, S);                                              \
  template Tensor<S> conv1d<S>(const Tensor<S>&, const Tensor<S>&, const Tensor<S>&,             \
                               const ConvSpec&);                                                 \
  template Tensor<S> depthwise_conv<S>(const Tensor<S>&, const Tensor<S>&, int);                 \
  template Tensor<S> separable_conv<S>(const Tensor<S>&, const Tensor<S>&, const Tensor<S>&,     \
                                       const Tensor<S>&, int);                                   \
  template Tensor<S> gated_unit<S>(const Tensor<S>&, const Tensor<S>&);                          \
  template Tensor<S> channel_matmul<S>(const Tensor<S>&, const Tensor<S>&);                      \
  template Tensor<S> channel_logdet<S>(const Tensor<S>&, long long);                             \
  template Tensor<S> affine_scale_shift<S>(const Tensor<S>&, const Tensor<S>&, const Tensor<S>&); \
  template Tensor<S> slice_channels<S>(const Tensor<S>&, int, int);                              \
  template Tensor<S> concat_channels<S>(const std::vector<Tensor<S>>&);                          \
  template Tensor<S> sum<S>(const Tensor<S>&);                                                   \
  template Tensor<S> sum_squares<S>(const Tensor<S>&);                                           \
  template Tensor<S> weight_norm<S>(const Tensor<S>&, const Tensor<S>&);

SEFLOW_INSTANTIATE_OPS(float)
SEFLOW_INSTANTIATE_OPS(double)

}  // namespace seflow::ops
