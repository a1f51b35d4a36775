#pragma once

// Per-row conv arithmetic shared by the serial and parallel backends. Both
// call these helpers with identical loop order, so the two backends are
// bit-identical and the parallel one only distributes disjoint rows.

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <type_traits>

namespace seflow::kernels::detail {

// exp for float: range-reduced degree-6 polynomial with exact power-of-two
// scaling. Straight-line arithmetic (no libm call) so the loop around it
// vectorizes; error is a few ulp over the clamped domain [-87, 88]. Double
// stays on libm: double-precision paths are the validation reference.
inline float fast_exp(float x) {
  constexpr float kLog2e = 1.44269504088896341f;
  constexpr float kLn2Hi = 0.693359375f;
  constexpr float kLn2Lo = -2.12194440e-4f;
  constexpr float kMagic = 12582912.0f;  // 1.5 * 2^23; adding it rounds to integer
  x = std::min(88.0f, std::max(-87.0f, x));
  float fn = x * kLog2e + kMagic;
  const std::int32_t n = std::bit_cast<std::int32_t>(fn) - std::bit_cast<std::int32_t>(kMagic);
  fn -= kMagic;
  const float r = (x - fn * kLn2Hi) - fn * kLn2Lo;
  float p = 1.9875691500e-4f;
  p = p * r + 1.3981999507e-3f;
  p = p * r + 8.3334519073e-3f;
  p = p * r + 4.1665795894e-2f;
  p = p * r + 1.6666665459e-1f;
  p = p * r + 5.0000001201e-1f;
  p = p * (r * r) + r + 1.0f;
  return p * std::bit_cast<float>((n + 127) << 23);
}

template <class S>
inline S kexp(S x) {
  if constexpr (std::is_same_v<S, float>) {
    return fast_exp(x);
  } else {
    return std::exp(x);
  }
}

template <class S>
inline S ktanh(S x) {
  if constexpr (std::is_same_v<S, float>) {
    const float e2 = fast_exp(2.0f * x);
    return (e2 - 1.0f) / (e2 + 1.0f);
  } else {
    return std::tanh(x);
  }
}

template <class S>
inline S ksigmoid(S x) {
  if constexpr (std::is_same_v<S, float>) {
    const float e = fast_exp(x);
    return e / (e + 1.0f);
  } else {
    return S(1) / (S(1) + std::exp(-x));
  }
}

// dst[t] += w * src[t + off] over the in-range window.
template <class S>
inline void axpy_shifted(S* dst, const S* src, S w, int off, int T) {
  const int t0 = std::max(0, -off);
  const int t1 = std::min(T, T - off);
  const S* s = src + off;
  for (int t = t0; t < t1; ++t) dst[t] += w * s[t];
}

// sum_t a[t] * b[t + off] over the in-range window. Eight independent lanes
// combined pairwise at the end: the lane split is part of the kernel's
// arithmetic definition, so every backend reproduces it bit for bit while
// the lane loop maps onto one vector op.
template <class S>
inline S dot_shifted(const S* a, const S* b, int off, int T) {
  const int t0 = std::max(0, -off);
  const int t1 = std::min(T, T - off);
  const S* s = b + off;
  S l0[8] = {}, l1[8] = {}, l2[8] = {}, l3[8] = {};
  int t = t0;
  for (; t + 32 <= t1; t += 32) {
    for (int l = 0; l < 8; ++l) l0[l] += a[t + l] * s[t + l];
    for (int l = 0; l < 8; ++l) l1[l] += a[t + 8 + l] * s[t + 8 + l];
    for (int l = 0; l < 8; ++l) l2[l] += a[t + 16 + l] * s[t + 16 + l];
    for (int l = 0; l < 8; ++l) l3[l] += a[t + 24 + l] * s[t + 24 + l];
  }
  for (; t + 8 <= t1; t += 8)
    for (int l = 0; l < 8; ++l) l0[l] += a[t + l] * s[t + l];
  S tail = S(0);
  for (; t < t1; ++t) tail += a[t] * s[t];
  const auto fold = [](const S* l) {
    return ((l[0] + l[1]) + (l[2] + l[3])) + ((l[4] + l[5]) + (l[6] + l[7]));
  };
  return ((fold(l0) + fold(l1)) + (fold(l2) + fold(l3))) + tail;
}

template <class S>
inline void conv_row_fwd(const S* in_b, const S* w_o, S bias_o, S* out_row, int Ci, int T, int K,
                         int dil, int pad_left) {
  for (int t = 0; t < T; ++t) out_row[t] = bias_o;
  for (int i = 0; i < Ci; ++i) {
    const S* x = in_b + static_cast<std::size_t>(i) * T;
    const S* wr = w_o + static_cast<std::size_t>(i) * K;
    for (int k = 0; k < K; ++k) axpy_shifted(out_row, x, wr[k], k * dil - pad_left, T);
  }
}

// gin row (b,i) += sum_{o,k} w[o,i,k] * gout[b,o,t'] with the shift inverted.
template <class S>
inline void conv_row_bwd_input(const S* gout_b, const S* w, S* gin_row, int i, int Ci, int Co,
                               int T, int K, int dil, int pad_left) {
  for (int o = 0; o < Co; ++o) {
    const S* g = gout_b + static_cast<std::size_t>(o) * T;
    const S* wr = w + (static_cast<std::size_t>(o) * Ci + i) * K;
    for (int k = 0; k < K; ++k) axpy_shifted(gin_row, g, wr[k], pad_left - k * dil, T);
  }
}

// gw tiles span kConvTileO output channels so each input row streams once per
// tile instead of once per output channel.
inline constexpr int kConvTileO = 8;

// gw tile for output channels [o0, o1) (+ bias grads) accumulated over batch
// and time. Per-slot accumulation runs over b ascending in every backend, so
// tiles are the unit of parallel distribution and results stay bit-identical.
template <class S>
inline void conv_tile_bwd_weight(const S* gout, const S* in, S* gw, S* gb, int o0, int o1, int B,
                                 int Ci, int Co, int T, int K, int dil, int pad_left) {
  for (int b = 0; b < B; ++b) {
    for (int i = 0; i < Ci; ++i) {
      const S* x = in + (static_cast<std::size_t>(b) * Ci + i) * T;
      for (int o = o0; o < o1; ++o) {
        const S* g = gout + (static_cast<std::size_t>(b) * Co + o) * T;
        S* gw_oi = gw + (static_cast<std::size_t>(o) * Ci + i) * K;
        for (int k = 0; k < K; ++k) gw_oi[k] += dot_shifted(g, x, k * dil - pad_left, T);
      }
    }
  }
  if (gb) {
    for (int o = o0; o < o1; ++o) {
      S acc = S(0);
      for (int b = 0; b < B; ++b) {
        const S* g = gout + (static_cast<std::size_t>(b) * Co + o) * T;
        for (int t = 0; t < T; ++t) acc += g[t];
      }
      gb[o] += acc;
    }
  }
}

template <class S>
inline void depthwise_row_fwd(const S* in_row, const S* w_c, S* out_row, int T, int K, int dil,
                              int pad_left) {
  for (int t = 0; t < T; ++t) out_row[t] = S(0);
  for (int k = 0; k < K; ++k) axpy_shifted(out_row, in_row, w_c[k], k * dil - pad_left, T);
}

template <class S>
inline void depthwise_row_bwd_input(const S* gout_row, const S* w_c, S* gin_row, int T, int K,
                                    int dil, int pad_left) {
  for (int k = 0; k < K; ++k) axpy_shifted(gin_row, gout_row, w_c[k], pad_left - k * dil, T);
}

template <class S>
inline void depthwise_row_bwd_weight(const S* gout, const S* in, S* gw_c, int c, int B, int C,
                                     int T, int K, int dil, int pad_left) {
  for (int k = 0; k < K; ++k) {
    const int off = k * dil - pad_left;
    S acc = S(0);
    for (int b = 0; b < B; ++b) {
      const S* g = gout + (static_cast<std::size_t>(b) * C + c) * T;
      const S* x = in + (static_cast<std::size_t>(b) * C + c) * T;
      acc += dot_shifted(g, x, off, T);
    }
    gw_c[k] += acc;
  }
}

template <class S>
inline void gated_span_fwd(const S* a, const S* b, S* out, std::size_t lo, std::size_t hi) {
  for (std::size_t j = lo; j < hi; ++j) {
    const S th = ktanh(a[j]);
    const S sg = ksigmoid(b[j]);
    out[j] = th * sg;
  }
}

template <class S>
inline void gated_span_bwd(const S* a, const S* b, const S* g, S* ga, S* gb, std::size_t lo,
                           std::size_t hi) {
  for (std::size_t j = lo; j < hi; ++j) {
    const S th = ktanh(a[j]);
    const S sg = ksigmoid(b[j]);
    ga[j] += g[j] * (S(1) - th * th) * sg;
    gb[j] += g[j] * th * sg * (S(1) - sg);
  }
}

template <class S>
inline void exp_span(const S* in, S* out, std::size_t lo, std::size_t hi) {
  for (std::size_t j = lo; j < hi; ++j) out[j] = kexp(in[j]);
}

}  // namespace seflow::kernels::detail
