// OpenMP backend. Work is split over disjoint output rows only; each row is
// computed with the exact serial loop order, so results match the serial
// backend bit for bit regardless of thread count.

#include <cstddef>

#include "kernel_rows.hpp"
#include "seflow/kernels.hpp"

namespace seflow::kernels::parallel {

using namespace seflow::kernels::detail;

template <class S>
void conv1d_fwd(const S* in, const S* w, const S* bias, S* out, int B, int Ci, int Co, int T,
                int K, int dil, int pad_left) {
#pragma omp parallel for collapse(2) schedule(static)
  for (int b = 0; b < B; ++b)
    for (int o = 0; o < Co; ++o)
      conv_row_fwd(in + static_cast<std::size_t>(b) * Ci * T,
                   w + static_cast<std::size_t>(o) * Ci * K, bias ? bias[o] : S(0),
                   out + (static_cast<std::size_t>(b) * Co + o) * T, Ci, T, K, dil, pad_left);
}

template <class S>
void conv1d_bwd_input(const S* gout, const S* w, S* gin, int B, int Ci, int Co, int T, int K,
                      int dil, int pad_left) {
#pragma omp parallel for collapse(2) schedule(static)
  for (int b = 0; b < B; ++b)
    for (int i = 0; i < Ci; ++i)
      conv_row_bwd_input(gout + static_cast<std::size_t>(b) * Co * T, w,
                         gin + (static_cast<std::size_t>(b) * Ci + i) * T, i, Ci, Co, T, K, dil,
                         pad_left);
}

template <class S>
void conv1d_bwd_weight(const S* gout, const S* in, S* gw, S* gb, int B, int Ci, int Co, int T,
                       int K, int dil, int pad_left) {
  const int tiles = (Co + kConvTileO - 1) / kConvTileO;
#pragma omp parallel for schedule(static)
  for (int s = 0; s < tiles; ++s) {
    const int o0 = s * kConvTileO;
    conv_tile_bwd_weight(gout, in, gw, gb, o0, std::min(Co, o0 + kConvTileO), B, Ci, Co, T, K,
                         dil, pad_left);
  }
}

template <class S>
void depthwise_fwd(const S* in, const S* w, S* out, int B, int C, int T, int K, int dil,
                   int pad_left) {
#pragma omp parallel for collapse(2) schedule(static)
  for (int b = 0; b < B; ++b)
    for (int c = 0; c < C; ++c)
      depthwise_row_fwd(in + (static_cast<std::size_t>(b) * C + c) * T,
                        w + static_cast<std::size_t>(c) * K,
                        out + (static_cast<std::size_t>(b) * C + c) * T, T, K, dil, pad_left);
}

template <class S>
void depthwise_bwd_input(const S* gout, const S* w, S* gin, int B, int C, int T, int K, int dil,
                         int pad_left) {
#pragma omp parallel for collapse(2) schedule(static)
  for (int b = 0; b < B; ++b)
    for (int c = 0; c < C; ++c)
      depthwise_row_bwd_input(gout + (static_cast<std::size_t>(b) * C + c) * T,
                              w + static_cast<std::size_t>(c) * K,
                              gin + (static_cast<std::size_t>(b) * C + c) * T, T, K, dil,
                              pad_left);
}

template <class S>
void depthwise_bwd_weight(const S* gout, const S* in, S* gw, int B, int C, int T, int K, int dil,
                          int pad_left) {
#pragma omp parallel for schedule(static)
  for (int c = 0; c < C; ++c)
    depthwise_row_bwd_weight(gout, in, gw + static_cast<std::size_t>(c) * K, c, B, C, T, K, dil,
                             pad_left);
}

namespace {
constexpr std::size_t kSpan = 4096;  // fixed span size keeps partitioning thread-count independent
}

template <class S>
void gated_fwd(const S* a, const S* b, S* out, std::size_t n) {
  const long long spans = static_cast<long long>((n + kSpan - 1) / kSpan);
#pragma omp parallel for schedule(static)
  for (long long s = 0; s < spans; ++s) {
    const std::size_t lo = static_cast<std::size_t>(s) * kSpan;
    const std::size_t hi = lo + kSpan < n ? lo + kSpan : n;
    gated_span_fwd(a, b, out, lo, hi);
  }
}

template <class S>
void gated_bwd(const S* a, const S* b, const S* g, S* ga, S* gb, std::size_t n) {
  const long long spans = static_cast<long long>((n + kSpan - 1) / kSpan);
#pragma omp parallel for schedule(static)
  for (long long s = 0; s < spans; ++s) {
    const std::size_t lo = static_cast<std::size_t>(s) * kSpan;
    const std::size_t hi = lo + kSpan < n ? lo + kSpan : n;
    gated_span_bwd(a, b, g, ga, gb, lo, hi);
  }
}

template <class S>
void ew_exp(const S* in, S* out, std::size_t n) {
  const long long spans = static_cast<long long>((n + kSpan - 1) / kSpan);
#pragma omp parallel for schedule(static)
  for (long long s = 0; s < spans; ++s) {
    const std::size_t lo = static_cast<std::size_t>(s) * kSpan;
    const std::size_t hi = lo + kSpan < n ? lo + kSpan : n;
    exp_span(in, out, lo, hi);
  }
}

#define SEFLOW_INSTANTIATE_PARALLEL(S)                                                          \
  template void conv1d_fwd<S>(const S*, const S*, const S*, S*, int, int, int, int, int, int,   \
                              int);                                                             \
  template void conv1d_bwd_input<S>(const S*, const S*, S*, int, int, int, int, int, int, int); \
  template void conv1d_bwd_weight<S>(const S*, const S*, S*, S*, int, int, int, int, int, int,  \
                                     int);                                                      \
  template void depthwise_fwd<S>(const S*, const S*, S*, int, int, int, int, int, int);         \
  template void depthwise_bwd_input<S>(const S*, const S*, S*, int, int, int, int, int, int);   \
  template void depthwise_bwd_weight<S>(const S*, const S*, S*, int, int, int, int, int, int);  \
  template void gated_fwd<S>(const S*, const S*, S*, std::size_t);                              \
  template void gated_bwd<S>(const S*, const S*, const S*, S*, S*, std::size_t);                \
  template void ew_exp<S>(const S*, S*, std::size_t);

SEFLOW_INSTANTIATE_PARALLEL(float)
SEFLOW_INSTANTIATE_PARALLEL(double)

}  // namespace seflow::kernels::parallel
