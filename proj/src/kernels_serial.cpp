#include <cstddef>

#include "kernel_rows.hpp"
#include "seflow/kernels.hpp"

namespace seflow::kernels::serial {

using namespace seflow::kernels::detail;

template <class S>
void conv1d_fwd(const S* in, const S* w, const S* bias, S* out, int B, int Ci, int Co, int T,
                int K, int dil, int pad_left) {
  for (int b = 0; b < B; ++b)
    for (int o = 0; o < Co; ++o)
      conv_row_fwd(in + static_cast<std::size_t>(b) * Ci * T,
                   w + static_cast<std::size_t>(o) * Ci * K, bias ? bias[o] : S(0),
                   out + (static_cast<std::size_t>(b) * Co + o) * T, Ci, T, K, dil, pad_left);
}

template <class S>
void conv1d_bwd_input(const S* gout, const S* w, S* gin, int B, int Ci, int Co, int T, int K,
                      int dil, int pad_left) {
  for (int b = 0; b < B; ++b)
    for (int i = 0; i < Ci; ++i)
      conv_row_bwd_input(gout + static_cast<std::size_t>(b) * Co * T, w,
                         gin + (static_cast<std::size_t>(b) * Ci + i) * T, i, Ci, Co, T, K, dil,
                         pad_left);
}

template <class S>
void conv1d_bwd_weight(const S* gout, const S* in, S* gw, S* gb, int B, int Ci, int Co, int T,
                       int K, int dil, int pad_left) {
  for (int o0 = 0; o0 < Co; o0 += kConvTileO)
    conv_tile_bwd_weight(gout, in, gw, gb, o0, std::min(Co, o0 + kConvTileO), B, Ci, Co, T, K,
                         dil, pad_left);
}

template <class S>
void depthwise_fwd(const S* in, const S* w, S* out, int B, int C, int T, int K, int dil,
                   int pad_left) {
  for (int b = 0; b < B; ++b)
    for (int c = 0; c < C; ++c)
      depthwise_row_fwd(in + (static_cast<std::size_t>(b) * C + c) * T,
                        w + static_cast<std::size_t>(c) * K,
                        out + (static_cast<std::size_t>(b) * C + c) * T, T, K, dil, pad_left);
}

template <class S>
void depthwise_bwd_input(const S* gout, const S* w, S* gin, int B, int C, int T, int K, int dil,
                         int pad_left) {
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
  for (int c = 0; c < C; ++c)
    depthwise_row_bwd_weight(gout, in, gw + static_cast<std::size_t>(c) * K, c, B, C, T, K, dil,
                             pad_left);
}

template <class S>
void gated_fwd(const S* a, const S* b, S* out, std::size_t n) {
  gated_span_fwd(a, b, out, 0, n);
}

template <class S>
void gated_bwd(const S* a, const S* b, const S* g, S* ga, S* gb, std::size_t n) {
  gated_span_bwd(a, b, g, ga, gb, 0, n);
}

template <class S>
void ew_exp(const S* in, S* out, std::size_t n) {
  exp_span(in, out, 0, n);
}

#define SEFLOW_INSTANTIATE_SERIAL(S)                                                            \
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

SEFLOW_INSTANTIATE_SERIAL(float)
SEFLOW_INSTANTIATE_SERIAL(double)

}  // namespace seflow::kernels::serial
