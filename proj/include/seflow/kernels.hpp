#pragma once

#include <cstddef>

namespace seflow::kernels {

enum class Backend { serial, parallel };

/// Process-wide kernel backend. Defaults to parallel when OpenMP is compiled
/// in, serial otherwise. Both backends produce bit-identical results; the
/// parallel one only distributes disjoint output rows across threads.
Backend backend();
void set_backend(Backend b);
int max_threads();

// Data layout for all kernels: row-major [batch][channel][time].
// Convolutions are cross-correlations with zero same-padding:
//   out[b,o,t] = bias[o] + sum_{i,k} w[o,i,k] * in[b,i,t + k*dil - pad_left]
// Gradient kernels accumulate (+=) into their output buffers.

namespace serial {

template <class S>
void conv1d_fwd(const S* in, const S* w, const S* bias, S* out, int B, int Ci, int Co, int T,
                int K, int dil, int pad_left);
template <class S>
void conv1d_bwd_input(const S* gout, const S* w, S* gin, int B, int Ci, int Co, int T, int K,
                      int dil, int pad_left);
template <class S>
void conv1d_bwd_weight(const S* gout, const S* in, S* gw, S* gb, int B, int Ci, int Co, int T,
                       int K, int dil, int pad_left);

template <class S>
void depthwise_fwd(const S* in, const S* w, S* out, int B, int C, int T, int K, int dil,
                   int pad_left);
template <class S>
void depthwise_bwd_input(const S* gout, const S* w, S* gin, int B, int C, int T, int K, int dil,
                         int pad_left);
template <class S>
void depthwise_bwd_weight(const S* gout, const S* in, S* gw, int B, int C, int T, int K, int dil,
                          int pad_left);

template <class S>
void gated_fwd(const S* a, const S* b, S* out, std::size_t n);
template <class S>
void gated_bwd(const S* a, const S* b, const S* g, S* ga, S* gb, std::size_t n);

template <class S>
void ew_exp(const S* in, S* out, std::size_t n);

}  // namespace serial

namespace parallel {

template <class S>
void conv1d_fwd(const S* in, const S* w, const S* bias, S* out, int B, int Ci, int Co, int T,
                int K, int dil, int pad_left);
template <class S>
void conv1d_bwd_input(const S* gout, const S* w, S* gin, int B, int Ci, int Co, int T, int K,
                      int dil, int pad_left);
template <class S>
void conv1d_bwd_weight(const S* gout, const S* in, S* gw, S* gb, int B, int Ci, int Co, int T,
                       int K, int dil, int pad_left);

template <class S>
void depthwise_fwd(const S* in, const S* w, S* out, int B, int C, int T, int K, int dil,
                   int pad_left);
template <class S>
void depthwise_bwd_input(const S* gout, const S* w, S* gin, int B, int C, int T, int K, int dil,
                         int pad_left);
template <class S>
void depthwise_bwd_weight(const S* gout, const S* in, S* gw, int B, int C, int T, int K, int dil,
                          int pad_left);

template <class S>
void gated_fwd(const S* a, const S* b, S* out, std::size_t n);
template <class S>
void gated_bwd(const S* a, const S* b, const S* g, S* ga, S* gb, std::size_t n);

template <class S>
void ew_exp(const S* in, S* out, std::size_t n);

}  // namespace parallel

// Dispatching entry points used by the op layer.

template <class S>
void conv1d_fwd(const S* in, const S* w, const S* bias, S* out, int B, int Ci, int Co, int T,
                int K, int dil, int pad_left);
template <class S>
void conv1d_bwd_input(const S* gout, const S* w, S* gin, int B, int Ci, int Co, int T, int K,
                      int dil, int pad_left);
template <class S>
void conv1d_bwd_weight(const S* gout, const S* in, S* gw, S* gb, int B, int Ci, int Co, int T,
                       int K, int dil, int pad_left);
template <class S>
void depthwise_fwd(const S* in, const S* w, S* out, int B, int C, int T, int K, int dil,
                   int pad_left);
template <class S>
void depthwise_bwd_input(const S* gout, const S* w, S* gin, int B, int C, int T, int K, int dil,
                         int pad_left);
template <class S>
void depthwise_bwd_weight(const S* gout, const S* in, S* gw, int B, int C, int T, int K, int dil,
                          int pad_left);
template <class S>
void gated_fwd(const S* a, const S* b, S* out, std::size_t n);
template <class S>
void gated_bwd(const S* a, const S* b, const S* g, S* ga, S* gb, std::size_t n);
template <class S>
void ew_exp(const S* in, S* out, std::size_t n);

}  // namespace seflow::kernels
