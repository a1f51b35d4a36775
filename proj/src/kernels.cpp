#include "seflow/kernels.hpp"

#include <atomic>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace seflow::kernels {

namespace {
std::atomic<Backend> g_backend{
#ifdef _OPENMP
    Backend::parallel
#else
    Backend::serial
#endif
};
}  // namespace

Backend backend() { return g_backend.load(std::memory_order_relaxed); }
void set_backend(Backend b) { g_backend.store(b, std::memory_order_relaxed); }

int max_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

#define SEFLOW_DISPATCH(fn, ...)                     \
  if (backend() == Backend::parallel) {              \
    parallel::fn(__VA_ARGS__);                       \
  } else {                                           \
    serial::fn(__VA_ARGS__);                         \
  }

template <class S>
void conv1d_fwd(const S* in, const S* w, const S* bias, S* out, int B, int Ci, int Co, int T,
                int K, int dil, int pad_left) {
  SEFLOW_DISPATCH(conv1d_fwd, in, w, bias, out, B, Ci, Co, T, K, dil, pad_left)
}
template <class S>
void conv1d_bwd_input(const S* gout, const S* w, S* gin, int B, int Ci, int Co, int T, int K,
                      int dil, int pad_left) {
  SEFLOW_DISPATCH(conv1d_bwd_input, gout, w, gin, B, Ci, Co, T, K, dil, pad_left)
}
template <class S>
void conv1d_bwd_weight(const S* gout, const S* in, S* gw, S* gb, int B, int Ci, int Co, int T,
                       int K, int dil, int pad_left) {
  SEFLOW_DISPATCH(conv1d_bwd_weight, gout, in, gw, gb, B, Ci, Co, T, K, dil, pad_left)
}
template <class S>
void depthwise_fwd(const S* in, const S* w, S* out, int B, int C, int T, int K, int dil,
                   int pad_left) {
  SEFLOW_DISPATCH(depthwise_fwd, in, w, out, B, C, T, K, dil, pad_left)
}
template <class S>
void depthwise_bwd_input(const S* gout, const S* w, S* gin, int B, int C, int T, int K, int dil,
                         int pad_left) {
  SEFLOW_DISPATCH(depthwise_bwd_input, gout, w, gin, B, C, T, K, dil, pad_left)
}
template <class S>
void depthwise_bwd_weight(const S* gout, const S* in, S* gw, int B, int C, int T, int K, int dil,
                          int pad_left) {
  SEFLOW_DISPATCH(depthwise_bwd_weight, gout, in, gw, B, C, T, K, dil, pad_left)
}
template <class S>
void gated_fwd(const S* a, const S* b, S* out, std::size_t n) {
  SEFLOW_DISPATCH(gated_fwd, a, b, out, n)
}
template <class S>
void gated_bwd(const S* a, const S* b, const S* g, S* ga, S* gb, std::size_t n) {
  SEFLOW_DISPATCH(gated_bwd, a, b, g, ga, gb, n)
}
template <class S>
void ew_exp(const S* in, S* out, std::size_t n) {
  SEFLOW_DISPATCH(ew_exp, in, out, n)
}

#define SEFLOW_INSTANTIATE_DISPATCH(S)                                                          \
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

SEFLOW_INSTANTIATE_DISPATCH(float)
SEFLOW_INSTANTIATE_DISPATCH(double)

}  // namespace seflow::kernels
