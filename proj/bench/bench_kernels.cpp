// Kernel throughput comparison: serial backend vs the OpenMP-parallel one,
// plus one full desk-scale training step for context. Shapes mirror the
// desk-scale conditioner (residual 64, skip 32, T = one grouped second).

#include <chrono>
#include <cstdio>
#include <random>
#include <vector>

#include "seflow/flow.hpp"
#include "seflow/kernels.hpp"
#include "seflow/rng.hpp"
#include "seflow/tensor.hpp"

using namespace seflow;

namespace {

using Clock = std::chrono::steady_clock;

std::vector<float> randvec(std::size_t n, std::mt19937_64& rng) {
  std::normal_distribution<double> nd(0.0, 0.5);
  std::vector<float> v(n);
  for (float& x : v) x = static_cast<float>(nd(rng));
  return v;
}

double time_of(int reps, const std::function<void()>& fn) {
  fn();  // warm up
  const auto t0 = Clock::now();
  for (int r = 0; r < reps; ++r) fn();
  return std::chrono::duration<double>(Clock::now() - t0).count() / reps;
}

void report(const char* name, double macs, double serial_s, double parallel_s) {
  std::printf("%-28s %8.2f GMAC/s serial   %8.2f GMAC/s parallel   (x%.2f)\n", name,
              macs / serial_s * 1e-9, macs / parallel_s * 1e-9, serial_s / parallel_s);
}

}  // namespace

int main() {
  const int B = 4, T = 2000;
  const int R = 64, K2 = 32, G = 8;
  std::mt19937_64 rng = make_rng(99);

  {  // pointwise conv R -> 2R, the dominant training shape
    const int Ci = R, Co = 2 * R;
    std::vector<float> x = randvec(static_cast<std::size_t>(B) * Ci * T, rng);
    std::vector<float> w = randvec(static_cast<std::size_t>(Co) * Ci, rng);
    std::vector<float> bias = randvec(Co, rng);
    std::vector<float> out(static_cast<std::size_t>(B) * Co * T);
    const double macs = static_cast<double>(B) * Ci * Co * T;
    const double ts = time_of(20, [&] {
      kernels::serial::conv1d_fwd(x.data(), w.data(), bias.data(), out.data(), B, Ci, Co, T, 1,
                                  1, 0);
    });
    const double tp = time_of(20, [&] {
      kernels::parallel::conv1d_fwd(x.data(), w.data(), bias.data(), out.data(), B, Ci, Co, T, 1,
                                    1, 0);
    });
    report("conv 1x1 fwd 64->128", macs, ts, tp);

    std::vector<float> gin(x.size());
    const double tsb = time_of(20, [&] {
      std::fill(gin.begin(), gin.end(), 0.0f);
      kernels::serial::conv1d_bwd_input(out.data(), w.data(), gin.data(), B, Ci, Co, T, 1, 1, 0);
    });
    const double tpb = time_of(20, [&] {
      std::fill(gin.begin(), gin.end(), 0.0f);
      kernels::parallel::conv1d_bwd_input(out.data(), w.data(), gin.data(), B, Ci, Co, T, 1, 1,
                                          0);
    });
    report("conv 1x1 bwd input", macs, tsb, tpb);

    std::vector<float> gw(w.size());
    std::vector<float> gb(Co);
    const double tsw = time_of(20, [&] {
      std::fill(gw.begin(), gw.end(), 0.0f);
      kernels::serial::conv1d_bwd_weight(out.data(), x.data(), gw.data(), gb.data(), B, Ci, Co,
                                         T, 1, 1, 0);
    });
    const double tpw = time_of(20, [&] {
      std::fill(gw.begin(), gw.end(), 0.0f);
      kernels::parallel::conv1d_bwd_weight(out.data(), x.data(), gw.data(), gb.data(), B, Ci, Co,
                                           T, 1, 1, 0);
    });
    report("conv 1x1 bwd weight", macs, tsw, tpw);
  }

  {  // conditioning projection G -> 2R
    const int Ci = G, Co = 2 * R;
    std::vector<float> x = randvec(static_cast<std::size_t>(B) * Ci * T, rng);
    std::vector<float> w = randvec(static_cast<std::size_t>(Co) * Ci, rng);
    std::vector<float> out(static_cast<std::size_t>(B) * Co * T);
    const double macs = static_cast<double>(B) * Ci * Co * T;
    const double ts = time_of(20, [&] {
      kernels::serial::conv1d_fwd(x.data(), w.data(), static_cast<const float*>(nullptr), out.data(), B, Ci, Co, T, 1, 1,
                                  0);
    });
    const double tp = time_of(20, [&] {
      kernels::parallel::conv1d_fwd(x.data(), w.data(), static_cast<const float*>(nullptr), out.data(), B, Ci, Co, T, 1, 1,
                                    0);
    });
    report("conv 1x1 fwd 8->128", macs, ts, tp);
  }

  {  // dilated depthwise, kernel 3
    const int K = 3, dil = 4, pad = (K - 1) * dil / 2;
    std::vector<float> x = randvec(static_cast<std::size_t>(B) * R * T, rng);
    std::vector<float> w = randvec(static_cast<std::size_t>(R) * K, rng);
    std::vector<float> out(x.size());
    const double macs = static_cast<double>(B) * R * T * K;
    const double ts = time_of(50, [&] {
      kernels::serial::depthwise_fwd(x.data(), w.data(), out.data(), B, R, T, K, dil, pad);
    });
    const double tp = time_of(50, [&] {
      kernels::parallel::depthwise_fwd(x.data(), w.data(), out.data(), B, R, T, K, dil, pad);
    });
    report("depthwise fwd k3", macs, ts, tp);
  }

  {  // gated activation
    const std::size_t n = static_cast<std::size_t>(B) * R * T;
    std::vector<float> a = randvec(n, rng), b = randvec(n, rng), out(n);
    const double macs = static_cast<double>(n);  // counted as one op per element
    const double ts =
        time_of(20, [&] { kernels::serial::gated_fwd(a.data(), b.data(), out.data(), n); });
    const double tp =
        time_of(20, [&] { kernels::parallel::gated_fwd(a.data(), b.data(), out.data(), n); });
    report("gated tanh*sigmoid fwd", macs, ts, tp);

    std::vector<float> ga(n), gb(n);
    const double tsb = time_of(20, [&] {
      std::fill(ga.begin(), ga.end(), 0.0f);
      std::fill(gb.begin(), gb.end(), 0.0f);
      kernels::serial::gated_bwd(a.data(), b.data(), out.data(), ga.data(), gb.data(), n);
    });
    const double tpb = time_of(20, [&] {
      std::fill(ga.begin(), ga.end(), 0.0f);
      std::fill(gb.begin(), gb.end(), 0.0f);
      kernels::parallel::gated_bwd(a.data(), b.data(), out.data(), ga.data(), gb.data(), n);
    });
    report("gated tanh*sigmoid bwd", macs, tsb, tpb);
  }

  {  // skip conv R -> R+K2
    const int Ci = R, Co = R + K2;
    std::vector<float> x = randvec(static_cast<std::size_t>(B) * Ci * T, rng);
    std::vector<float> w = randvec(static_cast<std::size_t>(Co) * Ci, rng);
    std::vector<float> out(static_cast<std::size_t>(B) * Co * T);
    const double macs = static_cast<double>(B) * Ci * Co * T;
    const double ts = time_of(20, [&] {
      kernels::serial::conv1d_fwd(x.data(), w.data(), static_cast<const float*>(nullptr), out.data(), B, Ci, Co, T, 1, 1,
                                  0);
    });
    const double tp = time_of(20, [&] {
      kernels::parallel::conv1d_fwd(x.data(), w.data(), static_cast<const float*>(nullptr), out.data(), B, Ci, Co, T, 1, 1,
                                    0);
    });
    report("conv 1x1 fwd 64->96", macs, ts, tp);
  }

  {  // one full desk-scale training step for context
    FlowModel<float> model(FlowConfig::desk_scale());
    model.random_init(3);
    std::vector<float> xv = randvec(static_cast<std::size_t>(B) * G * T, rng);
    std::vector<float> cv = randvec(static_cast<std::size_t>(B) * G * T, rng);
    const auto t0 = Clock::now();
    Tensor<float> x = Tensor<float>::from_vector(Shape{B, G, T}, xv);
    Tensor<float> cond = Tensor<float>::from_vector(Shape{B, G, T}, cv);
    FlowOut<float> out = model.forward_graph(x, cond);
    Tensor<float> loss = model.nll_graph(out, 1.0);
    const auto t1 = Clock::now();
    loss.backward();
    const auto t2 = Clock::now();
    std::printf("desk-scale step (B=4, 1 s):  forward %.3f s, backward %.3f s\n",
                std::chrono::duration<double>(t1 - t0).count(),
                std::chrono::duration<double>(t2 - t1).count());
  }
  return 0;
}
