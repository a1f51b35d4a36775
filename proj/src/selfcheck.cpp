#include "seflow/selfcheck.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>
#include <random>
#include <utility>

#include "seflow/audio.hpp"
#include "seflow/errors.hpp"
#include "seflow/evaluation.hpp"
#include "seflow/linalg.hpp"
#include "seflow/rng.hpp"

namespace seflow::selfcheck {

namespace {

double rel_err(double a, double b) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-8});
}

template <class S>
Tensor<S> random_signal(Shape sh, std::mt19937_64& rng, double amp) {
  std::normal_distribution<double> nd(0.0, amp);
  std::vector<S> v(sh.numel());
  for (S& x : v) x = static_cast<S>(nd(rng));
  return Tensor<S>::from_vector(sh, std::move(v));
}

/// Max round-trip error of one freshly randomized model on one input draw.
template <class S>
double round_trip_error(const FlowConfig& cfg, int frames, std::uint64_t seed) {
  FlowModel<S> model(cfg);
  model.random_init(seed);
  randomize_affine_response(model, derive_seed(seed, 0x616666ULL));
  std::mt19937_64 rng = make_rng(derive_seed(seed, 0x696e70ULL));
  const Shape sh{1, cfg.group_size, frames};
  Tensor<S> x = random_signal<S>(sh, rng, 0.5);
  Tensor<S> cond = random_signal<S>(sh, rng, 0.5);
  auto [z, logdet] = model.flow_forward(x, cond);
  (void)logdet;
  Tensor<S> back = model.flow_inverse(z, cond);
  double worst = 0;
  const std::vector<S>& a = x.values();
  const std::vector<S>& b = back.values();
  for (std::size_t j = 0; j < a.size(); ++j)
    worst = std::max(worst, std::abs(static_cast<double>(a[j]) - static_cast<double>(b[j])));
  return worst;
}

/// Per-element NLL with no tape, at the model's current weights.
template <class S>
double nll_at(const FlowModel<S>& model, const Tensor<S>& x, const Tensor<S>& cond,
              double sigma) {
  autograd::NoGradGuard guard;
  FlowOut<S> out = model.forward_graph(x, cond);
  return static_cast<double>(model.nll_graph(out, sigma).item());
}

double normalized_entropy(const std::vector<std::size_t>& counts) {
  std::size_t total = 0;
  for (std::size_t c : counts) total += c;
  double h = 0;
  for (std::size_t c : counts) {
    if (c == 0) continue;
    const double p = static_cast<double>(c) / static_cast<double>(total);
    h -= p * std::log(p);
  }
  return h / std::log(static_cast<double>(counts.size()));
}

double max_bin_share(const std::vector<std::size_t>& counts) {
  std::size_t total = 0, top = 0;
  for (std::size_t c : counts) {
    total += c;
    top = std::max(top, c);
  }
  return static_cast<double>(top) / static_cast<double>(total);
}

AudioBuffer harmonic_tone(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng = make_rng(seed);
  std::uniform_real_distribution<double> f0d(80.0, 300.0);
  const double f0 = f0d(rng);
  AudioBuffer out;
  out.samples.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) / out.sample_rate;
    const double env = 0.5 + 0.4 * std::sin(2.0 * 3.14159265358979323846 * 1.3 * t);
    double v = 0;
    for (int h = 1; h <= 4; ++h)
      v += std::sin(2.0 * 3.14159265358979323846 * f0 * h * t) / h;
    out.samples[i] = 0.3 * env * v;
  }
  return out;
}

AudioBuffer white_noise(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng = make_rng(seed);
  std::normal_distribution<double> nd(0.0, 0.2);
  AudioBuffer out;
  out.samples.resize(n);
  for (double& v : out.samples) v = nd(rng);
  return out;
}

}  // namespace

template <class S>
void randomize_affine_response(FlowModel<S>& model, std::uint64_t seed, double scale) {
  std::mt19937_64 rng = make_rng(derive_seed(seed, 0x656e64ULL));
  std::normal_distribution<double> nd(0.0, scale);
  for (auto& [name, p] : model.named_parameters()) {
    const bool end_mag = name.find(".end.g") != std::string::npos;
    const bool end_bias = name.find(".end.bias") != std::string::npos;
    if (!end_mag && !end_bias) continue;
    for (S& v : p.mutable_values()) v = static_cast<S>(nd(rng));
  }
}

template void randomize_affine_response<float>(FlowModel<float>&, std::uint64_t, double);
template void randomize_affine_response<double>(FlowModel<double>&, std::uint64_t, double);

std::vector<CheckResult> bijectivity_suite(Level level, std::uint64_t seed) {
  const FlowConfig cfg = FlowConfig::desk_scale();
  const int frames = (level == Level::full ? 16000 : 4000) / cfg.group_size;
  const int n_float = level == Level::full ? 100 : 6;
  const int n_double = level == Level::full ? 8 : 2;

  double worst_f = 0, worst_d = 0;
  for (int i = 0; i < n_float; ++i)
    worst_f = std::max(worst_f, round_trip_error<float>(
                                    cfg, frames, derive_seed(seed, 0x626a66ULL, i)));
  for (int i = 0; i < n_double; ++i)
    worst_d = std::max(worst_d, round_trip_error<double>(
                                    cfg, frames, derive_seed(seed, 0x626a64ULL, i)));

  std::vector<CheckResult> out;
  out.push_back({"bijectivity",
                 detail::strfmt("round trip, single precision, %d models", n_float),
                 worst_f < 1e-4, worst_f, 1e-4, "max |inverse(forward(x)) - x|"});
  out.push_back({"bijectivity",
                 detail::strfmt("round trip, double precision, %d models", n_double),
                 worst_d < 1e-10, worst_d, 1e-10, "max |inverse(forward(x)) - x|"});
  return out;
}

std::vector<CheckResult> model_bijectivity(const FlowModel<float>& model, std::uint64_t seed) {
  std::vector<CheckResult> out;
  try {
    const int frames = 4000 / model.config().group_size;
    std::mt19937_64 rng = make_rng(derive_seed(seed, 0x6d626aULL));
    double worst = 0;
    for (int i = 0; i < 3; ++i) {
      const Shape sh{1, model.config().group_size, frames};
      Tensor<float> x = random_signal<float>(sh, rng, 0.5);
      Tensor<float> cond = random_signal<float>(sh, rng, 0.5);
      auto [z, logdet] = model.flow_forward(x, cond);
      (void)logdet;
      Tensor<float> back = model.flow_inverse(z, cond);
      for (std::size_t j = 0; j < x.values().size(); ++j)
        worst = std::max(worst, std::abs(static_cast<double>(x.values()[j]) -
                                         static_cast<double>(back.values()[j])));
      if (!std::isfinite(worst)) break;
    }
    const bool ok = std::isfinite(worst) && worst < 1e-4;
    out.push_back({"checkpoint", "loaded model round trip", ok, worst, 1e-4,
                   "max |inverse(forward(x)) - x|"});
  } catch (const Error& e) {
    out.push_back({"checkpoint", "loaded model round trip", false, 0, 1e-4, e.what()});
  }
  return out;
}

std::vector<CheckResult> jacobian_suite(Level level, std::uint64_t seed) {
  const FlowConfig cfg = FlowConfig::tiny();
  const int n_models = level == Level::full ? 20 : 5;
  const int frames = 8;
  const double h = 1e-4;

  double worst = 0;
  for (int m = 0; m < n_models; ++m) {
    FlowModel<double> model(cfg);
    const std::uint64_t ms = derive_seed(seed, 0x6a6163ULL, m);
    model.random_init(ms);
    randomize_affine_response(model, derive_seed(ms, 0x616666ULL));
    std::mt19937_64 rng = make_rng(derive_seed(ms, 0x696e70ULL));
    const Shape sh{1, cfg.group_size, frames};
    Tensor<double> x = random_signal<double>(sh, rng, 0.5);
    Tensor<double> cond = random_signal<double>(sh, rng, 0.5);

    const std::size_t dim = sh.numel();
    auto [z0, model_logdet] = model.flow_forward(x, cond);
    (void)z0;
    std::vector<double> jac(dim * dim);
    std::vector<double> base = x.values();
    for (std::size_t j = 0; j < dim; ++j) {
      std::vector<double> xp = base, xm = base;
      xp[j] += h;
      xm[j] -= h;
      auto [zp, lp] = model.flow_forward(Tensor<double>::from_vector(sh, std::move(xp)), cond);
      auto [zm, lm] = model.flow_forward(Tensor<double>::from_vector(sh, std::move(xm)), cond);
      (void)lp;
      (void)lm;
      for (std::size_t i = 0; i < dim; ++i)
        jac[i * dim + j] = (zp.values()[i] - zm.values()[i]) / (2.0 * h);
    }
    linalg::Lu lu = linalg::lu_factor(jac, static_cast<int>(dim));
    const double fd_logdet = lu.singular ? -std::numeric_limits<double>::infinity()
                                         : lu.log_abs_det;
    worst = std::max(worst, rel_err(model_logdet, fd_logdet));
  }

  return {{"jacobian",
           detail::strfmt("total log-det vs finite-difference Jacobian, %d models", n_models),
           worst < 1e-3, worst, 1e-3, "max relative error"}};
}

std::vector<CheckResult> gradient_suite(Level level, std::uint64_t seed) {
  const FlowConfig cfg = FlowConfig::tiny();
  const int n_coords = level == Level::full ? 200 : 60;
  const double h = 1e-5;
  const double sigma = 1.0;

  FlowModel<double> model(cfg);
  model.random_init(derive_seed(seed, 0x677263ULL));
  randomize_affine_response(model, derive_seed(seed, 0x677263ULL, 1));
  std::mt19937_64 rng = make_rng(derive_seed(seed, 0x677263ULL, 2));
  const Shape sh{1, cfg.group_size, 8};
  Tensor<double> x = random_signal<double>(sh, rng, 0.5);
  Tensor<double> cond = random_signal<double>(sh, rng, 0.5);

  auto params = model.named_parameters();
  FlowOut<double> out = model.forward_graph(x, cond);
  Tensor<double> loss = model.nll_graph(out, sigma);
  loss.backward();

  std::vector<std::pair<std::size_t, std::size_t>> coords;
  for (std::size_t p = 0; p < params.size(); ++p)
    for (std::size_t c = 0; c < params[p].second.numel(); ++c) coords.emplace_back(p, c);
  std::shuffle(coords.begin(), coords.end(), rng);
  const std::size_t take = std::min<std::size_t>(n_coords, coords.size());

  double worst = 0;
  for (std::size_t n = 0; n < take; ++n) {
    auto [p, c] = coords[n];
    const std::vector<double>& g = params[p].second.node()->grad;
    const double analytic = c < g.size() ? g[c] : 0.0;
    std::vector<double>& vals = params[p].second.mutable_values();
    const double orig = vals[c];
    vals[c] = orig + h;
    const double fp = nll_at(model, x, cond, sigma);
    vals[c] = orig - h;
    const double fm = nll_at(model, x, cond, sigma);
    vals[c] = orig;
    const double fd = (fp - fm) / (2.0 * h);
    worst = std::max(worst, rel_err(analytic, fd));
  }

  return {{"gradients",
           detail::strfmt("NLL gradient vs central differences, %zu coordinates", take),
           worst < 1e-4, worst, 1e-4, "max relative error"}};
}

std::vector<CheckResult> mulaw_suite(Level level, std::uint64_t seed) {
  std::vector<CheckResult> out;
  std::mt19937_64 rng = make_rng(derive_seed(seed, 0x6d756cULL));

  {
    const std::size_t n = level == Level::full ? 100000 : 20000;
    std::uniform_real_distribution<double> ud(-1.0, 1.0);
    AudioBuffer x;
    x.samples.resize(n);
    for (double& v : x.samples) v = ud(rng);
    AudioBuffer back = mu_expand(mu_compress(x));
    double worst = 0;
    for (std::size_t j = 0; j < n; ++j)
      worst = std::max(worst, std::abs(back.samples[j] - x.samples[j]));
    out.push_back({"mu-law", detail::strfmt("round trip on %zu uniform samples", n),
                   worst < 1e-6, worst, 1e-6, "max |expand(compress(x)) - x|"});
  }

  {
    AudioBuffer probe;
    probe.samples = {0.0, 1.0 / 255.0, 1.0};
    AudioBuffer y = mu_compress(probe);
    const double err = std::max({std::abs(y.samples[0]), std::abs(y.samples[1] - 0.125),
                                 std::abs(y.samples[2] - 1.0)});
    out.push_back({"mu-law", "closed-form points g(0)=0, g(1/255)=1/8, g(1)=1", err <= 1e-12,
                   err, 1e-12, "max abs deviation"});
  }

  {
    const std::size_t n = level == Level::full ? 200000 : 50000;
    std::exponential_distribution<double> ed(1.0 / 0.05);
    std::bernoulli_distribution flip(0.5);
    AudioBuffer x;
    x.samples.resize(n);
    for (double& v : x.samples) {
      double mag = std::min(ed(rng), 1.0);
      v = flip(rng) ? mag : -mag;
    }
    AudioBuffer y = mu_compress(x);
    const double h_raw = normalized_entropy(amplitude_histogram(x));
    const double h_comp = normalized_entropy(amplitude_histogram(y));
    const double share_raw = max_bin_share(amplitude_histogram(x));
    const double share_comp = max_bin_share(amplitude_histogram(y));
    out.push_back({"mu-law", "histogram equalization: entropy gain on peaked input",
                   h_comp - h_raw >= 0.15, h_comp - h_raw, 0.15,
                   detail::strfmt("raw %.3f -> companded %.3f, must gain at least tolerance",
                                  h_raw, h_comp)});
    out.push_back({"mu-law", "histogram equalization: companded flatness", h_comp >= 0.8,
                   h_comp, 0.8, "normalized entropy, must be at least tolerance"});
    out.push_back({"mu-law", "histogram equalization: peak bin reduction",
                   share_comp <= 0.5 * share_raw, share_comp, 0.5 * share_raw,
                   detail::strfmt("raw peak share %.4f, companded must be at most half",
                                  share_raw)});
  }

  return out;
}

std::vector<CheckResult> mixing_suite(Level level, std::uint64_t seed) {
  (void)level;
  const double snrs[] = {0.0, 5.0, 10.0, 15.0, 2.5, 7.5, 12.5, 17.5};
  std::vector<CheckResult> out;
  int i = 0;
  for (double snr : snrs) {
    AudioBuffer clean = harmonic_tone(32000, derive_seed(seed, 0x636c6eULL, i));
    AudioBuffer noise = white_noise(40000, derive_seed(seed, 0x6e7a65ULL, i));
    std::mt19937_64 rng = make_rng(derive_seed(seed, 0x6d6978ULL, i));
    MixResult mix = mix_at_snr(clean, noise, snr, rng);
    const double measured = global_snr(mix.clean, mix.noisy).db;
    const double err = std::abs(measured - snr);
    out.push_back({"mixing", detail::strfmt("measured SNR at %.1f dB request", snr),
                   err <= 0.01, err, 0.01, detail::strfmt("measured %.6f dB", measured)});
    ++i;
  }
  return out;
}

std::vector<CheckResult> run_all(Level level, std::uint64_t seed, const FlowModel<float>* model) {
  std::vector<CheckResult> all;
  for (auto* suite : {&bijectivity_suite, &jacobian_suite, &gradient_suite, &mulaw_suite,
                      &mixing_suite}) {
    std::vector<CheckResult> part = (*suite)(level, seed);
    all.insert(all.end(), std::make_move_iterator(part.begin()),
               std::make_move_iterator(part.end()));
  }
  if (model) {
    std::vector<CheckResult> part = model_bijectivity(*model, seed);
    all.insert(all.end(), std::make_move_iterator(part.begin()),
               std::make_move_iterator(part.end()));
  }
  return all;
}

bool all_passed(const std::vector<CheckResult>& results) {
  for (const CheckResult& r : results)
    if (!r.passed) return false;
  return !results.empty();
}

bool print_report(std::ostream& os, const std::vector<CheckResult>& results) {
  std::size_t ok = 0;
  for (const CheckResult& r : results) {
    os << detail::strfmt("[%s] %s: %s: measured %.6g vs tolerance %.6g",
                         r.passed ? "PASS" : "FAIL", r.suite.c_str(), r.name.c_str(), r.measured,
                         r.tolerance);
    if (!r.note.empty()) os << " (" << r.note << ")";
    os << '\n';
    if (r.passed) ++ok;
  }
  os << detail::strfmt("%zu/%zu checks passed\n", ok, results.size());
  return all_passed(results);
}

}  // namespace seflow::selfcheck
