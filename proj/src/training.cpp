#include "seflow/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>

#include "seflow/rng.hpp"

namespace seflow {

void TrainConfig::validate() const {
  if (batch_size < 1) throw DataError(detail::strfmt("train config: batch_size %d < 1", batch_size));
  if (!(lr_initial > 0) || !(lr_finetune > 0))
    throw DataError(detail::strfmt("train config: learning rates must be positive (%g, %g)",
                                   lr_initial, lr_finetune));
  if (patience < 1) throw DataError(detail::strfmt("train config: patience %d < 1", patience));
  if (max_epochs < 1) throw DataError(detail::strfmt("train config: max_epochs %d < 1", max_epochs));
  if (!(chunk_seconds > 0))
    throw DataError(detail::strfmt("train config: chunk_seconds %g must be positive",
                                   chunk_seconds));
  if (compand && !(mu > 0))
    throw DataError(detail::strfmt("train config: companding enabled with invalid mu %g", mu));
  if (!(clip_norm > 0))
    throw DataError(detail::strfmt("train config: clip_norm %g must be positive", clip_norm));
}

void validate_pairset(const PairSet& set, const char* who) {
  if (set.clean.size() != set.noisy.size())
    throw DataError(detail::strfmt("%s: %zu clean vs %zu noisy utterances", who, set.clean.size(),
                                   set.noisy.size()));
  if (set.clean.empty()) throw DataError(detail::strfmt("%s: empty", who));
  for (std::size_t i = 0; i < set.clean.size(); ++i) {
    if (set.clean[i].samples.size() != set.noisy[i].samples.size())
      throw DataError(detail::strfmt("%s: pair %zu length mismatch (%zu vs %zu samples)", who, i,
                                     set.clean[i].samples.size(), set.noisy[i].samples.size()));
    if (set.clean[i].sample_rate != 16000 || set.noisy[i].sample_rate != 16000)
      throw DataError(detail::strfmt("%s: pair %zu is not 16 kHz", who, i));
    if (set.clean[i].companded || set.noisy[i].companded)
      throw DataError(detail::strfmt("%s: pair %zu arrives companded; companding is applied "
                                     "inside the loop",
                                     who, i));
    if (set.clean[i].samples.empty()) throw DataError(detail::strfmt("%s: pair %zu empty", who, i));
  }
}

template <class S>
void adam_update(S* param, const S* grad, S* m, S* v, std::size_t n, std::uint64_t step, double lr,
                 double beta1, double beta2, double eps) {
  const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(step));
  const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(step));
  for (std::size_t j = 0; j < n; ++j) {
    const double g = static_cast<double>(grad[j]);
    const double mj = beta1 * static_cast<double>(m[j]) + (1.0 - beta1) * g;
    const double vj = beta2 * static_cast<double>(v[j]) + (1.0 - beta2) * g * g;
    m[j] = static_cast<S>(mj);
    v[j] = static_cast<S>(vj);
    const double mhat = mj / bc1;
    const double vhat = vj / bc2;
    param[j] = static_cast<S>(static_cast<double>(param[j]) - lr * mhat / (std::sqrt(vhat) + eps));
  }
}

template void adam_update<float>(float*, const float*, float*, float*, std::size_t, std::uint64_t,
                                 double, double, double, double);
template void adam_update<double>(double*, const double*, double*, double*, std::size_t,
                                  std::uint64_t, double, double, double, double);

void write_history_csv(const std::string& path, const std::vector<EpochRow>& history) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw DataError(detail::strfmt("cannot create history file %s", path.c_str()));
  f << "epoch,phase,train_nll,val_nll,lr,seconds\n";
  for (const EpochRow& r : history)
    f << detail::strfmt("%d,%s,%.17g,%.17g,%.10g,%.3f\n", r.epoch, r.phase.c_str(), r.train_nll,
                        r.val_nll, r.lr, r.seconds);
  if (!f) throw DataError(detail::strfmt("short write to history file %s", path.c_str()));
}

namespace {

using Params = std::vector<std::pair<std::string, Tensor<float>>>;

std::string serialize_model(const FlowModel<float>& m) {
  std::ostringstream os(std::ios::binary);
  save_checkpoint(os, m);
  return os.str();
}

FlowModel<float> model_from_blob(const std::string& blob) {
  std::istringstream is(blob, std::ios::binary);
  return load_checkpoint(is).model;
}

void restore_from_blob(FlowModel<float>& model, const std::string& blob) {
  FlowModel<float> src = model_from_blob(blob);
  auto sp = src.named_parameters();
  auto dp = model.named_parameters();
  for (std::size_t i = 0; i < dp.size(); ++i) dp[i].second.mutable_values() = sp[i].second.values();
  model.companded = src.companded;
  model.mu = src.mu;
}

/// Aligned slice of `want` samples at one random offset, zero-padded when the
/// utterance is shorter. Companding is applied here, after slicing.
void fill_grouped_chunk(const AudioBuffer& clean, const AudioBuffer& noisy, int want, int G,
                        int frames, bool compand, double mu, std::mt19937_64& rng, float* x_row,
                        float* c_row) {
  const std::size_t len = clean.samples.size();
  std::size_t off = 0;
  if (len > static_cast<std::size_t>(want))
    off = std::uniform_int_distribution<std::size_t>(0, len - want)(rng);
  AudioBuffer cc, nc;
  cc.samples.assign(want, 0.0);
  nc.samples.assign(want, 0.0);
  const std::size_t take = std::min(len - off, static_cast<std::size_t>(want));
  std::copy_n(clean.samples.begin() + static_cast<std::ptrdiff_t>(off), take, cc.samples.begin());
  std::copy_n(noisy.samples.begin() + static_cast<std::ptrdiff_t>(off), take, nc.samples.begin());
  if (compand) {
    cc = mu_compress(cc, mu);
    nc = mu_compress(nc, mu);
  }
  for (int t = 0; t < frames; ++t)
    for (int c = 0; c < G; ++c) {
      x_row[static_cast<std::size_t>(c) * frames + t] =
          static_cast<float>(cc.samples[static_cast<std::size_t>(t) * G + c]);
      c_row[static_cast<std::size_t>(c) * frames + t] =
          static_cast<float>(nc.samples[static_cast<std::size_t>(t) * G + c]);
    }
}

/// Global-norm clip plus Adam across all tensors. Returns false (and clears
/// gradients) when any gradient is non-finite.
bool optimizer_step(Params& params, TrainState& st, double lr, double clip_norm) {
  double norm2 = 0;
  bool finite = true;
  for (auto& [name, p] : params) {
    p.ensure_grad();
    for (float g : p.node()->grad) {
      if (!std::isfinite(g)) {
        finite = false;
        break;
      }
      norm2 += static_cast<double>(g) * static_cast<double>(g);
    }
    if (!finite) break;
  }
  if (!finite) {
    for (auto& [name, p] : params) p.zero_grad();
    return false;
  }
  const double norm = std::sqrt(norm2);
  const float scale = norm > clip_norm ? static_cast<float>(clip_norm / norm) : 1.0f;
  ++st.step;
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor<float>& p = params[i].second;
    std::vector<float>& grad = p.node()->grad;
    if (scale != 1.0f)
      for (float& g : grad) g *= scale;
    adam_update<float>(p.mutable_values().data(), grad.data(), st.m[i].data(), st.v[i].data(),
                       grad.size(), st.step, lr);
    p.zero_grad();
  }
  return true;
}

void write_epoch_outputs(const TrainOutputs& outputs, const FlowModel<float>& model,
                         const TrainState& st, const std::string& best_blob, bool best_changed,
                         const std::vector<EpochRow>& history) {
  if (!outputs.last_checkpoint.empty()) save_checkpoint(outputs.last_checkpoint, model, &st);
  if (!outputs.best_checkpoint.empty() && best_changed) {
    std::ofstream f(outputs.best_checkpoint, std::ios::binary | std::ios::trunc);
    if (!f)
      throw DataError(detail::strfmt("cannot create checkpoint %s",
                                     outputs.best_checkpoint.c_str()));
    f.write(best_blob.data(), static_cast<std::streamsize>(best_blob.size()));
    if (!f) throw DataError(detail::strfmt("short write to %s", outputs.best_checkpoint.c_str()));
  }
  if (!outputs.history_csv.empty()) write_history_csv(outputs.history_csv, history);
}

}  // namespace

double dataset_nll(const FlowModel<float>& model, const PairSet& set, bool compand, double mu,
                   double sigma) {
  const int G = model.config().group_size;
  double acc = 0;
  std::size_t elems = 0;
  for (std::size_t i = 0; i < set.size(); ++i) {
    AudioBuffer clean = set.clean[i];
    AudioBuffer noisy = set.noisy[i];
    if (compand) {
      clean = mu_compress(clean, mu);
      noisy = mu_compress(noisy, mu);
    }
    Tensor<float> x = group<float>(clean, G);
    Tensor<float> cond = group<float>(noisy, G);
    auto [z, logdet] = model.flow_forward(x, cond);
    double sumsq = 0;
    for (float v : z.values()) sumsq += static_cast<double>(v) * static_cast<double>(v);
    const double nll = nll_value(sumsq, logdet, z.numel(), sigma);
    if (!std::isfinite(nll)) return nll;  // propagate the incident to the caller
    acc += nll * static_cast<double>(z.numel());
    elems += z.numel();
  }
  return acc / static_cast<double>(elems);
}

TrainResult train(FlowModel<float>& model, const PairSet& train_set, const PairSet& val_set,
                  const TrainConfig& cfg, const TrainOutputs& outputs, const TrainState* resume,
                  const EpochCallback& on_epoch) {
  cfg.validate();
  validate_pairset(train_set, "training set");
  validate_pairset(val_set, "validation set");
  if (resume && model.companded != cfg.compand)
    throw DataError("resume: checkpoint companding flag does not match the configuration");
  model.companded = cfg.compand;
  model.mu = cfg.mu;

  const double sigma = model.config().sigma_train;
  const int G = model.config().group_size;
  const int want = static_cast<int>(std::llround(cfg.chunk_seconds * 16000.0));
  const int frames = want / G;
  if (frames < 1) throw DataError(detail::strfmt("train config: %g s chunk is shorter than one "
                                                 "group of %d samples",
                                                 cfg.chunk_seconds, G));

  Params params = model.named_parameters();
  TrainState st;
  std::string best_blob = serialize_model(model);
  if (resume) {
    st = *resume;
    if (st.phase > 1) throw DataError(detail::strfmt("resume: bad phase %u", st.phase));
    if (st.m.size() != params.size() || st.v.size() != params.size())
      throw DataError(detail::strfmt("resume: optimizer state covers %zu tensors, model has %zu",
                                     st.m.size(), params.size()));
    for (std::size_t i = 0; i < params.size(); ++i)
      if (st.m[i].size() != params[i].second.numel() || st.v[i].size() != params[i].second.numel())
        throw DataError(detail::strfmt("resume: moment size mismatch on %s",
                                       params[i].first.c_str()));
    if (!outputs.best_checkpoint.empty() &&
        std::filesystem::exists(outputs.best_checkpoint)) {
      std::ifstream f(outputs.best_checkpoint, std::ios::binary);
      std::string blob((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
      model_from_blob(blob);  // validates before adoption
      best_blob = std::move(blob);
    }
  } else {
    st.m.assign(params.size(), {});
    st.v.assign(params.size(), {});
    for (std::size_t i = 0; i < params.size(); ++i) {
      st.m[i].assign(params[i].second.numel(), 0.0f);
      st.v[i].assign(params[i].second.numel(), 0.0f);
    }
  }

  TrainResult res;
  bool aborted = false;
  const std::uint32_t start_phase = st.phase;
  for (std::uint32_t phase = start_phase; phase < 2 && !aborted; ++phase) {
    const double lr = phase == 0 ? cfg.lr_initial : cfg.lr_finetune;
    EarlyStopping stopper(cfg.patience);
    if (resume && phase == start_phase) {
      stopper.restore(st.best_val_nll, static_cast<int>(st.epochs_since_best));
    } else if (phase != start_phase) {
      // Finetune starts from the initial phase's best weights, moments reset.
      restore_from_blob(model, best_blob);
      for (auto& m : st.m) std::fill(m.begin(), m.end(), 0.0f);
      for (auto& v : st.v) std::fill(v.begin(), v.end(), 0.0f);
      st.phase = phase;
      st.epoch_in_phase = 0;
      st.best_val_nll = std::numeric_limits<double>::infinity();
      st.epochs_since_best = 0;
    }

    while (!stopper.should_stop() && st.epoch_in_phase < static_cast<std::uint32_t>(cfg.max_epochs)) {
      const auto t0 = std::chrono::steady_clock::now();
      std::mt19937_64 rng = make_rng(derive_seed(cfg.seed, phase, st.epoch_in_phase));
      std::vector<std::size_t> order(train_set.size());
      std::iota(order.begin(), order.end(), std::size_t{0});
      std::shuffle(order.begin(), order.end(), rng);

      double nll_acc = 0;
      std::size_t nll_elems = 0;
      for (std::size_t b0 = 0; b0 < order.size() && !aborted; b0 += cfg.batch_size) {
        const int B = static_cast<int>(std::min<std::size_t>(cfg.batch_size, order.size() - b0));
        const Shape sh{B, G, frames};
        std::vector<float> xv(sh.numel()), cv(sh.numel());
        for (int b = 0; b < B; ++b) {
          const std::size_t idx = order[b0 + b];
          const std::size_t row = static_cast<std::size_t>(b) * G * frames;
          fill_grouped_chunk(train_set.clean[idx], train_set.noisy[idx], want, G, frames,
                             cfg.compand, cfg.mu, rng, xv.data() + row, cv.data() + row);
        }
        Tensor<float> x = Tensor<float>::from_vector(sh, std::move(xv));
        Tensor<float> cond = Tensor<float>::from_vector(sh, std::move(cv));
        FlowOut<float> out = model.forward_graph(x, cond);
        Tensor<float> loss = model.nll_graph(out, sigma);
        const double lv = static_cast<double>(loss.item());
        if (!std::isfinite(lv)) {
          std::fprintf(stderr, "[train] non-finite NLL at phase %u epoch %u; aborting with the "
                               "best checkpoint retained\n",
                       phase, st.epoch_in_phase + 1);
          aborted = true;
          break;
        }
        nll_acc += lv * static_cast<double>(out.z.numel());
        nll_elems += out.z.numel();
        loss.backward();
        if (!optimizer_step(params, st, lr, cfg.clip_norm))
          std::fprintf(stderr, "[train] non-finite gradient at phase %u epoch %u step %llu; "
                               "step skipped\n",
                       phase, st.epoch_in_phase + 1,
                       static_cast<unsigned long long>(st.step + 1));
      }
      if (aborted) break;

      const double val = dataset_nll(model, val_set, cfg.compand, cfg.mu, sigma);
      EpochRow row;
      row.epoch = static_cast<int>(st.epochs_total) + 1;
      row.phase = phase == 0 ? "initial" : "finetune";
      row.train_nll = nll_acc / static_cast<double>(nll_elems);
      row.val_nll = val;
      row.lr = lr;
      row.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      res.history.push_back(row);
      if (on_epoch) on_epoch(row);

      if (!std::isfinite(val)) {
        std::fprintf(stderr, "[train] non-finite validation NLL at epoch %d; aborting with the "
                             "best checkpoint retained\n",
                     row.epoch);
        aborted = true;
        break;
      }
      const bool improved = stopper.observe(val);
      if (improved) best_blob = serialize_model(model);
      ++st.epoch_in_phase;
      ++st.epochs_total;
      st.best_val_nll = stopper.best();
      st.epochs_since_best = static_cast<std::uint32_t>(stopper.epochs_since_best());
      write_epoch_outputs(outputs, model, st, best_blob, improved, res.history);
    }
  }

  res.aborted = aborted;
  res.state = st;
  res.model = model_from_blob(best_blob);
  return res;
}

}  // namespace seflow
