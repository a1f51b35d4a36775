#pragma once

// NLL training: batching of aligned clean/noisy chunk pairs, Adam with
// gradient clipping, validation-driven early stopping, and the two-phase
// learning-rate schedule (initial, then finetune from the best checkpoint).

#include <cstdint>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "seflow/audio.hpp"
#include "seflow/checkpoint.hpp"
#include "seflow/flow.hpp"

namespace seflow {

struct TrainConfig {
  int batch_size = 4;
  double lr_initial = 3e-4;
  double lr_finetune = 3e-5;
  int patience = 20;
  int max_epochs = 150;  // cap per phase
  double chunk_seconds = 1.0;
  std::uint64_t seed = 0;
  bool compand = true;
  double mu = 255.0;
  double clip_norm = 100.0;  // global gradient-norm ceiling

  void validate() const;

  bool operator==(const TrainConfig&) const = default;
};

/// Aligned clean/noisy utterances (same index, same length).
struct PairSet {
  std::vector<AudioBuffer> clean;
  std::vector<AudioBuffer> noisy;

  std::size_t size() const { return clean.size(); }
};

void validate_pairset(const PairSet& set, const char* who);

/// One Adam update on a single tensor. Internal arithmetic runs in double;
/// storage stays in S so float training state round-trips through
/// checkpoints exactly. step is 1-based and already incremented.
template <class S>
void adam_update(S* param, const S* grad, S* m, S* v, std::size_t n, std::uint64_t step, double lr,
                 double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);

/// Validation-driven stopping: best-so-far tracking with a patience counter.
class EarlyStopping {
 public:
  explicit EarlyStopping(int patience) : patience_(patience) {}

  /// Records one validation value; returns true when it is a new best.
  bool observe(double val) {
    ++epoch_;
    if (val < best_) {
      best_ = val;
      best_epoch_ = epoch_;
      since_best_ = 0;
      return true;
    }
    ++since_best_;
    return false;
  }
  bool should_stop() const { return since_best_ >= patience_; }
  double best() const { return best_; }
  int best_epoch() const { return best_epoch_; }
  int epochs_since_best() const { return since_best_; }

  void reset() {
    best_ = std::numeric_limits<double>::infinity();
    best_epoch_ = 0;
    epoch_ = 0;
    since_best_ = 0;
  }

  /// Adopts persisted progress (resume path).
  void restore(double best, int since_best) {
    best_ = best;
    since_best_ = since_best;
  }

 private:
  int patience_;
  double best_ = std::numeric_limits<double>::infinity();
  int best_epoch_ = 0;
  int epoch_ = 0;
  int since_best_ = 0;
};

struct EpochRow {
  int epoch = 0;  // global, counted across both phases
  std::string phase;
  double train_nll = 0;
  double val_nll = 0;
  double lr = 0;
  double seconds = 0;  // wall clock; the only nondeterministic column
};

/// CSV: epoch,phase,train_nll,val_nll,lr,seconds
void write_history_csv(const std::string& path, const std::vector<EpochRow>& history);

/// Per-epoch file sinks; empty paths disable a sink. On resume,
/// best_checkpoint is also read back as the best-so-far snapshot.
struct TrainOutputs {
  std::string best_checkpoint;
  std::string last_checkpoint;  // includes TrainState
  std::string history_csv;
};

struct TrainResult {
  FlowModel<float> model;  // best of the last phase, at checkpoint precision
  std::vector<EpochRow> history;
  bool aborted = false;  // non-finite NLL encountered; best weights retained
  TrainState state;
};

using EpochCallback = std::function<void(const EpochRow&)>;

/// Two-phase training loop. Mutates `model` in place (it ends at the last
/// epoch's weights); the returned model is the best-validation snapshot.
/// Passing `resume` continues from a persisted TrainState: `model` must
/// already hold the matching last-epoch weights.
TrainResult train(FlowModel<float>& model, const PairSet& train_set, const PairSet& val_set,
                  const TrainConfig& cfg, const TrainOutputs& outputs = {},
                  const TrainState* resume = nullptr, const EpochCallback& on_epoch = {});

/// Mean per-element NLL over full utterances (tape-free).
double dataset_nll(const FlowModel<float>& model, const PairSet& set, bool compand, double mu,
                   double sigma);

}  // namespace seflow
