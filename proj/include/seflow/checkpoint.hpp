#pragma once

// Checkpoint container. Binary layout, all integers little-endian:
//   magic   "SEFLOW01"
//   header  8 x u32  (n_blocks, group_size, early_every, early_channels,
//                     wn_layers, residual_channels, skip_channels, kernel_size)
//           2 x f64  (sigma_train, sigma_infer)
//           u8       (companded flag)
//           f64      (mu)
//   tensors u32 count, then per tensor: u16 name length, name bytes,
//           3 x u32 shape, float32 data (shape product entries)
//   state   u8 present flag; when set: u32 phase, u32 epoch_in_phase,
//           u32 epochs_total, f64 best_val_nll, u32 epochs_since_best,
//           u64 step, then per tensor (same order) float32 Adam m and v.
// Parameters are stored as float32, the training precision, so a save/load
// round trip is value-exact.

#include <cstdint>
#include <istream>
#include <limits>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "seflow/flow.hpp"

namespace seflow {

struct TrainState {
  std::uint32_t phase = 0;  // 0 initial, 1 finetune
  std::uint32_t epoch_in_phase = 0;
  std::uint32_t epochs_total = 0;
  double best_val_nll = std::numeric_limits<double>::infinity();
  std::uint32_t epochs_since_best = 0;
  std::uint64_t step = 0;
  std::vector<std::vector<float>> m, v;  // Adam moments, parameter order
};

void save_checkpoint(std::ostream& out, const FlowModel<float>& model,
                     const TrainState* state = nullptr);
void save_checkpoint(const std::string& path, const FlowModel<float>& model,
                     const TrainState* state = nullptr);

struct LoadedCheckpoint {
  FlowModel<float> model;
  std::optional<TrainState> state;
};

/// Rebuilds the model from the stored config and fills its parameters.
/// Rejects bad magic, truncation, trailing bytes, and any name/shape drift
/// between the file and the reconstructed parameter list.
LoadedCheckpoint load_checkpoint(std::istream& in);
LoadedCheckpoint load_checkpoint(const std::string& path);

}  // namespace seflow
