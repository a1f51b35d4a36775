#pragma once

// The conditional normalizing flow: stacked (invertible 1x1 convolution,
// affine coupling) blocks with multi-scale early outputs, exact log-det
// accounting, and the NLL objective. Forward builds an autograd graph when
// recording is enabled; the value-level APIs run tape-free.

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "seflow/audio.hpp"
#include "seflow/ops.hpp"
#include "seflow/tensor.hpp"

namespace seflow {

struct FlowConfig {
  int n_blocks = 16;
  int group_size = 12;
  int early_every = 4;  // 0 disables early outputs
  int early_channels = 2;
  int wn_layers = 8;
  int residual_channels = 512;
  int skip_channels = 256;
  int kernel_size = 3;
  double sigma_train = 1.0;
  double sigma_infer = 0.9;

  static FlowConfig paper_scale();  // 16 blocks, group 12, 8 layers, 512/256
  static FlowConfig desk_scale();   // 8 blocks, group 8, 4 layers, 64/32
  static FlowConfig tiny();         // 2 blocks, group 4, no early outputs

  /// Throws DataError when the channel schedule is not well formed.
  void validate() const;

  /// Channels entering block k (after earlier early outputs were removed).
  int active_channels(int block) const;

  /// True when early_channels channels leave the flow after coupling k.
  bool emits_after(int block) const;

  /// Channel counts of the z parts, early outputs first, final block last.
  /// Sums to group_size.
  std::vector<int> z_part_channels() const;

  bool operator==(const FlowConfig&) const = default;
};

/// A convolution parameterized as direction v and per-row magnitude g with
/// effective weight g * v / ||v||, plus an optional bias.
template <class S>
struct NormConv {
  Tensor<S> v;     // (out, in, kernel); depthwise uses (channels, 1, kernel)
  Tensor<S> g;     // (out, 1, 1)
  Tensor<S> bias;  // (1, out, 1) or undefined

  Tensor<S> weight() const { return ops::weight_norm(v, g); }
};

template <class S>
struct CouplingLayer {
  NormConv<S> depthwise;  // dilated, one filter per residual channel
  NormConv<S> pointwise;  // residual -> 2*residual (gate halves)
  NormConv<S> cond;       // group_size -> 2*residual, added pre-gate
  NormConv<S> res_skip;   // residual -> residual+skip (last layer: skip only)
};

template <class S>
struct Coupling {
  NormConv<S> start;  // half -> residual
  std::vector<CouplingLayer<S>> layers;
  NormConv<S> end;  // skip -> 2*half; magnitude starts at zero (identity map)

  /// (log-scale s, shift t) for the second half, conditioned on the first
  /// half and the full grouped noisy signal.
  std::pair<Tensor<S>, Tensor<S>> forward(const Tensor<S>& x_a, const Tensor<S>& cond_sig,
                                          const FlowConfig& cfg) const;
};

template <class S>
struct FlowBlock {
  Tensor<S> inv_weight;  // (c, c, 1), unnormalized, kept invertible
  Coupling<S> coupling;
};

template <class S>
struct FlowOut {
  Tensor<S> z;       // (batch, group_size, time): early parts then final part
  Tensor<S> logdet;  // scalar graph node, summed over batch and time
};

template <class S>
class FlowModel {
 public:
  FlowModel() = default;
  explicit FlowModel(const FlowConfig& cfg);

  /// Couplings start as the identity; 1x1 weights become random orthogonal
  /// matrices (logdet exactly 0 at initialization).
  void random_init(std::uint64_t seed);

  /// Exact identity map: 1x1 weights are I, couplings are identity. The
  /// model's NLL then depends on the input alone (baseline reference).
  void identity_init(std::uint64_t seed = 0);

  /// Density direction. Records the tape when autograd is enabled.
  FlowOut<S> forward_graph(const Tensor<S>& x, const Tensor<S>& cond) const;

  /// Tape-free forward; returns z and the total log-determinant.
  std::pair<Tensor<S>, double> flow_forward(const Tensor<S>& x, const Tensor<S>& cond) const;

  /// Tape-free synthesis direction: exact algebraic inverse of forward.
  Tensor<S> flow_inverse(const Tensor<S>& z, const Tensor<S>& cond) const;

  /// Per-element negative log-likelihood as a graph node.
  Tensor<S> nll_graph(const FlowOut<S>& out, double sigma) const;

  /// Full enhancement pipeline: compand (when the model was trained on
  /// companded audio), group, sample z ~ N(0, sigma^2 I), invert the flow,
  /// ungroup, trim to the input length, expand. sigma = 0 is deterministic.
  AudioBuffer enhance(const AudioBuffer& noisy, double sigma, std::uint64_t seed) const;

  /// Stable name -> leaf parameter pairs, in serialization order.
  std::vector<std::pair<std::string, Tensor<S>>> named_parameters() const;

  const FlowConfig& config() const { return cfg_; }
  const std::vector<FlowBlock<S>>& blocks() const { return blocks_; }

  bool companded = false;  // training-time companding, recorded in checkpoints
  double mu = 255.0;

 private:
  FlowConfig cfg_;
  std::vector<FlowBlock<S>> blocks_;
};

/// Closed-form per-element NLL used by tests and validation loops.
double nll_value(double sum_squares, double total_logdet, std::size_t n_elements, double sigma);

}  // namespace seflow
