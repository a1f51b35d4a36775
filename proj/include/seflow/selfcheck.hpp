#pragma once

// Built-in invariant suites behind `seflow check`: flow bijectivity, exact
// Jacobian accounting, gradient correctness against finite differences,
// mu-law properties, and SNR-exact mixing. Fast level trims repetition
// counts; full level runs the complete settings.

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "seflow/flow.hpp"

namespace seflow::selfcheck {

enum class Level { fast, full };

struct CheckResult {
  std::string suite;
  std::string name;
  bool passed = false;
  double measured = 0;   // the observed statistic
  double tolerance = 0;  // bound it was compared against
  std::string note;      // comparison direction or failure detail
};

/// Round-trip |inverse(forward(x)) - x| on random desk-scale models, in both
/// precisions.
std::vector<CheckResult> bijectivity_suite(Level level, std::uint64_t seed);

/// Round-trip check on one specific model (e.g. a loaded checkpoint).
std::vector<CheckResult> model_bijectivity(const FlowModel<float>& model, std::uint64_t seed);

/// Total log-determinant vs. log|det| of the finite-difference Jacobian on
/// the tiny configuration.
std::vector<CheckResult> jacobian_suite(Level level, std::uint64_t seed);

/// End-to-end NLL gradient vs. central finite differences, double precision.
std::vector<CheckResult> gradient_suite(Level level, std::uint64_t seed);

/// Companding round-trip, the closed-form point value, and the histogram
/// flattening property on peaked input.
std::vector<CheckResult> mulaw_suite(Level level, std::uint64_t seed);

/// Measured global SNR of mixed signals vs. every requested level.
std::vector<CheckResult> mixing_suite(Level level, std::uint64_t seed);

/// All suites in order; when model is non-null its round-trip is checked too.
std::vector<CheckResult> run_all(Level level, std::uint64_t seed,
                                 const FlowModel<float>* model = nullptr);

bool all_passed(const std::vector<CheckResult>& results);

/// One line per result plus a summary line; returns all_passed().
bool print_report(std::ostream& os, const std::vector<CheckResult>& results);

/// Freshly initialized couplings are identity maps (zero end magnitudes), so
/// round-trip and Jacobian checks on them would exercise only the channel
/// mixing. This gives the affine responses random non-zero weight.
template <class S>
void randomize_affine_response(FlowModel<S>& model, std::uint64_t seed, double scale = 0.25);

}  // namespace seflow::selfcheck
