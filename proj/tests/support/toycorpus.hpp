#pragma once

// Synthetic corpus for end-to-end runs: harmonic "voice" utterances with
// amplitude envelopes, four noise kinds (white, lowpass, highpass, smoothed),
// and SNR mixing into aligned pair sets or an on-disk WAV corpus.

#include <cstdint>
#include <string>
#include <vector>

#include "seflow/audio.hpp"
#include "seflow/training.hpp"

namespace toy {

seflow::AudioBuffer voice_utterance(std::uint64_t seed, double seconds);

/// kind 0: white, 1: one-pole lowpass, 2: first-difference highpass,
/// 3: moving-average smoothed. All normalized to the same RMS.
seflow::AudioBuffer noise_sample(std::uint64_t seed, double seconds, int kind);

struct ToySets {
  seflow::PairSet train;
  seflow::PairSet val;
  seflow::PairSet test;
};

/// n_utts pairs mixed at {0, 5, 10, 15} dB, split 80/10/10 in index order.
/// Pairs stay in the raw (non-companded) domain.
ToySets build_toy_sets(int n_utts, std::uint64_t seed, double seconds = 2.0);

/// Writes clean/*.wav and noise/*.wav plus manifest.csv referencing them,
/// for driving the command-line pipeline.
void write_toy_corpus(const std::string& dir, int n_utts, std::uint64_t seed,
                      double seconds = 2.0);

}  // namespace toy
