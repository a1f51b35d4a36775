#pragma once

// Objective metrics and diagnostics: segmental SNR, global SNR, amplitude
// histograms, and Hann-windowed magnitude spectrograms with CSV/PGM export.

#include <cstddef>
#include <string>
#include <vector>

#include "seflow/audio.hpp"

namespace seflow {

inline constexpr int kSegFrame = 256;  // 16 ms at 16 kHz
inline constexpr int kSegHop = 128;
inline constexpr double kSegFloorDb = -10.0;
inline constexpr double kSegCeilDb = 35.0;
inline constexpr double kSegSilence = 1e-8;  // frame energy below this is excluded

/// Mean over non-silent full frames of the per-frame SNR in dB, clamped to
/// [-10, 35]. Identical signals therefore score exactly 35.
double segmental_snr(const AudioBuffer& clean, const AudioBuffer& test);

struct GlobalSnr {
  double db = 0;           // +infinity when identical
  bool identical = false;  // zero residual guard
};

/// 10*log10(sum clean^2 / sum (clean-test)^2) over the whole utterance.
GlobalSnr global_snr(const AudioBuffer& clean, const AudioBuffer& test);

/// Equal-width bins over [-1, 1]; counts sum to the sample count.
std::vector<std::size_t> amplitude_histogram(const AudioBuffer& x, int n_bins = 100);

struct Spectrogram {
  int fft_size = 0;
  int hop = 0;
  int n_frames = 0;
  int n_bins = 0;              // fft_size/2 + 1
  std::vector<double> mag;     // row-major [frame][bin]
  std::vector<double> window;  // Hann coefficients used

  double at(int frame, int bin) const {
    return mag[static_cast<std::size_t>(frame) * n_bins + bin];
  }
};

/// Magnitude STFT with a periodic Hann window; frames step by hop and only
/// full frames are taken. fft_size must be a power of two.
Spectrogram spectrogram(const AudioBuffer& x, int fft_size = 512, int hop = 256);

/// One CSV row per frame, bins comma-separated.
void write_spectrogram_csv(const std::string& path, const Spectrogram& sg);

/// 8-bit grayscale PGM; frequency on the vertical axis (low at the bottom),
/// log magnitude mapped over the image's own dynamic range.
void write_spectrogram_pgm(const std::string& path, const Spectrogram& sg);

/// In-place radix-2 FFT over interleaved complex (re, im) pairs; n must be a
/// power of two. Exposed for the energy-conservation checks.
void fft_radix2(std::vector<double>& re, std::vector<double>& im);

struct UtteranceMetrics {
  std::string utterance;
  double seg_snr_db = 0;
  double global_snr_db = 0;
};

struct MetricReport {
  std::vector<UtteranceMetrics> rows;
  double mean_seg_snr_db = 0;
  double mean_global_snr_db = 0;
};

struct EvalPair {
  std::string name;
  AudioBuffer clean;
  AudioBuffer test;
};

MetricReport evaluate_pairs(const std::vector<EvalPair>& pairs);

/// CSV `utterance,seg_snr_db,global_snr_db` plus a trailing mean row.
void write_metric_report(const std::string& path, const MetricReport& report);

}  // namespace seflow
