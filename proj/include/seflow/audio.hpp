#pragma once

// Waveform handling: WAV I/O, mu-law companding, channel grouping, SNR mixing,
// chunk extraction, and the mixing manifest. Audio stays double precision;
// grouping converts to the model's scalar type.

#include <random>
#include <string>
#include <vector>

#include "seflow/tensor.hpp"

namespace seflow {

struct AudioBuffer {
  std::vector<double> samples;  // mono, in [-1, 1]
  int sample_rate = 16000;
  bool companded = false;

  double duration_s() const {
    return sample_rate > 0 ? static_cast<double>(samples.size()) / sample_rate : 0.0;
  }
};

/// Reads a mono RIFF/WAVE file, PCM 16-bit or IEEE float 32-bit. 16-bit
/// samples are divided by 32768; float samples are clamped to [-1, 1].
AudioBuffer read_wav(const std::string& path);

/// Writes a mono IEEE float 32-bit WAV. Reading it back reproduces the
/// float-quantized samples bit-exactly.
void write_wav(const std::string& path, const AudioBuffer& x);

/// g(x) = sgn(x) * ln(1 + mu|x|) / ln(1 + mu). Rejects double companding.
AudioBuffer mu_compress(const AudioBuffer& x, double mu = 255.0);

/// Inverse of mu_compress. Rejects audio that is not flagged as companded.
AudioBuffer mu_expand(const AudioBuffer& y, double mu = 255.0);

/// Stacks consecutive samples into channels: out[0, c, t] = x[t*G + c].
/// Trailing samples that do not fill a group are dropped.
template <class S>
Tensor<S> group(const AudioBuffer& x, int group_size);

/// Exact inverse of group on its image. Metadata must be supplied by the
/// caller since tensors carry none.
template <class S>
AudioBuffer ungroup(const Tensor<S>& t, int group_size, int sample_rate = 16000,
                    bool companded = false);

struct MixResult {
  AudioBuffer clean;  // rescaled copy when clipping protection triggered
  AudioBuffer noisy;
  double alpha = 0;    // gain applied to the noise
  double rescale = 1;  // joint factor applied to both signals
};

/// noisy = clean + alpha * noise with alpha = sqrt(P_clean / (P_noise * 10^(snr/10))),
/// powers averaged over the full utterance. Noise shorter than the clean
/// signal is looped; longer noise is cropped at a random offset. If the mix
/// peaks above 1, both signals are rescaled jointly to peak 0.999, which
/// preserves the realized SNR.
MixResult mix_at_snr(const AudioBuffer& clean, const AudioBuffer& noise, double snr_db,
                     std::mt19937_64& rng);

/// Contiguous chunk of duration_s at a uniformly random offset. Signals
/// shorter than the chunk are zero-padded at the tail (offset 0).
AudioBuffer random_chunk(const AudioBuffer& x, double duration_s, std::mt19937_64& rng);

struct MixRecord {
  std::string clean;  // resolved against the manifest directory
  std::string noise;
  double snr_db = 0;
  std::string split;  // train | val | test
};

/// CSV with header `clean,noise,snr_db,split`. Relative paths are resolved
/// against the manifest's directory.
std::vector<MixRecord> read_manifest(const std::string& path);

void write_manifest(const std::string& path, const std::vector<MixRecord>& records);

}  // namespace seflow
