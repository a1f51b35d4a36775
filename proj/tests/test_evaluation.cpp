#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "seflow/audio.hpp"
#include "seflow/evaluation.hpp"

using seflow::AudioBuffer;
using seflow::DataError;
using seflow::Spectrogram;

namespace fs = std::filesystem;

namespace {

AudioBuffer tone(double hz, double seconds, double amp = 0.5, int rate = 16000) {
  AudioBuffer b;
  b.sample_rate = rate;
  b.samples.resize(static_cast<std::size_t>(seconds * rate));
  for (std::size_t i = 0; i < b.samples.size(); ++i)
    b.samples[i] = amp * std::sin(2.0 * M_PI * hz * double(i) / rate);
  return b;
}

AudioBuffer noise(std::uint64_t seed, std::size_t n, double amp = 0.1) {
  AudioBuffer b;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> d(0.0, amp);
  b.samples.resize(n);
  for (auto& s : b.samples) s = d(rng);
  return b;
}

fs::path scratch_dir(const char* leaf) {
  fs::path p = fs::temp_directory_path() / "seflow_eval_test" / leaf;
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

}  // namespace

TEST_CASE("segmental snr ceiling, floor, and hand-computed value") {
  AudioBuffer clean = tone(440.0, 0.5);
  CHECK(seflow::segmental_snr(clean, clean) == 35.0);

  // Anti-signal: residual power is 4x the clean power in every frame, so
  // each frame scores 10*log10(1/4) and the floor never binds.
  AudioBuffer anti = clean;
  for (auto& s : anti.samples) s = -s;
  const double want = 10.0 * std::log10(0.25);
  CHECK(seflow::segmental_snr(clean, anti) == doctest::Approx(want).epsilon(1e-9));

  // A wildly wrong signal pins every frame at the -10 dB floor.
  AudioBuffer off = clean;
  for (auto& s : off.samples) s = s * 200.0;
  CHECK(seflow::segmental_snr(clean, off) == -10.0);

  // Uniform test = clean * (1 + e) gives per-frame SNR 20*log10(1/|e|)
  // independent of frame content, so the mean equals the per-frame value.
  AudioBuffer scaled = clean;
  for (auto& s : scaled.samples) s *= 1.05;
  const double per_frame = 20.0 * std::log10(1.0 / 0.05);
  CHECK(seflow::segmental_snr(clean, scaled) == doctest::Approx(per_frame).epsilon(1e-9));
}

TEST_CASE("segmental snr skips silent frames and validates inputs") {
  // First half silent, second half a tone with a fixed small error. Silent
  // frames carry zero energy and are excluded, so the mean comes out at the
  // tone's per-frame value rather than being dragged by the silent region.
  AudioBuffer clean = tone(440.0, 0.5);
  const std::size_t half = clean.samples.size() / 2;
  for (std::size_t i = 0; i < half; ++i) clean.samples[i] = 0.0;
  AudioBuffer test = clean;
  for (auto& s : test.samples) s *= 1.05;
  CHECK(seflow::segmental_snr(clean, test) ==
        doctest::Approx(20.0 * std::log10(1.0 / 0.05)).epsilon(1e-9));

  AudioBuffer other = tone(440.0, 0.25);
  CHECK_THROWS_AS(seflow::segmental_snr(clean, other), DataError);
  AudioBuffer wrong_rate = clean;
  wrong_rate.sample_rate = 8000;
  CHECK_THROWS_AS(seflow::segmental_snr(clean, wrong_rate), DataError);
  AudioBuffer empty;
  CHECK_THROWS_AS(seflow::segmental_snr(empty, empty), DataError);

  // All-silent pair has no scoreable frame.
  AudioBuffer zc;
  zc.samples.assign(4096, 0.0);
  CHECK_THROWS_AS(seflow::segmental_snr(zc, zc), DataError);
}

TEST_CASE("global snr") {
  AudioBuffer clean = tone(300.0, 0.25);
  seflow::GlobalSnr same = seflow::global_snr(clean, clean);
  CHECK(same.identical);

  AudioBuffer test = clean;
  for (auto& s : test.samples) s *= 0.9;  // residual is clean/10
  seflow::GlobalSnr got = seflow::global_snr(clean, test);
  CHECK_FALSE(got.identical);
  CHECK(got.db == doctest::Approx(20.0).epsilon(1e-9));
}

TEST_CASE("amplitude histogram covers [-1, 1] and preserves counts") {
  AudioBuffer x;
  x.samples = {-1.0, -0.999, 0.0, 0.5, 1.0, 1.0};
  std::vector<std::size_t> h = seflow::amplitude_histogram(x, 4);
  REQUIRE(h.size() == 4);
  CHECK(std::accumulate(h.begin(), h.end(), std::size_t{0}) == x.samples.size());
  CHECK(h[0] == 2);  // -1 and -0.999
  CHECK(h[1] == 0);
  CHECK(h[2] == 1);  // 0.0; the half-open bins put 0.5 one bin up
  CHECK(h[3] == 3);  // 0.5 plus both +1 samples (clamped into the top bin)

  CHECK(seflow::amplitude_histogram(AudioBuffer{}, 4) == std::vector<std::size_t>(4, 0));
  CHECK_THROWS_AS(seflow::amplitude_histogram(x, 0), DataError);
}

TEST_CASE("radix-2 fft: impulse, pure tone, Parseval, and size guard") {
  // Impulse transforms to an all-ones spectrum.
  std::vector<double> re(16, 0.0), im(16, 0.0);
  re[0] = 1.0;
  seflow::fft_radix2(re, im);
  for (int k = 0; k < 16; ++k) {
    CHECK(re[k] == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(im[k] == doctest::Approx(0.0).epsilon(1e-12));
  }

  // cos(2 pi 3 t / N) concentrates in bins 3 and N-3 with height N/2.
  const int n = 64;
  re.assign(n, 0.0);
  im.assign(n, 0.0);
  for (int t = 0; t < n; ++t) re[t] = std::cos(2.0 * M_PI * 3.0 * t / n);
  seflow::fft_radix2(re, im);
  for (int k = 0; k < n; ++k) {
    const double mag = std::hypot(re[k], im[k]);
    if (k == 3 || k == n - 3)
      CHECK(mag == doctest::Approx(n / 2.0).epsilon(1e-10));
    else
      CHECK(mag < 1e-9);
  }

  // Parseval: sum |x|^2 == sum |X|^2 / N on random data.
  std::mt19937_64 rng(4242);
  std::uniform_real_distribution<double> d(-1.0, 1.0);
  std::vector<double> xr(128), xi(128);
  for (auto& v : xr) v = d(rng);
  for (auto& v : xi) v = d(rng);
  double time_energy = 0;
  for (int t = 0; t < 128; ++t) time_energy += xr[t] * xr[t] + xi[t] * xi[t];
  std::vector<double> fr = xr, fi = xi;
  seflow::fft_radix2(fr, fi);
  double freq_energy = 0;
  for (int k = 0; k < 128; ++k) freq_energy += fr[k] * fr[k] + fi[k] * fi[k];
  CHECK(time_energy == doctest::Approx(freq_energy / 128.0).epsilon(1e-12));

  std::vector<double> bad_re(12, 0.0), bad_im(12, 0.0);
  CHECK_THROWS_AS(seflow::fft_radix2(bad_re, bad_im), seflow::Error);
  std::vector<double> ok_re(16, 0.0), mism_im(8, 0.0);
  CHECK_THROWS_AS(seflow::fft_radix2(ok_re, mism_im), seflow::Error);
}

TEST_CASE("spectrogram puts a 1 kHz tone in bin 32 at fft size 512") {
  AudioBuffer x = tone(1000.0, 0.5);
  Spectrogram sg = seflow::spectrogram(x, 512, 256);
  CHECK(sg.fft_size == 512);
  CHECK(sg.n_bins == 257);
  CHECK(sg.n_frames == int((x.samples.size() - 512) / 256) + 1);
  REQUIRE(int(sg.window.size()) == 512);
  CHECK(sg.window[0] == doctest::Approx(0.0));

  // 1000 Hz * 512 / 16000 = bin 32 exactly.
  for (int f = 0; f < sg.n_frames; ++f) {
    int peak = 0;
    for (int b = 1; b < sg.n_bins; ++b)
      if (sg.at(f, b) > sg.at(f, peak)) peak = b;
    CHECK(peak == 32);
  }

  CHECK_THROWS_AS(seflow::spectrogram(x, 500, 256), DataError);
  AudioBuffer tiny;
  tiny.samples.assign(100, 0.1);
  CHECK_THROWS_AS(seflow::spectrogram(tiny, 512, 256), DataError);
}

TEST_CASE("spectrogram exports csv and pgm") {
  fs::path dir = scratch_dir("spectro");
  AudioBuffer x = tone(2000.0, 0.25);
  for (std::size_t i = 0; i < x.samples.size(); ++i) x.samples[i] += 0.001 * double(i % 7);
  Spectrogram sg = seflow::spectrogram(x, 256, 128);

  const std::string csv = (dir / "sg.csv").string();
  seflow::write_spectrogram_csv(csv, sg);
  std::ifstream f(csv);
  std::string line;
  int rows = 0, commas = -1;
  while (std::getline(f, line)) {
    const int c = int(std::count(line.begin(), line.end(), ','));
    if (commas < 0) commas = c;
    CHECK(c == commas);
    ++rows;
  }
  CHECK(rows == sg.n_frames);
  CHECK(commas == sg.n_bins - 1);

  const std::string pgm = (dir / "sg.pgm").string();
  seflow::write_spectrogram_pgm(pgm, sg);
  std::ifstream g(pgm, std::ios::binary);
  std::string magic, dims, maxval;
  REQUIRE(bool(std::getline(g, magic)));
  CHECK(magic == "P5");
  REQUIRE(bool(std::getline(g, dims)));
  std::istringstream ds(dims);
  int w = 0, h = 0;
  ds >> w >> h;
  CHECK(w == sg.n_frames);
  CHECK(h == sg.n_bins);
  REQUIRE(bool(std::getline(g, maxval)));
  CHECK(maxval == "255");
  std::string pixels((std::istreambuf_iterator<char>(g)), std::istreambuf_iterator<char>());
  CHECK(pixels.size() == std::size_t(w) * std::size_t(h));
}

TEST_CASE("metric report aggregates pairs and writes csv") {
  fs::path dir = scratch_dir("report");
  AudioBuffer c1 = tone(440.0, 0.25), c2 = tone(220.0, 0.25, 0.3);
  AudioBuffer t1 = c1;
  AudioBuffer n1 = noise(7, c1.samples.size(), 0.01);
  for (std::size_t i = 0; i < t1.samples.size(); ++i) t1.samples[i] += n1.samples[i];

  std::vector<seflow::EvalPair> pairs;
  pairs.push_back({"a", c1, t1});
  pairs.push_back({"b", c2, c2});
  seflow::MetricReport rep = seflow::evaluate_pairs(pairs);
  REQUIRE(rep.rows.size() == 2);
  CHECK(rep.rows[0].utterance == "a");
  CHECK(rep.rows[1].seg_snr_db == 35.0);
  CHECK(rep.rows[0].seg_snr_db == seflow::segmental_snr(c1, t1));
  CHECK(rep.mean_seg_snr_db ==
        doctest::Approx((rep.rows[0].seg_snr_db + rep.rows[1].seg_snr_db) / 2.0));

  const std::string path = (dir / "metrics.csv").string();
  seflow::write_metric_report(path, rep);
  std::ifstream f(path);
  std::string line;
  REQUIRE(bool(std::getline(f, line)));
  CHECK(line == "utterance,seg_snr_db,global_snr_db");
  int rows = 0;
  bool mean_row = false;
  while (std::getline(f, line)) {
    ++rows;
    if (line.rfind("mean,", 0) == 0) mean_row = true;
  }
  CHECK(rows == 3);
  CHECK(mean_row);
}
