#include "seflow/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

#include "seflow/errors.hpp"

namespace seflow {

namespace {

constexpr double kPi = 3.14159265358979323846;

void check_pair(const AudioBuffer& clean, const AudioBuffer& test, const char* who) {
  if (clean.samples.size() != test.samples.size())
    throw DataError(detail::strfmt("%s: length mismatch (%zu vs %zu samples)", who,
                                   clean.samples.size(), test.samples.size()));
  if (clean.samples.empty()) throw DataError(detail::strfmt("%s: empty signals", who));
  if (clean.sample_rate != test.sample_rate)
    throw DataError(detail::strfmt("%s: sample rate mismatch (%d vs %d Hz)", who,
                                   clean.sample_rate, test.sample_rate));
}

}  // namespace

double segmental_snr(const AudioBuffer& clean, const AudioBuffer& test) {
  check_pair(clean, test, "segmental_snr");
  const std::size_t n = clean.samples.size();
  if (n < static_cast<std::size_t>(kSegFrame))
    throw DataError(detail::strfmt("segmental_snr: %zu samples is shorter than one %d-sample "
                                   "frame",
                                   n, kSegFrame));
  double acc = 0;
  int counted = 0;
  for (std::size_t off = 0; off + kSegFrame <= n; off += kSegHop) {
    double e_clean = 0, e_diff = 0;
    for (int i = 0; i < kSegFrame; ++i) {
      const double c = clean.samples[off + i];
      const double d = c - test.samples[off + i];
      e_clean += c * c;
      e_diff += d * d;
    }
    if (e_clean < kSegSilence) continue;
    double db;
    if (e_diff <= 0)
      db = kSegCeilDb;
    else
      db = std::clamp(10.0 * std::log10(e_clean / e_diff), kSegFloorDb, kSegCeilDb);
    acc += db;
    ++counted;
  }
  if (counted == 0) throw DataError("segmental_snr: every frame is silent");
  return acc / counted;
}

GlobalSnr global_snr(const AudioBuffer& clean, const AudioBuffer& test) {
  check_pair(clean, test, "global_snr");
  double e_clean = 0, e_diff = 0;
  for (std::size_t i = 0; i < clean.samples.size(); ++i) {
    const double c = clean.samples[i];
    const double d = c - test.samples[i];
    e_clean += c * c;
    e_diff += d * d;
  }
  if (e_clean <= 0) throw DataError("global_snr: silent clean signal");
  GlobalSnr r;
  if (e_diff <= 0) {
    r.identical = true;
    r.db = std::numeric_limits<double>::infinity();
  } else {
    r.db = 10.0 * std::log10(e_clean / e_diff);
  }
  return r;
}

std::vector<std::size_t> amplitude_histogram(const AudioBuffer& x, int n_bins) {
  if (n_bins < 1) throw DataError(detail::strfmt("amplitude_histogram: n_bins %d < 1", n_bins));
  std::vector<std::size_t> counts(n_bins, 0);
  for (double v : x.samples) {
    int bin = static_cast<int>((v + 1.0) / 2.0 * n_bins);
    bin = std::clamp(bin, 0, n_bins - 1);  // v = 1 lands in the top bin
    ++counts[bin];
  }
  return counts;
}

void fft_radix2(std::vector<double>& re, std::vector<double>& im) {
  const std::size_t n = re.size();
  if (n == 0 || (n & (n - 1)) != 0 || im.size() != n)
    throw Error(detail::strfmt("fft: length %zu is not a power of two", n));
  // Bit-reversal permutation.
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) {
      std::swap(re[i], re[j]);
      std::swap(im[i], im[j]);
    }
  }
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const double ang = -2.0 * kPi / static_cast<double>(len);
    const double wr = std::cos(ang), wi = std::sin(ang);
    for (std::size_t i = 0; i < n; i += len) {
      double cr = 1.0, ci = 0.0;
      for (std::size_t k = 0; k < len / 2; ++k) {
        const std::size_t a = i + k, b = i + k + len / 2;
        const double tr = re[b] * cr - im[b] * ci;
        const double ti = re[b] * ci + im[b] * cr;
        re[b] = re[a] - tr;
        im[b] = im[a] - ti;
        re[a] += tr;
        im[a] += ti;
        const double ncr = cr * wr - ci * wi;
        ci = cr * wi + ci * wr;
        cr = ncr;
      }
    }
  }
}

Spectrogram spectrogram(const AudioBuffer& x, int fft_size, int hop) {
  if (fft_size < 2 || (fft_size & (fft_size - 1)) != 0)
    throw DataError(detail::strfmt("spectrogram: fft_size %d is not a power of two", fft_size));
  if (hop < 1) throw DataError(detail::strfmt("spectrogram: hop %d < 1", hop));
  if (x.samples.size() < static_cast<std::size_t>(fft_size))
    throw DataError(detail::strfmt("spectrogram: %zu samples is shorter than fft_size %d",
                                   x.samples.size(), fft_size));

  Spectrogram sg;
  sg.fft_size = fft_size;
  sg.hop = hop;
  sg.n_bins = fft_size / 2 + 1;
  sg.window.resize(fft_size);
  for (int i = 0; i < fft_size; ++i)
    sg.window[i] = 0.5 * (1.0 - std::cos(2.0 * kPi * i / fft_size));

  std::vector<double> re(fft_size), im(fft_size);
  for (std::size_t off = 0; off + fft_size <= x.samples.size(); off += hop) {
    for (int i = 0; i < fft_size; ++i) {
      re[i] = x.samples[off + i] * sg.window[i];
      im[i] = 0.0;
    }
    fft_radix2(re, im);
    for (int k = 0; k < sg.n_bins; ++k) sg.mag.push_back(std::hypot(re[k], im[k]));
    ++sg.n_frames;
  }
  return sg;
}

void write_spectrogram_csv(const std::string& path, const Spectrogram& sg) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw DataError(detail::strfmt("cannot create %s", path.c_str()));
  for (int t = 0; t < sg.n_frames; ++t) {
    for (int k = 0; k < sg.n_bins; ++k) {
      if (k) f << ',';
      f << detail::strfmt("%.9g", sg.at(t, k));
    }
    f << '\n';
  }
  if (!f) throw DataError(detail::strfmt("short write to %s", path.c_str()));
}

void write_spectrogram_pgm(const std::string& path, const Spectrogram& sg) {
  if (sg.n_frames < 1) throw DataError("spectrogram image: no frames");
  std::vector<double> db(sg.mag.size());
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (std::size_t j = 0; j < sg.mag.size(); ++j) {
    db[j] = 20.0 * std::log10(sg.mag[j] + 1e-10);
    lo = std::min(lo, db[j]);
    hi = std::max(hi, db[j]);
  }
  const double span = hi > lo ? hi - lo : 1.0;
  std::string body;
  body.reserve(sg.mag.size());
  // Row 0 is the top of the image: highest frequency first.
  for (int k = sg.n_bins - 1; k >= 0; --k)
    for (int t = 0; t < sg.n_frames; ++t) {
      const double v = (db[static_cast<std::size_t>(t) * sg.n_bins + k] - lo) / span;
      body.push_back(static_cast<char>(std::clamp(static_cast<int>(v * 255.0 + 0.5), 0, 255)));
    }
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw DataError(detail::strfmt("cannot create %s", path.c_str()));
  f << "P5\n" << sg.n_frames << ' ' << sg.n_bins << "\n255\n";
  f.write(body.data(), static_cast<std::streamsize>(body.size()));
  if (!f) throw DataError(detail::strfmt("short write to %s", path.c_str()));
}

MetricReport evaluate_pairs(const std::vector<EvalPair>& pairs) {
  if (pairs.empty()) throw DataError("evaluate: no utterance pairs");
  MetricReport rep;
  double seg_acc = 0, glob_acc = 0;
  for (const EvalPair& p : pairs) {
    UtteranceMetrics m;
    m.utterance = p.name;
    m.seg_snr_db = segmental_snr(p.clean, p.test);
    m.global_snr_db = global_snr(p.clean, p.test).db;
    seg_acc += m.seg_snr_db;
    glob_acc += m.global_snr_db;
    rep.rows.push_back(std::move(m));
  }
  rep.mean_seg_snr_db = seg_acc / static_cast<double>(pairs.size());
  rep.mean_global_snr_db = glob_acc / static_cast<double>(pairs.size());
  return rep;
}

void write_metric_report(const std::string& path, const MetricReport& report) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw DataError(detail::strfmt("cannot create %s", path.c_str()));
  f << "utterance,seg_snr_db,global_snr_db\n";
  for (const UtteranceMetrics& m : report.rows)
    f << detail::strfmt("%s,%.6f,%.6f\n", m.utterance.c_str(), m.seg_snr_db, m.global_snr_db);
  f << detail::strfmt("mean,%.6f,%.6f\n", report.mean_seg_snr_db, report.mean_global_snr_db);
  if (!f) throw DataError(detail::strfmt("short write to %s", path.c_str()));
}

}  // namespace seflow
