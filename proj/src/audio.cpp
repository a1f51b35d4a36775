#include "seflow/audio.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "seflow/errors.hpp"

namespace seflow {

namespace {

constexpr std::uint16_t kFormatPcm = 1;
constexpr std::uint16_t kFormatFloat = 3;

std::uint32_t rd_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | static_cast<std::uint32_t>(p[1]) << 8 |
         static_cast<std::uint32_t>(p[2]) << 16 | static_cast<std::uint32_t>(p[3]) << 24;
}
std::uint16_t rd_u16(const unsigned char* p) {
  return static_cast<std::uint16_t>(p[0] | p[1] << 8);
}

void wr_u32(std::string& s, std::uint32_t v) {
  s.push_back(static_cast<char>(v & 0xff));
  s.push_back(static_cast<char>((v >> 8) & 0xff));
  s.push_back(static_cast<char>((v >> 16) & 0xff));
  s.push_back(static_cast<char>((v >> 24) & 0xff));
}
void wr_u16(std::string& s, std::uint16_t v) {
  s.push_back(static_cast<char>(v & 0xff));
  s.push_back(static_cast<char>((v >> 8) & 0xff));
}

double mean_power(const std::vector<double>& x) {
  double acc = 0;
  for (double v : x) acc += v * v;
  return x.empty() ? 0.0 : acc / static_cast<double>(x.size());
}

}  // namespace

AudioBuffer read_wav(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError(detail::strfmt("cannot open WAV file %s", path.c_str()));
  std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  const std::size_t n = bytes.size();

  if (n < 12 || std::memcmp(p, "RIFF", 4) != 0 || std::memcmp(p + 8, "WAVE", 4) != 0)
    throw DataError(detail::strfmt("%s: not a RIFF/WAVE file", path.c_str()));

  std::uint16_t format = 0, channels = 0, bits = 0;
  std::uint32_t rate = 0;
  bool have_fmt = false;
  std::size_t data_off = 0, data_len = 0;

  std::size_t off = 12;
  while (off + 8 <= n) {
    const unsigned char* ch = p + off;
    const std::uint32_t sz = rd_u32(ch + 4);
    const std::size_t body = off + 8;
    if (body + sz > n)
      throw DataError(detail::strfmt("%s: truncated chunk at offset %zu", path.c_str(), off));
    if (std::memcmp(ch, "fmt ", 4) == 0) {
      if (sz < 16) throw DataError(detail::strfmt("%s: fmt chunk too short", path.c_str()));
      format = rd_u16(p + body);
      channels = rd_u16(p + body + 2);
      rate = rd_u32(p + body + 4);
      bits = rd_u16(p + body + 14);
      have_fmt = true;
    } else if (std::memcmp(ch, "data", 4) == 0) {
      data_off = body;
      data_len = sz;
      break;  // fmt must precede data in canonical files; trailing chunks ignored
    }
    off = body + sz + (sz & 1);
  }

  if (!have_fmt || data_off == 0)
    throw DataError(detail::strfmt("%s: missing fmt or data chunk", path.c_str()));
  if (channels != 1)
    throw DataError(detail::strfmt("%s: %u channels, only mono is supported", path.c_str(),
                                   channels));
  const bool pcm16 = format == kFormatPcm && bits == 16;
  const bool f32 = format == kFormatFloat && bits == 32;
  if (!pcm16 && !f32)
    throw DataError(detail::strfmt("%s: unsupported codec (format %u, %u bits); "
                                   "use PCM 16-bit or IEEE float 32-bit",
                                   path.c_str(), format, bits));

  AudioBuffer out;
  out.sample_rate = static_cast<int>(rate);
  if (pcm16) {
    const std::size_t count = data_len / 2;
    out.samples.resize(count);
    for (std::size_t i = 0; i < count; ++i) {
      const std::int16_t v = static_cast<std::int16_t>(rd_u16(p + data_off + 2 * i));
      out.samples[i] = static_cast<double>(v) / 32768.0;
    }
  } else {
    const std::size_t count = data_len / 4;
    out.samples.resize(count);
    for (std::size_t i = 0; i < count; ++i) {
      const std::uint32_t u = rd_u32(p + data_off + 4 * i);
      float v;
      std::memcpy(&v, &u, 4);
      if (!std::isfinite(v))
        throw DataError(detail::strfmt("%s: non-finite sample at index %zu", path.c_str(), i));
      out.samples[i] = std::clamp(static_cast<double>(v), -1.0, 1.0);
    }
  }
  return out;
}

void write_wav(const std::string& path, const AudioBuffer& x) {
  const std::uint32_t count = static_cast<std::uint32_t>(x.samples.size());
  const std::uint32_t data_sz = count * 4;
  std::string s;
  s.reserve(58 + data_sz);
  s.append("RIFF");
  wr_u32(s, 4 + 24 + 12 + 8 + data_sz);  // WAVE + fmt + fact + data header
  s.append("WAVE");
  s.append("fmt ");
  wr_u32(s, 16);
  wr_u16(s, kFormatFloat);
  wr_u16(s, 1);
  wr_u32(s, static_cast<std::uint32_t>(x.sample_rate));
  wr_u32(s, static_cast<std::uint32_t>(x.sample_rate) * 4);
  wr_u16(s, 4);
  wr_u16(s, 32);
  s.append("fact");
  wr_u32(s, 4);
  wr_u32(s, count);
  s.append("data");
  wr_u32(s, data_sz);
  for (double d : x.samples) {
    const float v = static_cast<float>(d);
    std::uint32_t u;
    std::memcpy(&u, &v, 4);
    wr_u32(s, u);
  }
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw DataError(detail::strfmt("cannot create WAV file %s", path.c_str()));
  f.write(s.data(), static_cast<std::streamsize>(s.size()));
  if (!f) throw DataError(detail::strfmt("short write to %s", path.c_str()));
}

AudioBuffer mu_compress(const AudioBuffer& x, double mu) {
  if (x.companded) throw DataError("mu_compress: signal is already companded");
  if (!(mu > 0)) throw DataError(detail::strfmt("mu_compress: mu must be positive, got %g", mu));
  AudioBuffer out = x;
  const double den = std::log1p(mu);
  for (double& v : out.samples) {
    const double s = v < 0 ? -1.0 : (v > 0 ? 1.0 : 0.0);
    v = s * std::log1p(mu * std::abs(v)) / den;
  }
  out.companded = true;
  return out;
}

AudioBuffer mu_expand(const AudioBuffer& y, double mu) {
  if (!y.companded) throw DataError("mu_expand: signal is not companded");
  if (!(mu > 0)) throw DataError(detail::strfmt("mu_expand: mu must be positive, got %g", mu));
  AudioBuffer out = y;
  const double den = std::log1p(mu);
  for (double& v : out.samples) {
    const double s = v < 0 ? -1.0 : (v > 0 ? 1.0 : 0.0);
    v = s * std::expm1(std::abs(v) * den) / mu;
  }
  out.companded = false;
  return out;
}

template <class S>
Tensor<S> group(const AudioBuffer& x, int group_size) {
  if (group_size < 2)
    throw DataError(detail::strfmt("group: group_size must be >= 2, got %d", group_size));
  const int frames = static_cast<int>(x.samples.size()) / group_size;
  if (frames == 0)
    throw DataError(detail::strfmt("group: signal of %zu samples is shorter than one group of %d",
                                   x.samples.size(), group_size));
  std::vector<S> data(static_cast<std::size_t>(group_size) * frames);
  for (int t = 0; t < frames; ++t)
    for (int c = 0; c < group_size; ++c)
      data[static_cast<std::size_t>(c) * frames + t] =
          static_cast<S>(x.samples[static_cast<std::size_t>(t) * group_size + c]);
  return Tensor<S>::from_vector(Shape{1, group_size, frames}, std::move(data));
}

template <class S>
AudioBuffer ungroup(const Tensor<S>& t, int group_size, int sample_rate, bool companded) {
  const Shape sh = t.shape();
  if (sh.batch != 1 || sh.channels != group_size)
    throw DataError(detail::strfmt("ungroup: tensor %s does not hold one signal of %d channels",
                                   sh.str().c_str(), group_size));
  AudioBuffer out;
  out.sample_rate = sample_rate;
  out.companded = companded;
  out.samples.resize(static_cast<std::size_t>(group_size) * sh.time);
  const S* p = t.data();
  for (int tt = 0; tt < sh.time; ++tt)
    for (int c = 0; c < group_size; ++c)
      out.samples[static_cast<std::size_t>(tt) * group_size + c] =
          static_cast<double>(p[static_cast<std::size_t>(c) * sh.time + tt]);
  return out;
}

template Tensor<float> group<float>(const AudioBuffer&, int);
template Tensor<double> group<double>(const AudioBuffer&, int);
template AudioBuffer ungroup<float>(const Tensor<float>&, int, int, bool);
template AudioBuffer ungroup<double>(const Tensor<double>&, int, int, bool);

MixResult mix_at_snr(const AudioBuffer& clean, const AudioBuffer& noise, double snr_db,
                     std::mt19937_64& rng) {
  if (clean.samples.empty()) throw DataError("mix_at_snr: empty clean signal");
  if (noise.samples.empty()) throw DataError("mix_at_snr: empty noise signal");
  if (!std::isfinite(snr_db))
    throw DataError(detail::strfmt("mix_at_snr: non-finite SNR %g", snr_db));
  if (clean.sample_rate != noise.sample_rate)
    throw DataError(detail::strfmt("mix_at_snr: sample rate mismatch (%d vs %d)",
                                   clean.sample_rate, noise.sample_rate));

  const std::size_t n = clean.samples.size();
  std::vector<double> seg(n);
  if (noise.samples.size() >= n) {
    const std::size_t slack = noise.samples.size() - n;
    std::size_t off = 0;
    if (slack > 0) off = std::uniform_int_distribution<std::size_t>(0, slack)(rng);
    std::copy_n(noise.samples.begin() + static_cast<std::ptrdiff_t>(off), n, seg.begin());
  } else {
    for (std::size_t i = 0; i < n; ++i) seg[i] = noise.samples[i % noise.samples.size()];
  }

  const double p_clean = mean_power(clean.samples);
  const double p_noise = mean_power(seg);
  if (p_clean <= 0) throw DataError("mix_at_snr: silent clean signal, SNR undefined");
  if (p_noise <= 0) throw DataError("mix_at_snr: silent noise signal, SNR undefined");

  MixResult r;
  r.alpha = std::sqrt(p_clean / (p_noise * std::pow(10.0, snr_db / 10.0)));
  r.clean = clean;
  r.noisy = clean;
  r.noisy.companded = false;
  double peak = 0;
  for (std::size_t i = 0; i < n; ++i) {
    r.noisy.samples[i] = clean.samples[i] + r.alpha * seg[i];
    peak = std::max(peak, std::abs(r.noisy.samples[i]));
  }
  if (peak > 1.0) {
    r.rescale = 0.999 / peak;
    for (std::size_t i = 0; i < n; ++i) {
      r.noisy.samples[i] *= r.rescale;
      r.clean.samples[i] *= r.rescale;
    }
  }
  return r;
}

AudioBuffer random_chunk(const AudioBuffer& x, double duration_s, std::mt19937_64& rng) {
  if (!(duration_s > 0))
    throw DataError(detail::strfmt("random_chunk: non-positive duration %g", duration_s));
  const std::size_t want =
      static_cast<std::size_t>(std::llround(duration_s * static_cast<double>(x.sample_rate)));
  AudioBuffer out;
  out.sample_rate = x.sample_rate;
  out.companded = x.companded;
  out.samples.assign(want, 0.0);
  if (x.samples.size() <= want) {
    std::copy(x.samples.begin(), x.samples.end(), out.samples.begin());
    return out;
  }
  const std::size_t off =
      std::uniform_int_distribution<std::size_t>(0, x.samples.size() - want)(rng);
  std::copy_n(x.samples.begin() + static_cast<std::ptrdiff_t>(off), want, out.samples.begin());
  return out;
}

std::vector<MixRecord> read_manifest(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw DataError(detail::strfmt("cannot open manifest %s", path.c_str()));
  const std::filesystem::path base = std::filesystem::path(path).parent_path();

  auto resolve = [&base](const std::string& rel) {
    std::filesystem::path p(rel);
    return (p.is_absolute() ? p : base / p).lexically_normal().string();
  };
  auto split_line = [](const std::string& line) {
    std::vector<std::string> fields;
    std::string cur;
    for (char c : line) {
      if (c == ',') {
        fields.push_back(cur);
        cur.clear();
      } else if (c != '\r') {
        cur.push_back(c);
      }
    }
    fields.push_back(cur);
    return fields;
  };

  std::string line;
  if (!std::getline(f, line))
    throw DataError(detail::strfmt("manifest %s is empty", path.c_str()));
  if (split_line(line) != std::vector<std::string>{"clean", "noise", "snr_db", "split"})
    throw DataError(detail::strfmt("manifest %s: header must be clean,noise,snr_db,split",
                                   path.c_str()));

  std::vector<MixRecord> out;
  std::size_t lineno = 1;
  while (std::getline(f, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    const std::vector<std::string> fields = split_line(line);
    if (fields.size() != 4)
      throw DataError(detail::strfmt("manifest %s line %zu: expected 4 fields, got %zu",
                                     path.c_str(), lineno, fields.size()));
    MixRecord rec;
    rec.clean = resolve(fields[0]);
    rec.noise = resolve(fields[1]);
    try {
      std::size_t used = 0;
      rec.snr_db = std::stod(fields[2], &used);
      if (used != fields[2].size()) throw std::invalid_argument("trailing characters");
    } catch (const std::exception&) {
      throw DataError(detail::strfmt("manifest %s line %zu: bad snr_db value '%s'", path.c_str(),
                                     lineno, fields[2].c_str()));
    }
    if (!std::isfinite(rec.snr_db))
      throw DataError(detail::strfmt("manifest %s line %zu: non-finite snr_db", path.c_str(),
                                     lineno));
    rec.split = fields[3];
    if (rec.split != "train" && rec.split != "val" && rec.split != "test")
      throw DataError(detail::strfmt("manifest %s line %zu: split must be train|val|test, got '%s'",
                                     path.c_str(), lineno, rec.split.c_str()));
    if (rec.clean == rec.noise)
      throw DataError(detail::strfmt("manifest %s line %zu: clean and noise paths are identical",
                                     path.c_str(), lineno));
    out.push_back(std::move(rec));
  }
  return out;
}

void write_manifest(const std::string& path, const std::vector<MixRecord>& records) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw DataError(detail::strfmt("cannot create manifest %s", path.c_str()));
  f << "clean,noise,snr_db,split\n";
  for (const MixRecord& r : records) {
    std::ostringstream snr;
    snr << r.snr_db;
    f << r.clean << ',' << r.noise << ',' << snr.str() << ',' << r.split << '\n';
  }
  if (!f) throw DataError(detail::strfmt("short write to manifest %s", path.c_str()));
}

}  // namespace seflow
