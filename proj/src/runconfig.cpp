#include "seflow/runconfig.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "seflow/errors.hpp"

namespace seflow {

namespace {

std::string trim(const std::string& s) {
  const char* ws = " \t\r";
  const std::size_t a = s.find_first_not_of(ws);
  if (a == std::string::npos) return "";
  const std::size_t b = s.find_last_not_of(ws);
  return s.substr(a, b - a + 1);
}

[[noreturn]] void bad_line(const std::string& origin, int line, const char* what) {
  throw UsageError(detail::strfmt("%s:%d: %s", origin.c_str(), line, what));
}

double to_double(const std::string& v, const std::string& origin, int line) {
  const char* s = v.c_str();
  char* end = nullptr;
  const double x = std::strtod(s, &end);
  if (end == s || *end != '\0') bad_line(origin, line, "expected a number");
  return x;
}

int to_int(const std::string& v, const std::string& origin, int line) {
  const double x = to_double(v, origin, line);
  const int i = static_cast<int>(x);
  if (static_cast<double>(i) != x) bad_line(origin, line, "expected an integer");
  return i;
}

std::uint64_t to_u64(const std::string& v, const std::string& origin, int line) {
  const char* s = v.c_str();
  char* end = nullptr;
  const unsigned long long x = std::strtoull(s, &end, 10);
  if (end == s || *end != '\0') bad_line(origin, line, "expected an unsigned integer");
  return static_cast<std::uint64_t>(x);
}

bool to_bool(const std::string& v, const std::string& origin, int line) {
  if (v == "true" || v == "yes" || v == "on" || v == "1") return true;
  if (v == "false" || v == "no" || v == "off" || v == "0") return false;
  bad_line(origin, line, "expected a boolean (true/false)");
}

std::string resolve(const std::string& p, const std::string& base_dir) {
  if (p.empty() || base_dir.empty()) return p;
  std::filesystem::path fp(p);
  if (fp.is_absolute()) return p;
  return (std::filesystem::path(base_dir) / fp).lexically_normal().string();
}

}  // namespace

RunConfig parse_run_config_text(const std::string& text, const std::string& base_dir,
                                const std::string& origin) {
  RunConfig cfg;
  std::istringstream in(text);
  std::string raw, section;
  int line = 0;
  while (std::getline(in, raw)) {
    ++line;
    std::string s = trim(raw);
    if (s.empty() || s[0] == '#' || s[0] == ';') continue;
    if (s.front() == '[') {
      if (s.back() != ']') bad_line(origin, line, "unterminated section header");
      section = trim(s.substr(1, s.size() - 2));
      if (section != "flow" && section != "train" && section != "data")
        bad_line(origin, line, "unknown section (expected flow, train, or data)");
      continue;
    }
    const std::size_t eq = s.find('=');
    if (eq == std::string::npos) bad_line(origin, line, "expected key = value");
    if (section.empty()) bad_line(origin, line, "key outside of any section");
    const std::string key = trim(s.substr(0, eq));
    const std::string val = trim(s.substr(eq + 1));
    if (key.empty()) bad_line(origin, line, "empty key");

    if (section == "flow") {
      if (key == "n_blocks")
        cfg.flow.n_blocks = to_int(val, origin, line);
      else if (key == "group_size")
        cfg.flow.group_size = to_int(val, origin, line);
      else if (key == "early_every")
        cfg.flow.early_every = to_int(val, origin, line);
      else if (key == "early_channels")
        cfg.flow.early_channels = to_int(val, origin, line);
      else if (key == "wn_layers")
        cfg.flow.wn_layers = to_int(val, origin, line);
      else if (key == "residual_channels")
        cfg.flow.residual_channels = to_int(val, origin, line);
      else if (key == "skip_channels")
        cfg.flow.skip_channels = to_int(val, origin, line);
      else if (key == "kernel_size")
        cfg.flow.kernel_size = to_int(val, origin, line);
      else if (key == "sigma_train")
        cfg.flow.sigma_train = to_double(val, origin, line);
      else if (key == "sigma_infer")
        cfg.flow.sigma_infer = to_double(val, origin, line);
      else
        bad_line(origin, line, "unknown key in [flow]");
    } else if (section == "train") {
      if (key == "batch_size")
        cfg.train.batch_size = to_int(val, origin, line);
      else if (key == "lr_initial")
        cfg.train.lr_initial = to_double(val, origin, line);
      else if (key == "lr_finetune")
        cfg.train.lr_finetune = to_double(val, origin, line);
      else if (key == "patience")
        cfg.train.patience = to_int(val, origin, line);
      else if (key == "max_epochs")
        cfg.train.max_epochs = to_int(val, origin, line);
      else if (key == "chunk_seconds")
        cfg.train.chunk_seconds = to_double(val, origin, line);
      else if (key == "seed")
        cfg.train.seed = to_u64(val, origin, line);
      else if (key == "compand")
        cfg.train.compand = to_bool(val, origin, line);
      else if (key == "mu")
        cfg.train.mu = to_double(val, origin, line);
      else if (key == "clip_norm")
        cfg.train.clip_norm = to_double(val, origin, line);
      else
        bad_line(origin, line, "unknown key in [train]");
    } else {
      if (key == "manifest")
        cfg.manifest = resolve(val, base_dir);
      else if (key == "out_dir")
        cfg.out_dir = resolve(val, base_dir);
      else if (key == "checkpoint")
        cfg.checkpoint = resolve(val, base_dir);
      else
        bad_line(origin, line, "unknown key in [data]");
    }
  }
  return cfg;
}

RunConfig parse_run_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw DataError(detail::strfmt("cannot open config %s", path.c_str()));
  std::ostringstream buf;
  buf << f.rdbuf();
  const std::string dir = std::filesystem::path(path).parent_path().string();
  return parse_run_config_text(buf.str(), dir, path);
}

std::string run_config_text(const RunConfig& cfg) {
  std::string s;
  s += "[flow]\n";
  s += detail::strfmt("n_blocks = %d\n", cfg.flow.n_blocks);
  s += detail::strfmt("group_size = %d\n", cfg.flow.group_size);
  s += detail::strfmt("early_every = %d\n", cfg.flow.early_every);
  s += detail::strfmt("early_channels = %d\n", cfg.flow.early_channels);
  s += detail::strfmt("wn_layers = %d\n", cfg.flow.wn_layers);
  s += detail::strfmt("residual_channels = %d\n", cfg.flow.residual_channels);
  s += detail::strfmt("skip_channels = %d\n", cfg.flow.skip_channels);
  s += detail::strfmt("kernel_size = %d\n", cfg.flow.kernel_size);
  s += detail::strfmt("sigma_train = %.17g\n", cfg.flow.sigma_train);
  s += detail::strfmt("sigma_infer = %.17g\n", cfg.flow.sigma_infer);
  s += "\n[train]\n";
  s += detail::strfmt("batch_size = %d\n", cfg.train.batch_size);
  s += detail::strfmt("lr_initial = %.17g\n", cfg.train.lr_initial);
  s += detail::strfmt("lr_finetune = %.17g\n", cfg.train.lr_finetune);
  s += detail::strfmt("patience = %d\n", cfg.train.patience);
  s += detail::strfmt("max_epochs = %d\n", cfg.train.max_epochs);
  s += detail::strfmt("chunk_seconds = %.17g\n", cfg.train.chunk_seconds);
  s += detail::strfmt("seed = %llu\n", static_cast<unsigned long long>(cfg.train.seed));
  s += detail::strfmt("compand = %s\n", cfg.train.compand ? "true" : "false");
  s += detail::strfmt("mu = %.17g\n", cfg.train.mu);
  s += detail::strfmt("clip_norm = %.17g\n", cfg.train.clip_norm);
  s += "\n[data]\n";
  if (!cfg.manifest.empty()) s += detail::strfmt("manifest = %s\n", cfg.manifest.c_str());
  if (!cfg.out_dir.empty()) s += detail::strfmt("out_dir = %s\n", cfg.out_dir.c_str());
  if (!cfg.checkpoint.empty()) s += detail::strfmt("checkpoint = %s\n", cfg.checkpoint.c_str());
  return s;
}

void write_run_config(const std::string& path, const RunConfig& cfg) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw DataError(detail::strfmt("cannot create %s", path.c_str()));
  f << run_config_text(cfg);
  if (!f) throw DataError(detail::strfmt("short write to %s", path.c_str()));
}

}  // namespace seflow
