// seflow: conditional normalizing-flow speech enhancement.
//
// Subcommands: mix (dataset construction), train, enhance, evaluate, check
// (invariant suites). Exit codes: 0 success, 1 usage error, 2 data error,
// 3 numeric failure.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "seflow/audio.hpp"
#include "seflow/checkpoint.hpp"
#include "seflow/errors.hpp"
#include "seflow/evaluation.hpp"
#include "seflow/flow.hpp"
#include "seflow/rng.hpp"
#include "seflow/runconfig.hpp"
#include "seflow/selfcheck.hpp"
#include "seflow/training.hpp"

namespace fs = std::filesystem;
using namespace seflow;

namespace {

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw DataError(detail::strfmt("cannot create directory %s", dir.c_str()));
}

std::vector<std::string> wav_basenames(const std::string& dir) {
  if (!fs::is_directory(dir))
    throw DataError(detail::strfmt("%s is not a directory", dir.c_str()));
  std::vector<std::string> names;
  for (const fs::directory_entry& e : fs::directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ".wav")
      names.push_back(e.path().filename().string());
  std::sort(names.begin(), names.end());
  return names;
}

// One line per record keeps long mixes observable without being chatty.
int cmd_mix(const RunConfig& cfg) {
  if (cfg.manifest.empty()) throw UsageError("mix: no manifest given (--manifest or [data])");
  if (cfg.out_dir.empty()) throw UsageError("mix: no output directory (--out or [data])");
  const std::vector<MixRecord> records = read_manifest(cfg.manifest);
  ensure_dir(cfg.out_dir);
  ensure_dir(cfg.out_dir + "/clean");
  ensure_dir(cfg.out_dir + "/noisy");
  write_run_config(cfg.out_dir + "/config.ini", cfg);

  std::set<std::string> names;
  std::vector<MixRecord> resolved;
  std::size_t failures = 0;
  for (std::size_t i = 0; i < records.size(); ++i) {
    const MixRecord& rec = records[i];
    const std::string name =
        detail::strfmt("%s__%s__%g", fs::path(rec.clean).stem().string().c_str(),
                       fs::path(rec.noise).stem().string().c_str(), rec.snr_db);
    if (!names.insert(name).second)
      throw DataError(detail::strfmt("mix: duplicate output name %s (same clean, noise and "
                                     "SNR listed twice)",
                                     name.c_str()));
    try {
      const AudioBuffer clean = read_wav(rec.clean);
      const AudioBuffer noise = read_wav(rec.noise);
      std::mt19937_64 rng = make_rng(derive_seed(cfg.train.seed, 0x6d6978ULL, i));
      const MixResult mix = mix_at_snr(clean, noise, rec.snr_db, rng);
      const double measured = global_snr(mix.clean, mix.noisy).db;
      MixRecord out;
      out.clean = cfg.out_dir + "/clean/" + name + ".wav";
      out.noise = cfg.out_dir + "/noisy/" + name + ".wav";
      out.snr_db = measured;
      out.split = rec.split;
      write_wav(out.clean, mix.clean);
      write_wav(out.noise, mix.noisy);
      resolved.push_back(out);
      std::printf("mixed %s at %.2f dB (measured %.4f dB)\n", name.c_str(), rec.snr_db,
                  measured);
    } catch (const Error& e) {
      std::fprintf(stderr, "record %zu (%s): %s\n", i + 1, rec.clean.c_str(), e.what());
      ++failures;
    }
  }
  write_manifest(cfg.out_dir + "/manifest.csv", resolved);
  std::printf("wrote %zu pairs to %s\n", resolved.size(), cfg.out_dir.c_str());
  if (failures)
    throw DataError(detail::strfmt("mix: %zu of %zu records failed", failures, records.size()));
  return 0;
}

/// Splits a resolved manifest into loaded pair sets by the split column.
void load_pairs(const std::string& manifest, PairSet& train_set, PairSet& val_set,
                PairSet& test_set) {
  for (const MixRecord& rec : read_manifest(manifest)) {
    PairSet& dst = rec.split == "train" ? train_set : rec.split == "val" ? val_set : test_set;
    dst.clean.push_back(read_wav(rec.clean));
    dst.noisy.push_back(read_wav(rec.noise));
  }
}

int cmd_train(const RunConfig& cfg, const std::string& resume_path) {
  if (cfg.manifest.empty()) throw UsageError("train: no manifest given (--manifest or [data])");
  if (cfg.out_dir.empty()) throw UsageError("train: no output directory (--out or [data])");
  cfg.flow.validate();
  cfg.train.validate();
  ensure_dir(cfg.out_dir);
  write_run_config(cfg.out_dir + "/config.ini", cfg);

  PairSet train_set, val_set, test_set;
  load_pairs(cfg.manifest, train_set, val_set, test_set);
  if (train_set.size() == 0) throw DataError("train: manifest has no records with split=train");
  if (val_set.size() == 0) throw DataError("train: manifest has no records with split=val");
  std::printf("loaded %zu train / %zu val pairs\n", train_set.size(), val_set.size());

  FlowModel<float> model(cfg.flow);
  TrainState resume_state;
  const TrainState* resume = nullptr;
  if (!resume_path.empty()) {
    LoadedCheckpoint lc = load_checkpoint(resume_path);
    if (!lc.state)
      throw DataError(detail::strfmt("%s has no training state to resume from",
                                     resume_path.c_str()));
    model = std::move(lc.model);
    resume_state = std::move(*lc.state);
    resume = &resume_state;
    std::printf("resuming from %s (epoch %d)\n", resume_path.c_str(),
                resume_state.epochs_total);
  } else {
    model.random_init(cfg.train.seed);
  }

  TrainOutputs outputs;
  outputs.best_checkpoint = cfg.out_dir + "/best.ckpt";
  outputs.last_checkpoint = cfg.out_dir + "/last.ckpt";
  outputs.history_csv = cfg.out_dir + "/history.csv";

  const TrainResult result =
      train(model, train_set, val_set, cfg.train, outputs, resume, [](const EpochRow& row) {
        std::printf("epoch %3d [%s] train %.5f val %.5f lr %.2e (%.1fs)\n", row.epoch,
                    row.phase.c_str(), row.train_nll, row.val_nll, row.lr, row.seconds);
        std::fflush(stdout);
      });

  std::printf("best validation NLL %.6f nats/element after %d epochs\n",
              result.state.best_val_nll, result.state.epochs_total);
  std::printf("artifacts: %s, %s, %s\n", outputs.best_checkpoint.c_str(),
              outputs.last_checkpoint.c_str(), outputs.history_csv.c_str());
  if (result.aborted)
    throw NumericError("training aborted on non-finite loss; best checkpoint retained");
  return 0;
}

int cmd_enhance(const std::string& checkpoint, const std::string& input,
                const std::string& out_dir, double sigma, bool sigma_given,
                std::uint64_t seed) {
  LoadedCheckpoint lc = load_checkpoint(checkpoint);
  const double s = sigma_given ? sigma : lc.model.config().sigma_infer;
  if (s < 0) throw UsageError("enhance: sigma must be non-negative");

  std::vector<std::string> files;
  std::string in_dir;
  if (fs::is_directory(input)) {
    in_dir = input;
    files = wav_basenames(input);
    if (files.empty())
      throw DataError(detail::strfmt("enhance: no .wav files in %s", input.c_str()));
  } else if (fs::is_regular_file(input)) {
    in_dir = fs::path(input).parent_path().string();
    files = {fs::path(input).filename().string()};
  } else {
    throw DataError(detail::strfmt("enhance: %s does not exist", input.c_str()));
  }

  ensure_dir(out_dir);
  for (const std::string& name : files) {
    const std::string in_path = in_dir.empty() ? name : in_dir + "/" + name;
    const AudioBuffer noisy = read_wav(in_path);
    const AudioBuffer out = lc.model.enhance(noisy, s, derive_seed(seed, fnv1a(name)));
    write_wav(out_dir + "/" + name, out);
    std::printf("enhanced %s (%.2f s)\n", name.c_str(), out.duration_s());
  }
  std::printf("wrote %zu files to %s\n", files.size(), out_dir.c_str());
  return 0;
}

int cmd_evaluate(const std::string& clean_dir, const std::string& test_dir,
                 const std::string& out_csv) {
  const std::vector<std::string> clean_names = wav_basenames(clean_dir);
  const std::vector<std::string> test_names = wav_basenames(test_dir);

  std::vector<std::string> missing;
  std::set<std::string> test_set(test_names.begin(), test_names.end());
  std::set<std::string> clean_set(clean_names.begin(), clean_names.end());
  for (const std::string& n : clean_names)
    if (!test_set.count(n)) missing.push_back(n + " (missing from test dir)");
  for (const std::string& n : test_names)
    if (!clean_set.count(n)) missing.push_back(n + " (missing from clean dir)");
  if (!missing.empty()) {
    std::string list;
    for (const std::string& m : missing) list += "\n  " + m;
    throw DataError("evaluate: unpaired files:" + list);
  }
  if (clean_names.empty()) throw DataError("evaluate: no .wav files to compare");

  std::vector<EvalPair> pairs;
  for (const std::string& n : clean_names) {
    EvalPair p;
    p.name = n;
    p.clean = read_wav(clean_dir + "/" + n);
    p.test = read_wav(test_dir + "/" + n);
    pairs.push_back(std::move(p));
  }
  const MetricReport report = evaluate_pairs(pairs);
  write_metric_report(out_csv, report);
  for (const UtteranceMetrics& m : report.rows)
    std::printf("%s: segSNR %.3f dB, global SNR %.3f dB\n", m.utterance.c_str(), m.seg_snr_db,
                m.global_snr_db);
  std::printf("mean over %zu utterances: segSNR %.3f dB, global SNR %.3f dB\n",
              report.rows.size(), report.mean_seg_snr_db, report.mean_global_snr_db);
  std::printf("report written to %s\n", out_csv.c_str());
  return 0;
}

int cmd_check(const std::string& level_name, const std::string& checkpoint,
              std::uint64_t seed) {
  const selfcheck::Level level =
      level_name == "full" ? selfcheck::Level::full : selfcheck::Level::fast;
  FlowModel<float> model;
  const FlowModel<float>* model_ptr = nullptr;
  if (!checkpoint.empty()) {
    LoadedCheckpoint lc = load_checkpoint(checkpoint);
    model = std::move(lc.model);
    model_ptr = &model;
  }
  const auto t0 = std::chrono::steady_clock::now();
  const std::vector<selfcheck::CheckResult> results = selfcheck::run_all(level, seed, model_ptr);
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  const bool ok = selfcheck::print_report(std::cout, results);
  std::printf("%s level finished in %.1f s\n", level_name.c_str(), seconds);
  if (!ok) throw NumericError("self-check found failing invariants");
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Time-domain speech enhancement with a conditional normalizing flow"};
  app.require_subcommand(1);

  std::string config_path, manifest, out_path, checkpoint, input, resume_path;
  std::string clean_dir, test_dir, level = "fast";
  std::uint64_t seed = 1234;
  double sigma = 0.9;

  CLI::App* mix = app.add_subcommand("mix", "Mix clean and noise files per a manifest");
  mix->add_option("--config", config_path, "Run config file");
  mix->add_option("--manifest", manifest, "Mixing manifest CSV");
  mix->add_option("--out", out_path, "Output directory");
  mix->add_option("--seed", seed, "Noise-placement seed");

  CLI::App* train = app.add_subcommand("train", "Train a model from a resolved manifest");
  train->add_option("--config", config_path, "Run config file")->required();
  train->add_option("--manifest", manifest, "Override the manifest path");
  train->add_option("--out", out_path, "Override the output directory");
  train->add_option("--seed", seed, "Override the training seed");
  train->add_option("--resume", resume_path, "Checkpoint with training state to resume from");

  CLI::App* enhance = app.add_subcommand("enhance", "Enhance a WAV file or a directory");
  enhance->add_option("--checkpoint", checkpoint, "Model checkpoint")->required();
  enhance->add_option("--in", input, "Input WAV file or directory")->required();
  enhance->add_option("--out", out_path, "Output directory")->required();
  enhance->add_option("--sigma", sigma, "Sampling temperature (default: checkpoint value)");
  enhance->add_option("--seed", seed, "Sampling seed");

  CLI::App* evaluate = app.add_subcommand("evaluate", "Compare enhanced audio to references");
  evaluate->add_option("--clean", clean_dir, "Reference directory")->required();
  evaluate->add_option("--test", test_dir, "Directory under evaluation")->required();
  evaluate->add_option("--out", out_path, "Report CSV path");

  CLI::App* check = app.add_subcommand("check", "Run the invariant self-check suites");
  check->add_option("--level", level, "fast or full")
      ->check(CLI::IsMember({"fast", "full"}));
  check->add_option("--checkpoint", checkpoint, "Also round-trip this checkpoint");
  check->add_option("--seed", seed, "Suite seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    // Collapse CLI11's parse-error codes onto the usage exit code; --help
    // keeps its success status.
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }

  try {
    if (*mix || *train) {
      RunConfig cfg;
      if (!config_path.empty()) cfg = parse_run_config(config_path);
      if (mix->count("--manifest") || train->count("--manifest")) cfg.manifest = manifest;
      if (mix->count("--out") || train->count("--out")) cfg.out_dir = out_path;
      if (mix->count("--seed") || train->count("--seed")) cfg.train.seed = seed;
      return *mix ? cmd_mix(cfg) : cmd_train(cfg, resume_path);
    }
    if (*enhance)
      return cmd_enhance(checkpoint, input, out_path, sigma, enhance->count("--sigma") > 0,
                         seed);
    if (*evaluate)
      return cmd_evaluate(clean_dir, test_dir, out_path.empty() ? "metrics.csv" : out_path);
    if (*check) return cmd_check(level, checkpoint, seed);
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return exit_code_for(e);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 1;
}
