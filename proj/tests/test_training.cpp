#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "seflow/checkpoint.hpp"
#include "seflow/flow.hpp"
#include "seflow/training.hpp"
#include "support/oracles.hpp"
#include "support/toycorpus.hpp"

using seflow::DataError;
using seflow::EarlyStopping;
using seflow::FlowConfig;
using seflow::FlowModel;
using seflow::PairSet;
using seflow::TrainConfig;
using seflow::TrainOutputs;
using seflow::TrainResult;

namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const char* leaf) {
  fs::path p = fs::temp_directory_path() / "seflow_training_test" / leaf;
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

TrainConfig fast_config() {
  TrainConfig cfg;
  cfg.batch_size = 2;
  cfg.lr_initial = 1e-3;
  cfg.lr_finetune = 1e-4;
  cfg.patience = 50;  // high enough that max_epochs is the binding cap
  cfg.max_epochs = 2;
  cfg.chunk_seconds = 0.25;
  cfg.seed = 5;
  cfg.compand = true;
  return cfg;
}

bool params_bitwise_equal(const FlowModel<float>& a, const FlowModel<float>& b) {
  auto pa = a.named_parameters(), pb = b.named_parameters();
  if (pa.size() != pb.size()) return false;
  for (std::size_t i = 0; i < pa.size(); ++i)
    if (pa[i].first != pb[i].first || pa[i].second.values() != pb[i].second.values()) return false;
  return true;
}

}  // namespace

TEST_CASE("early stopping fires after exactly patience non-improving epochs") {
  EarlyStopping s(2);
  CHECK(s.observe(1.0));
  CHECK_FALSE(s.should_stop());
  CHECK(s.observe(0.8));
  CHECK(s.best() == 0.8);
  CHECK(s.best_epoch() == 2);

  CHECK_FALSE(s.observe(0.9));
  CHECK_FALSE(s.should_stop());
  CHECK(s.epochs_since_best() == 1);
  CHECK_FALSE(s.observe(0.85));
  CHECK(s.should_stop());
  CHECK(s.best() == 0.8);
  CHECK(s.best_epoch() == 2);

  // Equal-to-best does not count as an improvement.
  s.reset();
  CHECK(s.observe(1.0));
  CHECK_FALSE(s.observe(1.0));
  CHECK(s.epochs_since_best() == 1);

  s.reset();
  s.restore(0.5, 1);
  CHECK(s.best() == 0.5);
  CHECK_FALSE(s.observe(0.6));
  CHECK(s.should_stop());
}

TEST_CASE("adam_update matches the closed-form recurrence") {
  const double b1 = 0.9, b2 = 0.999, eps = 1e-8, lr = 0.01;
  const std::vector<double> g1{0.3, -1.2, 0.05}, g2{-0.4, 0.7, 2.0};

  std::vector<double> p{1.0, -2.0, 0.5}, m(3, 0.0), v(3, 0.0);
  std::vector<double> rp = p, rm = m, rv = v;
  for (int step = 1; step <= 2; ++step) {
    const std::vector<double>& g = step == 1 ? g1 : g2;
    seflow::adam_update<double>(p.data(), g.data(), m.data(), v.data(), 3, step, lr);
    for (int i = 0; i < 3; ++i) {
      rm[i] = b1 * rm[i] + (1 - b1) * g[i];
      rv[i] = b2 * rv[i] + (1 - b2) * g[i] * g[i];
      const double mh = rm[i] / (1 - std::pow(b1, step));
      const double vh = rv[i] / (1 - std::pow(b2, step));
      rp[i] -= lr * mh / (std::sqrt(vh) + eps);
      CHECK(p[i] == doctest::Approx(rp[i]).epsilon(1e-13));
      CHECK(m[i] == doctest::Approx(rm[i]).epsilon(1e-13));
      CHECK(v[i] == doctest::Approx(rv[i]).epsilon(1e-13));
    }
  }

  // Float storage keeps the same double recurrence to storage precision.
  std::vector<float> pf{1.0f, -2.0f, 0.5f}, mf(3, 0.0f), vf(3, 0.0f);
  std::vector<float> gf{0.3f, -1.2f, 0.05f};
  seflow::adam_update<float>(pf.data(), gf.data(), mf.data(), vf.data(), 3, 1, lr);
  for (int i = 0; i < 3; ++i) {
    const double m1 = (1 - b1) * double(gf[i]);
    const double v1 = (1 - b2) * double(gf[i]) * double(gf[i]);
    const double want =
        double(i == 0 ? 1.0f : i == 1 ? -2.0f : 0.5f) -
        lr * (m1 / (1 - b1)) / (std::sqrt(v1 / (1 - b2)) + eps);
    CHECK(double(pf[i]) == doctest::Approx(want).epsilon(1e-6));
  }
}

TEST_CASE("config and pair set validation reject malformed inputs") {
  TrainConfig cfg = fast_config();
  CHECK_NOTHROW(cfg.validate());
  cfg.batch_size = 0;
  CHECK_THROWS_AS(cfg.validate(), DataError);
  cfg = fast_config();
  cfg.lr_initial = -1.0;
  CHECK_THROWS_AS(cfg.validate(), DataError);
  cfg = fast_config();
  cfg.patience = 0;
  CHECK_THROWS_AS(cfg.validate(), DataError);
  cfg = fast_config();
  cfg.max_epochs = 0;
  CHECK_THROWS_AS(cfg.validate(), DataError);
  cfg = fast_config();
  cfg.chunk_seconds = 0.0;
  CHECK_THROWS_AS(cfg.validate(), DataError);
  cfg = fast_config();
  cfg.mu = 0.0;
  CHECK_THROWS_AS(cfg.validate(), DataError);

  toy::ToySets sets = toy::build_toy_sets(10, 77, 0.5);
  CHECK_NOTHROW(seflow::validate_pairset(sets.train, "train"));

  PairSet bad = sets.train;
  bad.noisy.pop_back();
  CHECK_THROWS_AS(seflow::validate_pairset(bad, "train"), DataError);
  bad = sets.train;
  bad.noisy[0].samples.pop_back();
  CHECK_THROWS_AS(seflow::validate_pairset(bad, "train"), DataError);
  bad = sets.train;
  bad.clean[1].sample_rate = 8000;
  CHECK_THROWS_AS(seflow::validate_pairset(bad, "train"), DataError);
  CHECK_THROWS_AS(seflow::validate_pairset(PairSet{}, "empty"), DataError);
}

TEST_CASE("history csv format") {
  fs::path dir = scratch_dir("history");
  std::vector<seflow::EpochRow> rows(2);
  rows[0] = {1, "initial", -0.25, -0.125, 1e-3, 2.5};
  rows[1] = {2, "finetune", -0.5, -0.4375, 1e-4, 2.25};
  const std::string path = (dir / "history.csv").string();
  seflow::write_history_csv(path, rows);

  std::ifstream f(path);
  std::string line;
  REQUIRE(bool(std::getline(f, line)));
  CHECK(line == "epoch,phase,train_nll,val_nll,lr,seconds");
  REQUIRE(bool(std::getline(f, line)));
  CHECK(line.substr(0, 10) == "1,initial,");
  CHECK(line.find("-0.25") != std::string::npos);
  REQUIRE(bool(std::getline(f, line)));
  CHECK(line.substr(0, 11) == "2,finetune,");
  CHECK_FALSE(bool(std::getline(f, line)));
}

TEST_CASE("toy training completes both phases and writes its artifacts") {
  fs::path dir = scratch_dir("smoke");
  toy::ToySets sets = toy::build_toy_sets(10, 77, 0.5);
  TrainConfig cfg = fast_config();

  FlowModel<float> model(FlowConfig::tiny());
  model.random_init(9);
  TrainOutputs out;
  out.best_checkpoint = (dir / "best.ckpt").string();
  out.last_checkpoint = (dir / "last.ckpt").string();
  out.history_csv = (dir / "history.csv").string();

  TrainResult res = seflow::train(model, sets.train, sets.val, cfg, out);
  CHECK_FALSE(res.aborted);
  REQUIRE(res.history.size() == 4);  // two epochs per phase, patience never binds
  CHECK(res.history[0].phase == "initial");
  CHECK(res.history[1].phase == "initial");
  CHECK(res.history[2].phase == "finetune");
  CHECK(res.history[3].phase == "finetune");
  for (std::size_t i = 0; i < 4; ++i) {
    CHECK(res.history[i].epoch == int(i) + 1);
    CHECK(std::isfinite(res.history[i].train_nll));
    CHECK(std::isfinite(res.history[i].val_nll));
  }
  CHECK(res.history[0].lr == 1e-3);
  CHECK(res.history[2].lr == 1e-4);
  CHECK(res.state.epochs_total == 4);

  REQUIRE(fs::exists(out.best_checkpoint));
  REQUIRE(fs::exists(out.last_checkpoint));
  REQUIRE(fs::exists(out.history_csv));

  // last.ckpt carries the optimizer state; best.ckpt is weights only.
  seflow::LoadedCheckpoint last = seflow::load_checkpoint(out.last_checkpoint);
  REQUIRE(last.state.has_value());
  CHECK(last.state->epochs_total == 4);
  CHECK(params_bitwise_equal(last.model, model));
  seflow::LoadedCheckpoint best = seflow::load_checkpoint(out.best_checkpoint);
  CHECK_FALSE(best.state.has_value());
  CHECK(params_bitwise_equal(best.model, res.model));

  std::ifstream f(out.history_csv);
  std::string line;
  int lines = 0;
  while (std::getline(f, line)) ++lines;
  CHECK(lines == 5);
}

TEST_CASE("training is bitwise deterministic under a fixed seed") {
  toy::ToySets sets = toy::build_toy_sets(10, 78, 0.5);
  TrainConfig cfg = fast_config();

  auto run = [&]() {
    FlowModel<float> model(FlowConfig::tiny());
    model.random_init(12);
    return seflow::train(model, sets.train, sets.val, cfg);
  };
  TrainResult a = run();
  TrainResult b = run();
  REQUIRE(a.history.size() == b.history.size());
  for (std::size_t i = 0; i < a.history.size(); ++i) {
    CHECK(a.history[i].train_nll == b.history[i].train_nll);
    CHECK(a.history[i].val_nll == b.history[i].val_nll);
  }
  CHECK(params_bitwise_equal(a.model, b.model));
  CHECK(a.state.m == b.state.m);
  CHECK(a.state.v == b.state.v);
}

TEST_CASE("resume from a mid-run checkpoint reproduces the uninterrupted history") {
  fs::path dir = scratch_dir("resume");
  fs::path side = scratch_dir("resume_snapshot");
  toy::ToySets sets = toy::build_toy_sets(10, 79, 0.5);
  TrainConfig cfg = fast_config();
  cfg.max_epochs = 3;  // 3 initial + 3 finetune epochs

  TrainOutputs out;
  out.best_checkpoint = (dir / "best.ckpt").string();
  out.last_checkpoint = (dir / "last.ckpt").string();

  // The callback runs before the epoch's files are written, so at the start
  // of epoch 3 the files on disk still hold the end-of-epoch-2 state.
  auto snapshot_before_epoch3 = [&](const seflow::EpochRow& row) {
    if (row.epoch == 3) {
      fs::copy_file(out.best_checkpoint, side / "best.ckpt",
                    fs::copy_options::overwrite_existing);
      fs::copy_file(out.last_checkpoint, side / "last.ckpt",
                    fs::copy_options::overwrite_existing);
    }
  };

  FlowModel<float> model(FlowConfig::tiny());
  model.random_init(14);
  TrainResult full =
      seflow::train(model, sets.train, sets.val, cfg, out, nullptr, snapshot_before_epoch3);
  REQUIRE(full.history.size() == 6);
  REQUIRE(fs::exists(side / "last.ckpt"));

  seflow::LoadedCheckpoint snap = seflow::load_checkpoint((side / "last.ckpt").string());
  REQUIRE(snap.state.has_value());
  CHECK(snap.state->phase == 0);
  CHECK(snap.state->epochs_total == 2);

  TrainOutputs out2;
  out2.best_checkpoint = (side / "best.ckpt").string();
  out2.last_checkpoint = (side / "last.ckpt").string();
  TrainResult resumed =
      seflow::train(snap.model, sets.train, sets.val, cfg, out2, &*snap.state);

  REQUIRE(resumed.history.size() == 4);  // epochs 3..6
  for (std::size_t i = 0; i < resumed.history.size(); ++i) {
    const seflow::EpochRow& want = full.history[i + 2];
    const seflow::EpochRow& got = resumed.history[i];
    CHECK(got.epoch == want.epoch);
    CHECK(got.phase == want.phase);
    CHECK(got.train_nll == want.train_nll);
    CHECK(got.val_nll == want.val_nll);
    CHECK(got.lr == want.lr);
  }
  CHECK(params_bitwise_equal(resumed.model, full.model));

  seflow::TrainState bad = *snap.state;
  bad.phase = 2;
  CHECK_THROWS_AS(seflow::train(snap.model, sets.train, sets.val, cfg, out2, &bad), DataError);
  bad = *snap.state;
  bad.m.pop_back();
  CHECK_THROWS_AS(seflow::train(snap.model, sets.train, sets.val, cfg, out2, &bad), DataError);
}

TEST_CASE("non-finite loss aborts and keeps the best snapshot") {
  toy::ToySets sets = toy::build_toy_sets(10, 80, 0.5);
  TrainConfig cfg = fast_config();

  FlowModel<float> model(FlowConfig::tiny());
  model.random_init(15);
  auto params = model.named_parameters();
  params[0].second.mutable_values()[0] = std::numeric_limits<float>::quiet_NaN();

  TrainResult res = seflow::train(model, sets.train, sets.val, cfg);
  CHECK(res.aborted);
  CHECK(res.history.empty());
}

TEST_CASE("dataset_nll averages whole utterances per element") {
  toy::ToySets sets = toy::build_toy_sets(10, 81, 0.5);
  FlowModel<float> model(FlowConfig::tiny());
  model.identity_init();
  const double got = seflow::dataset_nll(model, sets.val, false, 255.0, 1.0);
  const double want = oracle::identity_nll(sets.val.clean, false, 255.0, 1.0, 4);
  CHECK(got == doctest::Approx(want).epsilon(1e-6));
  CHECK_THROWS_AS(seflow::dataset_nll(model, sets.val, false, 255.0, 0.0), DataError);
}
