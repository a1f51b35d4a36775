#pragma once

// Run configuration file: one INI-style file covering the flow architecture,
// the training loop, and the data paths. CLI flags override file values; the
// fully resolved config is written next to command outputs.

#include <string>

#include "seflow/flow.hpp"
#include "seflow/training.hpp"

namespace seflow {

struct RunConfig {
  FlowConfig flow;
  TrainConfig train;
  std::string manifest;
  std::string out_dir;
  std::string checkpoint;

  bool operator==(const RunConfig&) const = default;
};

/// Sections [flow], [train], [data] with `key = value` lines; # and ;
/// comments. Unknown sections or keys are usage errors. Relative paths in
/// [data] resolve against base_dir (empty keeps them untouched).
RunConfig parse_run_config_text(const std::string& text, const std::string& base_dir,
                                const std::string& origin);

RunConfig parse_run_config(const std::string& path);

/// Serialization such that parse(write(cfg)) == cfg exactly.
std::string run_config_text(const RunConfig& cfg);

void write_run_config(const std::string& path, const RunConfig& cfg);

}  // namespace seflow
