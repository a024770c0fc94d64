#pragma once

// Run configuration: built-in defaults, overridden by a JSON config file,
// overridden by command-line flags. Parsing is strict; unknown keys anywhere
// in the document are errors, so typos fail fast instead of silently keeping
// a default.

#include <cstdint>
#include <string>

#include "json.hpp"
#include "voxsep/data/data.h"
#include "voxsep/train/adam.h"
#include "voxsep/train/pipeline.h"

namespace voxsep::cli {

struct AppConfig {
  std::uint64_t seed = 1;

  data::GenConfig gen;
  double train_frac = 0.6;
  double valid_frac = 0.2;

  train::PipelineConfig pipeline;

  std::string strategy = "wup";
  std::int64_t max_epochs = 200;
  std::int64_t patience = 30;
  std::int64_t warmup_epochs = 50;
  std::int64_t batch_size = 15;
  train::AdamConfig adam;
  double clip_norm = 5.0;
  int nan_budget = 10;
};

// Merges a parsed JSON document into cfg. Throws ConfigError on unknown keys
// (reported with their full path) or wrong value types.
void apply_json(AppConfig& cfg, const nlohmann::json& j);

// Reads and merges a config file; missing/unparsable files are ConfigErrors.
AppConfig load_config_file(const std::string& path);

// Full echo of the resolved state; apply_json(to_json(cfg)) is the identity.
nlohmann::json to_json(const AppConfig& cfg);

// Writes to_json(cfg) (plus any extra run arguments) as pretty JSON.
void write_resolved_config(const std::string& path, const AppConfig& cfg,
                           const nlohmann::json& run_args);

}  // namespace voxsep::cli
