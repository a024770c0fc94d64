#pragma once

// Phase-driven training loop: freeze management, first-batch loss-weight
// calibration, per-excerpt gradient accumulation into a clipped Adam step,
// validation early stopping, best-checkpoint retention, and a JSONL log.
// Everything runs sequentially in a fixed order, so a (config, seed) pair
// determines the whole trajectory bit for bit.

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "voxsep/data/data.h"
#include "voxsep/losses/losses.h"
#include "voxsep/train/adam.h"
#include "voxsep/train/checkpoint.h"
#include "voxsep/train/pipeline.h"
#include "voxsep/train/plan.h"

namespace voxsep::train {

struct TrainConfig {
  AdamConfig adam;
  std::int64_t batch_size = 15;
  double clip_norm = 5.0;
  int nan_budget = 10;  // skipped steps tolerated before hard failure
  std::uint64_t seed = 1;
  std::string out_dir;  // empty: no files, results stay in memory
};

struct EpochRecord {
  std::int64_t epoch = 0;  // global, starting at 1
  std::int64_t phase = 0;
  double l_rec = 0.0, l1 = 0.0, l2 = 0.0, l3 = 0.0;
  double l_full = 0.0;      // all four terms, calibrated weights
  double val_l_full = 0.0;  // same on the validation split
  double lr = 0.0;
};

struct TrainResult {
  std::vector<std::int64_t> phase_epochs;  // epochs actually run per phase
  std::vector<EpochRecord> log;
  losses::LossWeights weights;
  double best_val = HUGE_VAL;
  std::int64_t best_epoch = -1;
  bool stopped_early = false;
  int nan_skips = 0;
  CheckpointData best_checkpoint;
  CheckpointData final_checkpoint;
};

// Patience counter on a minimized metric; strict improvement resets it.
class EarlyStop {
 public:
  explicit EarlyStop(std::int64_t patience);
  bool observe(double val);  // true once `patience` epochs pass without improvement
  double best() const { return best_; }

 private:
  std::int64_t patience_;
  std::int64_t since_ = 0;
  double best_ = HUGE_VAL;
};

class Trainer {
 public:
  Trainer(Pipeline& pipeline, const TrainConfig& cfg, TrainPlan plan);

  TrainResult run(const std::vector<data::Excerpt>& train_set,
                  const std::vector<data::Excerpt>& valid_set);

 private:
  Pipeline* pipe_;
  TrainConfig cfg_;
  TrainPlan plan_;
};

}  // namespace voxsep::train
