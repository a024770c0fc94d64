#pragma once

// Adam optimizer over a ParamStore. Moment buffers exist only for the
// currently trainable parameters; sync() realigns them when a phase change
// flips trainable flags. Steps are rejected wholesale when any gradient entry
// is non-finite so a single bad batch cannot poison the moments.

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "voxsep/core/tensor.h"
#include "voxsep/nets/nets.h"

namespace voxsep::train {

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamSlot {
  Tensor<float> m;
  Tensor<float> v;
  std::int64_t t = 0;
};

struct StepResult {
  bool applied = false;     // false: non-finite gradient, nothing touched
  double grad_norm = 0.0;   // pre-clip global L2 norm (0 when rejected)
};

class Adam {
 public:
  explicit Adam(const AdamConfig& cfg) : cfg_(cfg) {}

  // Drops slots for params that are no longer trainable and creates zeroed
  // slots (t = 0) for newly trainable ones. Continuing params keep state.
  void sync(const nets::ParamStore& store);

  // One update from accumulated gradients, indexed like store.entries().
  // Frozen entries must carry an empty gradient. Gradients are clipped to
  // the given global L2 norm when clip_norm > 0.
  StepResult step(nets::ParamStore& store, const std::vector<Tensor<float>>& grads,
                  double clip_norm);

  const AdamConfig& config() const { return cfg_; }
  const std::map<std::string, AdamSlot>& slots() const { return slots_; }
  std::map<std::string, AdamSlot>& slots() { return slots_; }

 private:
  AdamConfig cfg_;
  std::map<std::string, AdamSlot> slots_;
};

}  // namespace voxsep::train
