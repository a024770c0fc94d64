#include "voxsep/train/adam.h"

#include <cmath>

#include "voxsep/common.h"

namespace voxsep::train {

void Adam::sync(const nets::ParamStore& store) {
  for (auto it = slots_.begin(); it != slots_.end();) {
    std::int64_t idx = store.index_of(it->first);
    if (idx < 0 || !store.entry(idx).trainable) {
      it = slots_.erase(it);
    } else {
      ++it;
    }
  }
  for (const auto& e : store.entries()) {
    if (!e.trainable || slots_.count(e.name)) continue;
    AdamSlot slot;
    slot.m = Tensor<float>(e.value.shape());
    slot.v = Tensor<float>(e.value.shape());
    slot.t = 0;
    slots_.emplace(e.name, std::move(slot));
  }
}

StepResult Adam::step(nets::ParamStore& store, const std::vector<Tensor<float>>& grads,
                      double clip_norm) {
  VX_CHECK(grads.size() == store.size(), "adam: gradient list does not match store");
  StepResult res;

  double sq = 0.0;
  for (std::size_t i = 0; i < grads.size(); ++i) {
    const auto& e = store.entry(static_cast<std::int64_t>(i));
    const auto& g = grads[i];
    if (!e.trainable) {
      VX_CHECK(g.empty(), "adam: gradient supplied for frozen param " + e.name);
      continue;
    }
    VX_CHECK(g.shape() == e.value.shape(), "adam: gradient shape mismatch for " + e.name);
    for (std::int64_t k = 0; k < g.numel(); ++k) {
      double gv = static_cast<double>(g.data()[k]);
      if (!std::isfinite(gv)) return res;  // reject the whole step
      sq += gv * gv;
    }
  }
  res.grad_norm = std::sqrt(sq);

  double scale = 1.0;
  if (clip_norm > 0.0 && res.grad_norm > clip_norm) scale = clip_norm / res.grad_norm;

  for (std::size_t i = 0; i < grads.size(); ++i) {
    auto& e = store.entry(static_cast<std::int64_t>(i));
    if (!e.trainable) continue;
    auto it = slots_.find(e.name);
    VX_CHECK(it != slots_.end(), "adam: missing slot for trainable param " + e.name +
                                     " (call sync after changing freeze sets)");
    AdamSlot& s = it->second;
    s.t += 1;
    double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(s.t));
    double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(s.t));
    float* w = e.value.data();
    float* m = s.m.data();
    float* v = s.v.data();
    const float* g = grads[i].data();
    for (std::int64_t k = 0; k < e.value.numel(); ++k) {
      double gv = static_cast<double>(g[k]) * scale;
      double mv = cfg_.beta1 * static_cast<double>(m[k]) + (1.0 - cfg_.beta1) * gv;
      double vv = cfg_.beta2 * static_cast<double>(v[k]) + (1.0 - cfg_.beta2) * gv * gv;
      m[k] = static_cast<float>(mv);
      v[k] = static_cast<float>(vv);
      double mhat = mv / bc1;
      double vhat = vv / bc2;
      w[k] = static_cast<float>(static_cast<double>(w[k]) -
                                cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps));
    }
  }
  res.applied = true;
  return res;
}

}  // namespace voxsep::train
