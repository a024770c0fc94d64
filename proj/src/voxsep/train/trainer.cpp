#include "voxsep/train/trainer.h"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <stdexcept>

#include "json.hpp"
#include "voxsep/common.h"
#include "voxsep/core/ops.h"
#include "voxsep/core/rng.h"

namespace voxsep::train {
namespace {

constexpr std::uint64_t kShuffleTag = 0x53485546;  // epoch shuffle substream

struct RawTerms {
  double l_rec = 0.0, l1 = 0.0, l2 = 0.0, l3 = 0.0;

  RawTerms& operator+=(const RawTerms& o) {
    l_rec += o.l_rec;
    l1 += o.l1;
    l2 += o.l2;
    l3 += o.l3;
    return *this;
  }
  RawTerms scaled(double s) const { return {l_rec * s, l1 * s, l2 * s, l3 * s}; }
};

double scalar_of(const FValue& v) { return static_cast<double>(v.data().data()[0]); }

RawTerms raw_of(const Pipeline::LossTerms& t) {
  return {scalar_of(t.l_rec), scalar_of(t.l1), scalar_of(t.l2), scalar_of(t.l3)};
}

double weighted_full(const RawTerms& t, const losses::LossWeights& w) {
  return t.l_rec + w.alpha * t.l1 + w.beta * t.l2 + w.gamma * t.l3;
}

// Fisher-Yates on a dedicated substream; the order is a pure function of the
// (seed, global epoch) pair.
std::vector<std::size_t> shuffled_indices(std::size_t n, Rng rng) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  for (std::size_t i = n; i > 1; --i) {
    auto j = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(i) - 1));
    std::swap(idx[i - 1], idx[j]);
  }
  return idx;
}

// Forward + losses with constant-bound params (calibration and validation).
RawTerms eval_terms(const Pipeline& pipe, const ExcerptCache& c) {
  FTape tape;
  nets::BoundParams p = nets::bind_constants(pipe.store(), tape);
  Pipeline::Forward fw = pipe.forward(tape, p, c);
  return raw_of(pipe.build_losses(fw, c));
}

FValue active_loss(const Pipeline::LossTerms& t, const losses::LossWeights& w,
                   const std::vector<std::string>& terms) {
  std::vector<FValue> parts;
  for (const auto& name : terms) {
    if (name == "l_rec") {
      parts.push_back(t.l_rec);
    } else if (name == "l1") {
      parts.push_back(ops::scale(t.l1, static_cast<float>(w.alpha)));
    } else if (name == "l2") {
      parts.push_back(ops::scale(t.l2, static_cast<float>(w.beta)));
    } else if (name == "l3") {
      parts.push_back(ops::scale(t.l3, static_cast<float>(w.gamma)));
    } else {
      throw ConfigError("unknown loss term: " + name);
    }
  }
  VX_CHECK(!parts.empty(), "trainer: phase has no active loss terms");
  return parts.size() == 1 ? parts[0] : ops::add_n(parts);
}

}  // namespace

EarlyStop::EarlyStop(std::int64_t patience) : patience_(patience) {
  VX_CHECK(patience > 0, "early stop: patience must be positive");
}

bool EarlyStop::observe(double val) {
  if (val < best_) {
    best_ = val;
    since_ = 0;
    return false;
  }
  ++since_;
  return since_ >= patience_;
}

Trainer::Trainer(Pipeline& pipeline, const TrainConfig& cfg, TrainPlan plan)
    : pipe_(&pipeline), cfg_(cfg), plan_(std::move(plan)) {
  VX_CHECK(cfg_.batch_size > 0, "trainer: batch_size must be positive");
  VX_CHECK(!plan_.phases.empty(), "trainer: plan has no phases");
}

TrainResult Trainer::run(const std::vector<data::Excerpt>& train_set,
                         const std::vector<data::Excerpt>& valid_set) {
  VX_CHECK(!train_set.empty(), "trainer: empty training corpus");
  VX_CHECK(!valid_set.empty(), "trainer: empty validation split");
  const auto B = static_cast<std::size_t>(cfg_.batch_size);
  const std::size_t nb = train_set.size() / B;
  VX_CHECK(nb >= 1, "trainer: training split smaller than one batch of " +
                        std::to_string(cfg_.batch_size));

  std::vector<ExcerptCache> train_c, valid_c;
  train_c.reserve(train_set.size());
  valid_c.reserve(valid_set.size());
  for (const auto& ex : train_set) train_c.push_back(pipe_->prepare(ex));
  for (const auto& ex : valid_set) valid_c.push_back(pipe_->prepare(ex));

  nets::ParamStore& store = pipe_->store();
  Adam adam(cfg_.adam);
  losses::LossWeights weights;
  bool have_weights = false;
  std::vector<std::string> prev_terms;

  TrainResult res;
  std::ofstream log_file;
  if (!cfg_.out_dir.empty()) {
    std::filesystem::create_directories(cfg_.out_dir);
    log_file.open(cfg_.out_dir + "/train_log.jsonl", std::ios::trunc);
    VX_CHECK(log_file.good(), "trainer: cannot write log in " + cfg_.out_dir);
  }

  std::int64_t g = 0;  // global epochs completed
  std::size_t cur_phase = 0;

  auto assemble = [&]() {
    TrainMeta meta;
    meta.phase_index = static_cast<std::int64_t>(cur_phase);
    meta.epoch = g;
    meta.weights = weights;
    meta.seed = cfg_.seed;
    meta.config = pipe_->config().to_config_map();
    return assemble_checkpoint(store, adam, meta);
  };

  for (std::size_t pi = 0; pi < plan_.phases.size() && g < plan_.max_epochs; ++pi) {
    cur_phase = pi;
    const Phase& phase = plan_.phases[pi];
    for (const auto& mod : kAllModules) {
      const bool frozen =
          std::find(phase.frozen.begin(), phase.frozen.end(), mod) != phase.frozen.end();
      store.set_trainable_prefix(module_prefix(mod), !frozen);
    }
    adam.sync(store);
    VX_CHECK(store.count_trainable() > 0,
             "trainer: phase " + std::to_string(pi) + " freezes every parameter");

    if (!have_weights || phase.loss_terms != prev_terms) {
      auto order =
          shuffled_indices(train_set.size(),
                           Rng::derive(cfg_.seed, {kShuffleTag, static_cast<std::uint64_t>(g)}));
      RawTerms sums;
      for (std::size_t k = 0; k < B; ++k) sums += eval_terms(*pipe_, train_c[order[k]]);
      RawTerms m = sums.scaled(1.0 / static_cast<double>(B));
      weights = losses::calibrate(m.l_rec, m.l1, m.l2, m.l3);
      have_weights = true;
    }
    prev_terms = phase.loss_terms;

    const bool open = phase.epoch_budget < 0;
    const std::int64_t remaining = plan_.max_epochs - g;
    const std::int64_t budget = open ? remaining : std::min(phase.epoch_budget, remaining);
    EarlyStop stop(plan_.patience);
    std::int64_t count = 0;

    for (std::int64_t e = 0; e < budget; ++e) {
      auto order =
          shuffled_indices(train_set.size(),
                           Rng::derive(cfg_.seed, {kShuffleTag, static_cast<std::uint64_t>(g)}));
      RawTerms epoch_sums;
      for (std::size_t b = 0; b < nb; ++b) {
        std::vector<Tensor<float>> grads(store.size());
        for (std::size_t i = 0; i < store.size(); ++i) {
          const auto& entry = store.entry(static_cast<std::int64_t>(i));
          if (entry.trainable) grads[i] = Tensor<float>(entry.value.shape());
        }
        for (std::size_t k = 0; k < B; ++k) {
          const ExcerptCache& c = train_c[order[b * B + k]];
          FTape tape;
          nets::BoundParams p = nets::bind_params(store, tape);
          Pipeline::Forward fw = pipe_->forward(tape, p, c);
          Pipeline::LossTerms lt = pipe_->build_losses(fw, c);
          epoch_sums += raw_of(lt);
          FValue loss = active_loss(lt, weights, phase.loss_terms);
          tape.backward(ops::scale(loss, 1.0f / static_cast<float>(B)));
          for (std::size_t i = 0; i < store.size(); ++i) {
            if (grads[i].empty()) continue;
            const Tensor<float>& gl = p.leaves[i].node()->grad;
            if (gl.empty()) continue;  // trainable but unreachable from this loss
            float* dst = grads[i].data();
            const float* src = gl.data();
            for (std::int64_t q = 0; q < gl.numel(); ++q) dst[q] += src[q];
          }
        }
        StepResult sr = adam.step(store, grads, cfg_.clip_norm);
        if (!sr.applied) {
          ++res.nan_skips;
          std::fprintf(stderr, "trainer: non-finite gradient, step skipped (%d/%d)\n",
                       res.nan_skips, cfg_.nan_budget);
          if (res.nan_skips > cfg_.nan_budget) {
            if (!cfg_.out_dir.empty()) {
              write_checkpoint_file(cfg_.out_dir + "/last_good.ckpt", assemble());
            }
            throw std::runtime_error("trainer: NaN budget exceeded, training aborted");
          }
        }
      }

      RawTerms m = epoch_sums.scaled(1.0 / static_cast<double>(nb * B));
      RawTerms vsum;
      for (const auto& c : valid_c) vsum += eval_terms(*pipe_, c);
      RawTerms vm = vsum.scaled(1.0 / static_cast<double>(valid_c.size()));
      const double val = weighted_full(vm, weights);

      ++g;
      ++count;
      EpochRecord rec;
      rec.epoch = g;
      rec.phase = static_cast<std::int64_t>(pi);
      rec.l_rec = m.l_rec;
      rec.l1 = m.l1;
      rec.l2 = m.l2;
      rec.l3 = m.l3;
      rec.l_full = weighted_full(m, weights);
      rec.val_l_full = val;
      rec.lr = cfg_.adam.lr;
      res.log.push_back(rec);
      if (log_file.is_open()) {
        nlohmann::json j{{"epoch", rec.epoch},   {"phase", rec.phase}, {"l_rec", rec.l_rec},
                         {"l1", rec.l1},         {"l2", rec.l2},       {"l3", rec.l3},
                         {"l_full", rec.l_full}, {"val_l_full", rec.val_l_full},
                         {"lr", rec.lr}};
        log_file << j.dump() << "\n";
        log_file.flush();
      }
      if (val < res.best_val) {
        res.best_val = val;
        res.best_epoch = g;
        res.best_checkpoint = assemble();
      }
      if (open && stop.observe(val)) {
        res.stopped_early = true;
        break;
      }
    }
    res.phase_epochs.push_back(count);
  }

  res.weights = weights;
  res.final_checkpoint = assemble();
  if (!cfg_.out_dir.empty()) {
    write_checkpoint_file(cfg_.out_dir + "/last.ckpt", res.final_checkpoint);
    if (res.best_epoch >= 0) {
      write_checkpoint_file(cfg_.out_dir + "/best.ckpt", res.best_checkpoint);
    }
  }
  return res;
}

}  // namespace voxsep::train
