#pragma once

// Trainable estimator stand-ins: salience extractor, voice-assignment net,
// mixture encoder, and per-source parameter decoder, plus the oracle salience
// builder used when the extractor is replaced by ground truth. Parameters
// live in an insertion-ordered ParamStore; a forward build binds them to a
// tape once so gradients accumulate across an entire batch.

#include <cstdint>
#include <string>
#include <vector>

#include "voxsep/core/autodiff.h"
#include "voxsep/core/tensor.h"
#include "voxsep/salience/salience.h"

namespace voxsep::nets {

using FValue = autodiff::Value<float>;
using FTape = autodiff::Tape<float>;

struct ParamEntry {
  std::string name;
  Tensor<float> value;
  bool trainable = true;
};

// Named parameter registry. Insertion order is the canonical order for
// checkpoints and optimizer state, so it must stay deterministic.
class ParamStore {
 public:
  std::int64_t add(std::string name, Tensor<float> init, bool trainable = true);
  std::int64_t index_of(const std::string& name) const;  // -1 when missing

  std::size_t size() const { return entries_.size(); }
  ParamEntry& entry(std::int64_t i) { return entries_[static_cast<std::size_t>(i)]; }
  const ParamEntry& entry(std::int64_t i) const { return entries_[static_cast<std::size_t>(i)]; }
  std::vector<ParamEntry>& entries() { return entries_; }
  const std::vector<ParamEntry>& entries() const { return entries_; }

  // Module freeze: flips the trainable flag on every "<prefix>..." entry.
  void set_trainable_prefix(const std::string& prefix, bool trainable);
  std::int64_t count_trainable() const;

 private:
  std::vector<ParamEntry> entries_;
};

// Per-tape binding: one leaf per entry, in store order. Frozen entries become
// constants, so no gradient buffer is ever allocated for them.
struct BoundParams {
  std::vector<FValue> leaves;
  const FValue& operator[](std::int64_t i) const { return leaves[static_cast<std::size_t>(i)]; }
};

BoundParams bind_params(const ParamStore& store, FTape& tape);

// Inference/validation binding: everything constant, no backward state.
BoundParams bind_constants(const ParamStore& store, FTape& tape);

struct SalienceNetConfig {
  int in_channels = 1;  // HCQT harmonic layers
  int channels = 16;
};

// Three 5x5 conv layers over the [harmonics, frames, bins] grid, sigmoid
// output: one mixture salience map in [0,1].
class SalienceNet {
 public:
  SalienceNet(ParamStore& store, const SalienceNetConfig& cfg, std::uint64_t seed);
  FValue forward(const BoundParams& p, FValue hcqt) const;  // [H,L,M] -> [L,M]

 private:
  SalienceNetConfig cfg_;
  std::int64_t w1_, b1_, w2_, b2_, w3_, b3_;
};

struct AssignmentNetConfig {
  int voices = 4;
  int channels = 8;
};

// Two 5x5 conv layers plus per-voice 1x1 sigmoid heads. The input gets a
// second, constant channel holding the normalized bin index: plain convs are
// translation-equivariant, and voice assignment has to key on absolute
// frequency.
class AssignmentNet {
 public:
  AssignmentNet(ParamStore& store, const AssignmentNetConfig& cfg, std::uint64_t seed);
  std::vector<FValue> forward(const BoundParams& p, FValue s_mix) const;  // [L,M] -> J x [L,M]

 private:
  AssignmentNetConfig cfg_;
  std::int64_t w1_, b1_, w2_, b2_, wh_, bh_;
};

struct EncoderConfig {
  int in_bins = 257;  // 512-point STFT magnitudes
  int hidden = 128;
  int latent = 64;
};

// Per-frame two-layer MLP over log-compressed mixture magnitudes.
class MixtureEncoder {
 public:
  MixtureEncoder(ParamStore& store, const EncoderConfig& cfg, std::uint64_t seed);
  FValue forward(const BoundParams& p, FValue log_mag) const;  // [L,in_bins] -> [L,latent]

 private:
  EncoderConfig cfg_;
  std::int64_t w1_, b1_, w2_, b2_;
};

struct DecoderConfig {
  int latent = 64;
  int voices = 4;
  int hidden = 128;
  int harmonics = 40;    // K
  int noise_bands = 65;  // B
};

struct SourceParams {
  FValue harm;   // [L, K] nonnegative harmonic amplitudes (pre-normalization)
  FValue amp;    // [L] nonnegative global amplitude
  FValue noise;  // [L, B] nonnegative noise band magnitudes
};

// Shared across voices: conditioning is [latent | f0/1000 | voice one-hot],
// one hidden layer, three positive-squashed heads emitting K + 1 + B values.
class SourceDecoder {
 public:
  SourceDecoder(ParamStore& store, const DecoderConfig& cfg, std::uint64_t seed);
  SourceParams forward(const BoundParams& p, FValue latent, FValue f0, int voice) const;

 private:
  DecoderConfig cfg_;
  std::int64_t wh_, bh_, wq_, bq_, wa_, ba_, wn_, bn_;
};

// Ground-truth mixture salience: a Gaussian bump of height 1 and width
// sigma_bins at each voiced frame's rounded F0 bin, summed over voices and
// clamped to [0,1]. F0 outside the grid clamps to the edge with a warning.
Tensor<float> oracle_salience(const std::vector<std::vector<double>>& f0_tracks,
                              const salience::FreqGrid& g, double sigma_bins);

}  // namespace voxsep::nets
