#include "voxsep/nets/nets.h"

#include <cmath>
#include <cstdio>

#include "voxsep/common.h"
#include "voxsep/core/ops.h"
#include "voxsep/core/rng.h"

namespace voxsep::nets {

namespace {

// Seed substream tags, one per module.
constexpr std::uint64_t kSalience = 0x53414cULL;
constexpr std::uint64_t kAssign = 0x415347ULL;
constexpr std::uint64_t kEncoder = 0x454e43ULL;
constexpr std::uint64_t kDecoder = 0x444543ULL;

Tensor<float> fanin_uniform(const std::vector<std::int64_t>& shape, std::int64_t fan_in, Rng& rng) {
  const float bound = std::sqrt(1.0f / static_cast<float>(fan_in));
  Tensor<float> t(shape);
  rng.fill_uniform(t.data(), static_cast<std::size_t>(t.numel()), -bound, bound);
  return t;
}

// Registers one conv2d layer (weight then bias, both fan-in uniform). A
// nonzero bias_shift offsets the bias init, e.g. to start a sigmoid head in
// its sparse regime instead of at 0.5.
void add_conv(ParamStore& store, const std::string& base, std::int64_t cout, std::int64_t cin,
              std::int64_t kh, std::int64_t kw, std::uint64_t seed, std::uint64_t module,
              std::uint64_t layer, std::int64_t* w, std::int64_t* b, float bias_shift = 0.0f) {
  Rng rng = Rng::derive(seed, {module, layer});
  const std::int64_t fan_in = cin * kh * kw;
  *w = store.add(base + "/w", fanin_uniform({cout, cin, kh, kw}, fan_in, rng));
  Tensor<float> bias = fanin_uniform({cout}, fan_in, rng);
  for (std::int64_t i = 0; i < bias.numel(); ++i) bias.data()[i] += bias_shift;
  *b = store.add(base + "/b", std::move(bias));
}

void add_linear(ParamStore& store, const std::string& base, std::int64_t out, std::int64_t in,
                std::uint64_t seed, std::uint64_t module, std::uint64_t layer, std::int64_t* w,
                std::int64_t* b) {
  Rng rng = Rng::derive(seed, {module, layer});
  *w = store.add(base + "/w", fanin_uniform({out, in}, in, rng));
  *b = store.add(base + "/b", fanin_uniform({out}, in, rng));
}

constexpr float kSlope = 0.1f;

}  // namespace

std::int64_t ParamStore::add(std::string name, Tensor<float> init, bool trainable) {
  VX_CHECK(index_of(name) < 0, "ParamStore: duplicate parameter name");
  entries_.push_back({std::move(name), std::move(init), trainable});
  return static_cast<std::int64_t>(entries_.size()) - 1;
}

std::int64_t ParamStore::index_of(const std::string& name) const {
  for (std::size_t i = 0; i < entries_.size(); ++i)
    if (entries_[i].name == name) return static_cast<std::int64_t>(i);
  return -1;
}

void ParamStore::set_trainable_prefix(const std::string& prefix, bool trainable) {
  for (auto& e : entries_)
    if (e.name.rfind(prefix, 0) == 0) e.trainable = trainable;
}

std::int64_t ParamStore::count_trainable() const {
  std::int64_t n = 0;
  for (const auto& e : entries_)
    if (e.trainable) ++n;
  return n;
}

BoundParams bind_params(const ParamStore& store, FTape& tape) {
  BoundParams b;
  b.leaves.reserve(store.size());
  for (const auto& e : store.entries()) b.leaves.push_back(tape.leaf(e.value, e.trainable));
  return b;
}

BoundParams bind_constants(const ParamStore& store, FTape& tape) {
  BoundParams b;
  b.leaves.reserve(store.size());
  for (const auto& e : store.entries()) b.leaves.push_back(tape.constant(e.value));
  return b;
}

SalienceNet::SalienceNet(ParamStore& store, const SalienceNetConfig& cfg, std::uint64_t seed)
    : cfg_(cfg) {
  VX_CHECK(cfg.in_channels > 0 && cfg.channels > 0, "SalienceNet: bad config sizes");
  add_conv(store, "salience/conv1", cfg.channels, cfg.in_channels, 5, 5, seed, kSalience, 1, &w1_, &b1_);
  add_conv(store, "salience/conv2", cfg.channels, cfg.channels, 5, 5, seed, kSalience, 2, &w2_, &b2_);
  add_conv(store, "salience/conv3", 1, cfg.channels, 5, 5, seed, kSalience, 3, &w3_, &b3_);
}

FValue SalienceNet::forward(const BoundParams& p, FValue hcqt) const {
  VX_CHECK(hcqt.shape().size() == 3 && hcqt.shape()[0] == cfg_.in_channels,
           "SalienceNet: input must be [harmonics, frames, bins]");
  const std::int64_t L = hcqt.shape()[1], M = hcqt.shape()[2];
  auto h1 = ops::leaky_relu(ops::conv2d(hcqt, p[w1_], p[b1_]), kSlope);
  auto h2 = ops::leaky_relu(ops::conv2d(h1, p[w2_], p[b2_]), kSlope);
  auto y = ops::sigmoid(ops::conv2d(h2, p[w3_], p[b3_]));
  return ops::reshape(y, {L, M});
}

AssignmentNet::AssignmentNet(ParamStore& store, const AssignmentNetConfig& cfg, std::uint64_t seed)
    : cfg_(cfg) {
  VX_CHECK(cfg.voices > 0 && cfg.channels > 0, "AssignmentNet: bad config sizes");
  add_conv(store, "assign/conv1", cfg.channels, 2, 5, 5, seed, kAssign, 1, &w1_, &b1_);
  add_conv(store, "assign/conv2", cfg.channels, cfg.channels, 5, 5, seed, kAssign, 2, &w2_, &b2_);
  // Heads start near-sparse (sigmoid(-2) ~= 0.12): assignment targets are
  // mostly-zero maps, and a 0.5 init makes the early gradient push every bin
  // down uniformly, saturating the heads at zero before they can specialize.
  add_conv(store, "assign/heads", cfg.voices, cfg.channels, 1, 1, seed, kAssign, 3, &wh_, &bh_,
           -2.0f);
}

std::vector<FValue> AssignmentNet::forward(const BoundParams& p, FValue s_mix) const {
  VX_CHECK(s_mix.shape().size() == 2, "AssignmentNet: input must be [frames, bins]");
  const std::int64_t L = s_mix.shape()[0], M = s_mix.shape()[1];
  VX_CHECK(M >= 2, "AssignmentNet: need at least two bins");

  Tensor<float> pos({1, L * M});
  for (std::int64_t l = 0; l < L; ++l)
    for (std::int64_t m = 0; m < M; ++m)
      pos.data()[l * M + m] = static_cast<float>(m) / static_cast<float>(M - 1);
  auto* tape = s_mix.tape();
  auto x = ops::reshape(
      ops::concat_cols<float>({ops::reshape(s_mix, {1, L * M}), tape->constant(pos)}), {2, L, M});

  auto h1 = ops::leaky_relu(ops::conv2d(x, p[w1_], p[b1_]), kSlope);
  auto h2 = ops::leaky_relu(ops::conv2d(h1, p[w2_], p[b2_]), kSlope);
  auto y = ops::sigmoid(ops::conv2d(h2, p[wh_], p[bh_]));  // [J, L, M]

  std::vector<FValue> maps;
  maps.reserve(static_cast<std::size_t>(cfg_.voices));
  for (int j = 0; j < cfg_.voices; ++j)
    maps.push_back(ops::reshape(ops::slice_rows(y, j, j + 1), {L, M}));
  return maps;
}

MixtureEncoder::MixtureEncoder(ParamStore& store, const EncoderConfig& cfg, std::uint64_t seed)
    : cfg_(cfg) {
  VX_CHECK(cfg.in_bins > 0 && cfg.hidden > 0 && cfg.latent > 0, "MixtureEncoder: bad config sizes");
  add_linear(store, "encoder/l1", cfg.hidden, cfg.in_bins, seed, kEncoder, 1, &w1_, &b1_);
  add_linear(store, "encoder/l2", cfg.latent, cfg.hidden, seed, kEncoder, 2, &w2_, &b2_);
}

FValue MixtureEncoder::forward(const BoundParams& p, FValue log_mag) const {
  VX_CHECK(log_mag.shape().size() == 2 && log_mag.shape()[1] == cfg_.in_bins,
           "MixtureEncoder: input must be [frames, in_bins]");
  auto h = ops::leaky_relu(ops::linear(log_mag, p[w1_], p[b1_]), kSlope);
  return ops::linear(h, p[w2_], p[b2_]);
}

SourceDecoder::SourceDecoder(ParamStore& store, const DecoderConfig& cfg, std::uint64_t seed)
    : cfg_(cfg) {
  VX_CHECK(cfg.latent > 0 && cfg.voices > 0 && cfg.hidden > 0 && cfg.harmonics > 0 &&
               cfg.noise_bands > 0,
           "SourceDecoder: bad config sizes");
  const std::int64_t in = cfg.latent + 1 + cfg.voices;
  add_linear(store, "decoder/hidden", cfg.hidden, in, seed, kDecoder, 1, &wh_, &bh_);
  add_linear(store, "decoder/harm", cfg.harmonics, cfg.hidden, seed, kDecoder, 2, &wq_, &bq_);
  add_linear(store, "decoder/amp", 1, cfg.hidden, seed, kDecoder, 3, &wa_, &ba_);
  add_linear(store, "decoder/noise", cfg.noise_bands, cfg.hidden, seed, kDecoder, 4, &wn_, &bn_);
}

SourceParams SourceDecoder::forward(const BoundParams& p, FValue latent, FValue f0,
                                    int voice) const {
  VX_CHECK(latent.shape().size() == 2 && latent.shape()[1] == cfg_.latent,
           "SourceDecoder: latent must be [frames, latent]");
  VX_CHECK(f0.shape().size() == 1 && f0.shape()[0] == latent.shape()[0],
           "SourceDecoder: f0 must be one value per latent frame");
  VX_CHECK(voice >= 0 && voice < cfg_.voices, "SourceDecoder: voice index out of range");
  const std::int64_t L = latent.shape()[0];

  // kHz-scale F0 conditioning keeps the input in the same range as the latent.
  auto f0_col = ops::reshape(ops::scale(f0, 1e-3f), {L, 1});
  Tensor<float> onehot({L, static_cast<std::int64_t>(cfg_.voices)});
  for (std::int64_t l = 0; l < L; ++l) onehot.at(l, voice) = 1.0f;
  auto x = ops::concat_cols<float>({latent, f0_col, latent.tape()->constant(onehot)});

  auto h = ops::leaky_relu(ops::linear(x, p[wh_], p[bh_]), kSlope);
  SourceParams out;
  out.harm = ops::exp_sigmoid(ops::linear(h, p[wq_], p[bq_]));
  out.amp = ops::reshape(ops::exp_sigmoid(ops::linear(h, p[wa_], p[ba_])), {L});
  out.noise = ops::exp_sigmoid(ops::linear(h, p[wn_], p[bn_]));
  return out;
}

Tensor<float> oracle_salience(const std::vector<std::vector<double>>& f0_tracks,
                              const salience::FreqGrid& g, double sigma_bins) {
  VX_CHECK(sigma_bins > 0.0, "oracle_salience: sigma must be positive");
  VX_CHECK(!f0_tracks.empty(), "oracle_salience: no F0 tracks");
  const std::int64_t L = static_cast<std::int64_t>(f0_tracks[0].size());
  for (const auto& t : f0_tracks)
    VX_CHECK(static_cast<std::int64_t>(t.size()) == L, "oracle_salience: track lengths differ");
  const std::int64_t M = g.n_bins;

  Tensor<float> map({L, M});
  const double inv2s2 = 1.0 / (2.0 * sigma_bins * sigma_bins);
  std::int64_t clamped = 0;
  for (const auto& track : f0_tracks) {
    for (std::int64_t l = 0; l < L; ++l) {
      const double f = track[static_cast<std::size_t>(l)];
      if (f <= 0.0) continue;
      if (f < g.freq(0) || f > g.freq(g.n_bins - 1)) ++clamped;
      const std::int64_t c = g.nearest_bin(f);
      float* row = map.data() + l * M;
      for (std::int64_t m = 0; m < M; ++m) {
        const double d = static_cast<double>(m - c);
        row[m] += static_cast<float>(std::exp(-d * d * inv2s2));
      }
    }
  }
  if (clamped > 0)
    std::fprintf(stderr, "warning: oracle_salience clamped %lld F0 values outside the bin grid\n",
                 static_cast<long long>(clamped));
  for (std::int64_t i = 0; i < map.numel(); ++i)
    if (map[i] > 1.0f) map.data()[i] = 1.0f;
  return map;
}

}  // namespace voxsep::nets
