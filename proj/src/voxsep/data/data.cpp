#include "voxsep/data/data.h"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "voxsep/common.h"
#include "voxsep/core/autodiff.h"
#include "voxsep/core/rng.h"
#include "voxsep/dsp/wav.h"
#include "voxsep/synth/synth.h"

namespace voxsep::data {

namespace {

constexpr double kTwoPi = 6.283185307179586477;

struct NoteSeg {
  double t0 = 0.0, t1 = 0.0;
  double pitch = 0.0;       // target pitch, Hz
  double prev_pitch = 0.0;  // glide start (== pitch when the phrase starts here)
  double glide = 0.0;       // seconds of log-domain lerp at the head
  double vib_rate = 0.0;    // Hz, 0 = no vibrato
  double vib_cents = 0.0;
  bool head_fade = false, tail_fade = false;
};

struct VoiceScore {
  std::vector<NoteSeg> notes;  // ordered, non-overlapping
  double gain = 1.0;
  double rolloff = 1.5;
};

VoiceScore make_score(Rng& rng, const GenConfig& cfg, const VoiceRange& range) {
  VoiceScore score;
  score.gain = rng.uniform(cfg.gain_lo, cfg.gain_hi);
  score.rolloff = rng.uniform(cfg.rolloff_lo, cfg.rolloff_hi);

  const double log_ratio = std::log(range.hi_hz / range.lo_hz);
  double t = 0.0;
  double prev_pitch = -1.0;
  while (t < cfg.seconds) {
    if (rng.uniform() < cfg.rest_prob) {
      t += rng.uniform(cfg.rest_lo, cfg.rest_hi);
      prev_pitch = -1.0;  // rest breaks the phrase
      continue;
    }
    NoteSeg n;
    n.pitch = range.lo_hz * std::exp(log_ratio * rng.uniform());
    n.t0 = t;
    n.t1 = std::min(t + rng.uniform(cfg.note_lo, cfg.note_hi), cfg.seconds);
    if (prev_pitch > 0.0) {
      n.prev_pitch = prev_pitch;
      n.glide = std::min(rng.uniform(cfg.glide_lo, cfg.glide_hi), n.t1 - n.t0);
    } else {
      n.prev_pitch = n.pitch;
      n.head_fade = true;
    }
    if (rng.uniform() < cfg.vibrato_prob) {
      n.vib_rate = rng.uniform(cfg.vib_rate_lo, cfg.vib_rate_hi);
      n.vib_cents = cfg.vib_cents;
    }
    score.notes.push_back(n);
    t = n.t1;
    prev_pitch = n.pitch;
  }
  if (!score.notes.empty()) score.notes.back().tail_fade = true;
  // A note followed by a rest fades out; detected by a time gap.
  for (std::size_t i = 0; i + 1 < score.notes.size(); ++i)
    if (score.notes[i + 1].t0 > score.notes[i].t1) score.notes[i].tail_fade = true;
  return score;
}

const NoteSeg* find_note(const VoiceScore& score, double t) {
  for (const auto& n : score.notes)
    if (t >= n.t0 && t < n.t1) return &n;
  return nullptr;
}

double eval_f0(const VoiceScore& score, double t) {
  const NoteSeg* n = find_note(score, t);
  if (!n) return 0.0;
  double p = n->pitch;
  if (n->glide > 0.0 && t < n->t0 + n->glide) {
    const double u = (t - n->t0) / n->glide;
    p = n->prev_pitch * std::pow(n->pitch / n->prev_pitch, u);
  }
  if (n->vib_rate > 0.0)
    p *= std::exp2(n->vib_cents * std::sin(kTwoPi * n->vib_rate * (t - n->t0)) / 1200.0);
  return p;
}

double eval_env(const VoiceScore& score, double t, double fade) {
  const NoteSeg* n = find_note(score, t);
  if (!n) return 0.0;
  double e = 1.0;
  const double half = 0.5 * (n->t1 - n->t0);
  const double f = std::min(fade, half);
  if (n->head_fade && t < n->t0 + f)
    e *= 0.5 * (1.0 - std::cos(3.14159265358979323846 * (t - n->t0) / f));
  if (n->tail_fade && t > n->t1 - f)
    e *= 0.5 * (1.0 - std::cos(3.14159265358979323846 * (n->t1 - t) / f));
  return e;
}

std::string join(const std::string& root, const std::string& rel) {
  return (std::filesystem::path(root) / rel).string();
}

}  // namespace

Excerpt generate_excerpt(std::uint64_t seed, const GenConfig& cfg, const salience::FreqGrid& g) {
  VX_CHECK(cfg.voices >= 1, "generate_excerpt: need at least one voice");
  VX_CHECK(static_cast<int>(cfg.ranges.size()) >= cfg.voices,
           "generate_excerpt: fewer pitch ranges than voices");
  VX_CHECK(cfg.seconds > 0.0 && cfg.sample_rate > 0 && cfg.hop > 0, "generate_excerpt: bad sizes");
  const double vib_factor = std::exp2(cfg.vib_cents / 1200.0);
  for (int j = 0; j < cfg.voices; ++j) {
    const auto& r = cfg.ranges[static_cast<std::size_t>(j)];
    VX_CHECK(r.lo_hz > 0.0 && r.lo_hz <= r.hi_hz, "generate_excerpt: bad pitch range");
    VX_CHECK(r.lo_hz / vib_factor >= g.freq(0) && r.hi_hz * vib_factor <= g.freq(g.n_bins - 1),
             "generate_excerpt: pitch range (with vibrato) leaves the salience grid");
  }

  const std::int64_t n = std::llround(cfg.seconds * cfg.sample_rate);
  const std::int64_t L = n / cfg.hop + 1;
  const std::int64_t n_sal = std::llround(static_cast<double>(n) * cfg.salience_rate / cfg.sample_rate);
  const std::int64_t L_sal = n_sal / cfg.salience_hop + 1;

  Excerpt ex;
  ex.sample_rate = cfg.sample_rate;
  ex.stems.reserve(static_cast<std::size_t>(cfg.voices));
  ex.f0_truth.assign(static_cast<std::size_t>(cfg.voices), std::vector<double>());

  for (int j = 0; j < cfg.voices; ++j) {
    Rng rng = Rng::derive(seed, {0x564f4943ULL, static_cast<std::uint64_t>(j)});
    const VoiceScore score = make_score(rng, cfg, cfg.ranges[static_cast<std::size_t>(j)]);

    Tensor<float> f0({L}), env({L});
    for (std::int64_t l = 0; l < L; ++l) {
      const double t = static_cast<double>(l * cfg.hop) / cfg.sample_rate;
      f0.data()[l] = static_cast<float>(eval_f0(score, t));
      env.data()[l] = static_cast<float>(score.gain * eval_env(score, t, cfg.fade));
    }

    // Fixed per-voice rolloff distribution, silenced above Nyquist.
    const std::int64_t K = cfg.harmonics;
    Tensor<float> amps({L, K});
    double norm = 0.0;
    for (std::int64_t k = 0; k < K; ++k) norm += std::pow(static_cast<double>(k + 1), -score.rolloff);
    const Tensor<float> mask = synth::nyquist_mask(f0, K, 0.5 * cfg.sample_rate);
    for (std::int64_t l = 0; l < L; ++l)
      for (std::int64_t k = 0; k < K; ++k)
        amps.at(l, k) = static_cast<float>(std::pow(static_cast<double>(k + 1), -score.rolloff) / norm) *
                        mask.at(l, k);

    autodiff::Tape<float> tape;
    auto y = synth::oscillator_bank<float>(tape.constant(std::move(amps)),
                                           tape.constant(std::move(env)), f0, cfg.hop,
                                           cfg.sample_rate, n);
    Tensor<float> stem = y.data();

    if (cfg.noise_level > 0.0) {
      // Envelope-gated breath noise so rests stay silent.
      Rng nrng = Rng::derive(seed, {0x4e4f4953ULL, static_cast<std::uint64_t>(j)});
      for (std::int64_t t = 0; t < n; ++t) {
        const double ts = static_cast<double>(t) / cfg.sample_rate;
        const double e = score.gain * eval_env(score, ts, cfg.fade);
        stem.data()[t] += static_cast<float>(cfg.noise_level * e * nrng.uniform(-1.0, 1.0));
      }
    }

    auto& truth = ex.f0_truth[static_cast<std::size_t>(j)];
    truth.resize(static_cast<std::size_t>(L_sal));
    for (std::int64_t m = 0; m < L_sal; ++m)
      truth[static_cast<std::size_t>(m)] =
          eval_f0(score, static_cast<double>(m * cfg.salience_hop) / cfg.salience_rate);

    ex.stems.push_back(std::move(stem));
  }

  // Common rescale keeps relative gains and the exact-sum property.
  auto peak_of = [&](const Tensor<float>& mix) {
    float p = 0.0f;
    for (std::int64_t i = 0; i < mix.numel(); ++i) p = std::max(p, std::abs(mix[i]));
    return p;
  };
  Tensor<float> mix({n});
  for (const auto& s : ex.stems)
    for (std::int64_t i = 0; i < n; ++i) mix.data()[i] += s[i];
  const float peak = peak_of(mix);
  if (peak > cfg.clip_peak) {
    const float scale = static_cast<float>(cfg.clip_peak) / peak;
    for (auto& s : ex.stems)
      for (std::int64_t i = 0; i < n; ++i) s.data()[i] *= scale;
    mix.fill(0.0f);
    for (const auto& s : ex.stems)
      for (std::int64_t i = 0; i < n; ++i) mix.data()[i] += s[i];
  }
  ex.mixture = std::move(mix);
  return ex;
}

void write_f0_csv(const std::string& path, const std::vector<std::vector<double>>& tracks,
                  double frame_period_sec) {
  VX_CHECK(!tracks.empty(), "write_f0_csv: no tracks");
  const std::size_t L = tracks[0].size();
  for (const auto& t : tracks) VX_CHECK(t.size() == L, "write_f0_csv: track lengths differ");
  std::ofstream out(path);
  VX_CHECK(out.good(), "write_f0_csv: cannot open " + path);
  out << "time_sec";
  for (std::size_t j = 0; j < tracks.size(); ++j) out << ",f0_" << (j + 1);
  out << "\n";
  char buf[64];
  for (std::size_t m = 0; m < L; ++m) {
    std::snprintf(buf, sizeof buf, "%.9f", static_cast<double>(m) * frame_period_sec);
    out << buf;
    for (const auto& t : tracks) {
      std::snprintf(buf, sizeof buf, ",%.6f", t[m]);
      out << buf;
    }
    out << "\n";
  }
  VX_CHECK(out.good(), "write_f0_csv: write failed for " + path);
}

std::vector<std::vector<double>> read_f0_csv(const std::string& path) {
  std::ifstream in(path);
  VX_CHECK(in.good(), "read_f0_csv: cannot open " + path);
  std::string line;
  VX_CHECK(static_cast<bool>(std::getline(in, line)), "read_f0_csv: empty file");
  VX_CHECK(line.rfind("time_sec", 0) == 0, "read_f0_csv: bad header in " + path);
  std::size_t cols = 1;
  for (char c : line)
    if (c == ',') ++cols;
  VX_CHECK(cols >= 2, "read_f0_csv: no F0 columns");
  std::vector<std::vector<double>> tracks(cols - 1);

  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    std::size_t c = 0;
    while (std::getline(ss, cell, ',')) {
      if (c >= 1) {
        VX_CHECK(c - 1 < tracks.size(), "read_f0_csv: row wider than header");
        tracks[c - 1].push_back(std::strtod(cell.c_str(), nullptr));
      }
      ++c;
    }
    VX_CHECK(c == cols, "read_f0_csv: row width differs from header");
  }
  return tracks;
}

Manifest generate_corpus(const std::string& out_dir, std::uint64_t seed, const GenConfig& cfg,
                         double total_seconds, double train_frac, double valid_frac,
                         const salience::FreqGrid& g) {
  VX_CHECK(train_frac >= 0.0 && valid_frac >= 0.0 && train_frac + valid_frac <= 1.0,
           "generate_corpus: bad split fractions");
  const std::int64_t count = static_cast<std::int64_t>(total_seconds / cfg.seconds);
  VX_CHECK(count >= 1, "generate_corpus: total duration shorter than one excerpt");
  const std::int64_t n_train = std::llround(train_frac * static_cast<double>(count));
  const std::int64_t n_valid = std::llround(valid_frac * static_cast<double>(count));

  namespace fs = std::filesystem;
  fs::create_directories(fs::path(out_dir) / "wav");
  fs::create_directories(fs::path(out_dir) / "f0");

  Manifest m;
  m.root_dir = out_dir;
  m.seed = seed;
  m.voices = cfg.voices;
  m.sample_rate = cfg.sample_rate;
  m.salience_rate = cfg.salience_rate;
  m.salience_hop = cfg.salience_hop;

  std::ofstream mf(join(out_dir, "manifest.jsonl"));
  VX_CHECK(mf.good(), "generate_corpus: cannot write manifest in " + out_dir);
  nlohmann::json meta = {{"type", "meta"},
                         {"seed", seed},
                         {"voices", cfg.voices},
                         {"sample_rate", cfg.sample_rate},
                         {"salience_rate", cfg.salience_rate},
                         {"salience_hop", cfg.salience_hop},
                         {"excerpt_seconds", cfg.seconds},
                         {"count", count}};
  mf << meta.dump() << "\n";

  const double period = static_cast<double>(cfg.salience_hop) / cfg.salience_rate;
  for (std::int64_t i = 0; i < count; ++i) {
    const std::uint64_t ex_seed =
        Rng::derive(seed, {0x434f5250ULL, static_cast<std::uint64_t>(i)}).next();
    Excerpt ex = generate_excerpt(ex_seed, cfg, g);
    char idbuf[16];
    std::snprintf(idbuf, sizeof idbuf, "ex%03lld", static_cast<long long>(i));
    ex.id = idbuf;

    ManifestEntry e;
    e.id = ex.id;
    e.split = i < n_train ? "train" : (i < n_train + n_valid ? "valid" : "test");
    e.mix_path = "wav/" + ex.id + "_mix.wav";
    e.f0_path = "f0/" + ex.id + ".csv";
    dsp::write_wav_float32(join(out_dir, e.mix_path), ex.mixture.data(), ex.mixture.numel(),
                           cfg.sample_rate);
    for (int j = 0; j < cfg.voices; ++j) {
      const std::string sp = "wav/" + ex.id + "_s" + std::to_string(j) + ".wav";
      dsp::write_wav_float32(join(out_dir, sp), ex.stems[static_cast<std::size_t>(j)].data(),
                             ex.stems[static_cast<std::size_t>(j)].numel(), cfg.sample_rate);
      e.stem_paths.push_back(sp);
    }
    write_f0_csv(join(out_dir, e.f0_path), ex.f0_truth, period);

    nlohmann::json row = {{"type", "excerpt"}, {"id", e.id},      {"split", e.split},
                          {"mix", e.mix_path}, {"f0", e.f0_path}, {"stems", e.stem_paths}};
    mf << row.dump() << "\n";
    m.entries.push_back(std::move(e));
  }
  VX_CHECK(mf.good(), "generate_corpus: manifest write failed");
  return m;
}

Manifest read_manifest(const std::string& path) {
  std::ifstream in(path);
  VX_CHECK(in.good(), "read_manifest: cannot open " + path);
  Manifest m;
  m.root_dir = std::filesystem::path(path).parent_path().string();

  std::string line;
  VX_CHECK(static_cast<bool>(std::getline(in, line)), "read_manifest: empty manifest");
  nlohmann::json meta = nlohmann::json::parse(line);
  VX_CHECK(meta.value("type", "") == "meta", "read_manifest: first line must be the meta record");
  m.seed = meta.value("seed", std::uint64_t(0));
  m.voices = meta.value("voices", 0);
  m.sample_rate = meta.value("sample_rate", 0);
  m.salience_rate = meta.value("salience_rate", 22050);
  m.salience_hop = meta.value("salience_hop", 256);
  VX_CHECK(m.voices > 0 && m.sample_rate > 0, "read_manifest: meta record incomplete");

  while (std::getline(in, line)) {
    if (line.empty()) continue;
    nlohmann::json row = nlohmann::json::parse(line);
    VX_CHECK(row.value("type", "") == "excerpt", "read_manifest: unknown record type");
    ManifestEntry e;
    e.id = row.at("id").get<std::string>();
    e.split = row.at("split").get<std::string>();
    e.mix_path = row.at("mix").get<std::string>();
    e.f0_path = row.value("f0", "");
    if (row.contains("stems"))
      for (const auto& s : row["stems"]) e.stem_paths.push_back(s.get<std::string>());
    m.entries.push_back(std::move(e));
  }
  return m;
}

Excerpt load_excerpt(const Manifest& m, const ManifestEntry& e, bool need_stems) {
  Excerpt ex;
  ex.id = e.id;
  auto mix = dsp::read_wav(join(m.root_dir, e.mix_path));
  VX_CHECK(mix.sample_rate == m.sample_rate,
           "load_excerpt: mixture sample rate differs from the manifest");
  ex.sample_rate = mix.sample_rate;
  ex.mixture = std::move(mix.samples);

  if (need_stems) {
    for (const auto& sp : e.stem_paths) {
      auto stem = dsp::read_wav(join(m.root_dir, sp));
      VX_CHECK(stem.sample_rate == m.sample_rate,
               "load_excerpt: stem sample rate differs from the manifest");
      VX_CHECK(stem.samples.numel() == ex.mixture.numel(),
               "load_excerpt: stem length differs from the mixture");
      ex.stems.push_back(std::move(stem.samples));
    }
  }

  if (!e.f0_path.empty() && std::filesystem::exists(join(m.root_dir, e.f0_path)))
    ex.f0_truth = read_f0_csv(join(m.root_dir, e.f0_path));
  return ex;
}

std::vector<Excerpt> load_split(const Manifest& m, const std::string& split, bool need_stems) {
  std::vector<Excerpt> out;
  for (const auto& e : m.entries)
    if (e.split == split) out.push_back(load_excerpt(m, e, need_stems));
  return out;
}

}  // namespace voxsep::data
