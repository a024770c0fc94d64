#pragma once

// Synthetic four-voice corpus generation and corpus loading. Generated stems
// are rendered through the same oscillator bank the separator uses, with
// per-voice disjoint pitch ranges, note/rest phrasing, glides, and vibrato;
// ground-truth F0 is emitted at the salience frame rate. Corpora live on disk
// as float32 WAVs + F0 CSVs under a line-delimited manifest.

#include <cstdint>
#include <string>
#include <vector>

#include "voxsep/core/tensor.h"
#include "voxsep/salience/salience.h"

namespace voxsep::data {

struct Excerpt {
  std::string id;
  int sample_rate = 16000;
  Tensor<float> mixture;                      // [n]
  std::vector<Tensor<float>> stems;           // J x [n]; empty for mixture-only corpora
  std::vector<std::vector<double>> f0_truth;  // J x L_sal in Hz, 0 = unvoiced; empty if unknown
};

struct VoiceRange {
  double lo_hz = 0.0, hi_hz = 0.0;
};

struct GenConfig {
  int voices = 4;
  double seconds = 4.0;
  int sample_rate = 16000;
  int hop = 256;            // control-frame hop at sample_rate
  int salience_rate = 22050;
  int salience_hop = 256;   // truth-frame hop at salience_rate

  // Disjoint per-voice subranges (soprano, alto, tenor, bass) sitting inside
  // the conventional SATB ranges, so voice assignment is identifiable.
  std::vector<VoiceRange> ranges = {{265.0, 430.0}, {195.0, 255.0}, {150.0, 185.0}, {95.0, 140.0}};

  double note_lo = 0.3, note_hi = 0.8;      // note duration, seconds
  double glide_lo = 0.02, glide_hi = 0.06;  // log-domain pitch glide between joined notes
  double rest_prob = 0.1;
  double rest_lo = 0.1, rest_hi = 0.3;
  double vibrato_prob = 0.5;
  double vib_rate_lo = 5.0, vib_rate_hi = 7.0;
  double vib_cents = 20.0;
  double rolloff_lo = 1.0, rolloff_hi = 2.2;  // harmonic amps ~ k^-r
  double gain_lo = 0.5, gain_hi = 1.0;        // per-stem mixing gain
  double fade = 0.010;                        // phrase edge fade, seconds
  int harmonics = 24;
  double noise_level = 0.0;  // optional breath-noise floor added per stem
  double clip_peak = 0.99;   // common rescale target when the mixture would clip
};

// Deterministic in (seed, cfg). The mixture is the float sum of the stored
// stems, so mixture == sum(stems) holds exactly. Pitch ranges (inflated by
// the vibrato depth) must sit inside the salience bin grid.
Excerpt generate_excerpt(std::uint64_t seed, const GenConfig& cfg, const salience::FreqGrid& g);

// F0 CSV: header "time_sec,f0_1,...,f0_J", one row per salience frame,
// time = m * frame_period_sec, 0 = unvoiced.
void write_f0_csv(const std::string& path, const std::vector<std::vector<double>>& tracks,
                  double frame_period_sec);
std::vector<std::vector<double>> read_f0_csv(const std::string& path);

struct ManifestEntry {
  std::string id;
  std::string split;  // train | valid | test
  std::string mix_path;
  std::string f0_path;                  // may be empty
  std::vector<std::string> stem_paths;  // may be empty
};

struct Manifest {
  std::string root_dir;  // paths in entries are relative to this
  std::uint64_t seed = 0;
  int voices = 0;
  int sample_rate = 0;
  int salience_rate = 0;
  int salience_hop = 0;
  std::vector<ManifestEntry> entries;
};

// Writes out_dir/{manifest.jsonl, wav/*.wav, f0/*.csv}. Excerpt count is
// floor(total_seconds / cfg.seconds); the first train_frac of excerpts (by
// index) become train, the next valid_frac valid, the rest test.
Manifest generate_corpus(const std::string& out_dir, std::uint64_t seed, const GenConfig& cfg,
                         double total_seconds, double train_frac, double valid_frac,
                         const salience::FreqGrid& g);

Manifest read_manifest(const std::string& path);

// Loads WAVs (rejecting a sample-rate mismatch) and the F0 CSV when present;
// a missing or unlisted F0 file yields an empty truth.
Excerpt load_excerpt(const Manifest& m, const ManifestEntry& e, bool need_stems);
std::vector<Excerpt> load_split(const Manifest& m, const std::string& split, bool need_stems);

}  // namespace voxsep::data
