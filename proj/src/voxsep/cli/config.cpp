#include "voxsep/cli/config.h"

#include <filesystem>
#include <fstream>
#include <initializer_list>

#include "voxsep/common.h"
#include "voxsep/train/plan.h"

namespace voxsep::cli {
namespace {

using nlohmann::json;

[[noreturn]] void bad(const std::string& path, const std::string& why) {
  throw ConfigError("config: " + path + ": " + why);
}

std::string join(const std::string& path, const std::string& key) {
  return path.empty() ? key : path + "." + key;
}

void check_object(const json& j, const std::string& path) {
  if (!j.is_object()) bad(path.empty() ? "(root)" : path, "expected an object");
}

void check_keys(const json& j, const std::string& path,
                std::initializer_list<const char*> allowed) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool known = false;
    for (const char* k : allowed) {
      if (it.key() == k) {
        known = true;
        break;
      }
    }
    if (!known) bad(join(path, it.key()), "unknown key");
  }
}

template <typename T>
void get_to(const json& j, const std::string& path, const char* key, T& out) {
  if (!j.contains(key)) return;
  try {
    j.at(key).get_to(out);
  } catch (const json::exception&) {
    bad(join(path, key), "wrong value type");
  }
}

void get_ranges(const json& j, const std::string& path, const char* key,
                std::vector<data::VoiceRange>& out) {
  if (!j.contains(key)) return;
  const json& a = j.at(key);
  if (!a.is_array()) bad(join(path, key), "expected an array of [lo_hz, hi_hz] pairs");
  std::vector<data::VoiceRange> parsed;
  for (const auto& el : a) {
    if (!el.is_array() || el.size() != 2 || !el[0].is_number() || !el[1].is_number()) {
      bad(join(path, key), "expected an array of [lo_hz, hi_hz] pairs");
    }
    parsed.push_back({el[0].get<double>(), el[1].get<double>()});
  }
  out = std::move(parsed);
}

void apply_data(AppConfig& cfg, const json& j, const std::string& path) {
  check_object(j, path);
  check_keys(j, path,
             {"voices",      "seconds",     "sample_rate", "hop",         "salience_rate",
              "salience_hop", "ranges",      "note_lo",     "note_hi",     "glide_lo",
              "glide_hi",     "rest_prob",   "rest_lo",     "rest_hi",     "vibrato_prob",
              "vib_rate_lo",  "vib_rate_hi", "vib_cents",   "rolloff_lo",  "rolloff_hi",
              "gain_lo",      "gain_hi",     "fade",        "harmonics",   "noise_level",
              "clip_peak",    "train_frac",  "valid_frac"});
  data::GenConfig& g = cfg.gen;
  get_to(j, path, "voices", g.voices);
  get_to(j, path, "seconds", g.seconds);
  get_to(j, path, "sample_rate", g.sample_rate);
  get_to(j, path, "hop", g.hop);
  get_to(j, path, "salience_rate", g.salience_rate);
  get_to(j, path, "salience_hop", g.salience_hop);
  get_ranges(j, path, "ranges", g.ranges);
  get_to(j, path, "note_lo", g.note_lo);
  get_to(j, path, "note_hi", g.note_hi);
  get_to(j, path, "glide_lo", g.glide_lo);
  get_to(j, path, "glide_hi", g.glide_hi);
  get_to(j, path, "rest_prob", g.rest_prob);
  get_to(j, path, "rest_lo", g.rest_lo);
  get_to(j, path, "rest_hi", g.rest_hi);
  get_to(j, path, "vibrato_prob", g.vibrato_prob);
  get_to(j, path, "vib_rate_lo", g.vib_rate_lo);
  get_to(j, path, "vib_rate_hi", g.vib_rate_hi);
  get_to(j, path, "vib_cents", g.vib_cents);
  get_to(j, path, "rolloff_lo", g.rolloff_lo);
  get_to(j, path, "rolloff_hi", g.rolloff_hi);
  get_to(j, path, "gain_lo", g.gain_lo);
  get_to(j, path, "gain_hi", g.gain_hi);
  get_to(j, path, "fade", g.fade);
  get_to(j, path, "harmonics", g.harmonics);
  get_to(j, path, "noise_level", g.noise_level);
  get_to(j, path, "clip_peak", g.clip_peak);
  get_to(j, path, "train_frac", cfg.train_frac);
  get_to(j, path, "valid_frac", cfg.valid_frac);
}

void apply_grid(salience::FreqGrid& g, const json& j, const std::string& path) {
  check_object(j, path);
  check_keys(j, path, {"fmin", "bins_per_octave", "n_bins"});
  get_to(j, path, "fmin", g.fmin);
  get_to(j, path, "bins_per_octave", g.bins_per_octave);
  get_to(j, path, "n_bins", g.n_bins);
}

void apply_pipeline(train::PipelineConfig& p, const json& j, const std::string& path) {
  check_object(j, path);
  check_keys(j, path,
             {"voices", "sample_rate", "salience_rate", "salience_hop", "synth_hop", "stft_win",
              "stft_hop", "threshold", "sigma_bins", "nyquist_cutoff", "oracle_salience",
              "hcqt_harmonics", "grid", "rec_scales", "rec_log_eps", "loss_ranges",
              "salience_net", "assign_net", "encoder_net", "decoder_net"});
  get_to(j, path, "voices", p.voices);
  get_to(j, path, "sample_rate", p.sample_rate);
  get_to(j, path, "salience_rate", p.salience_rate);
  get_to(j, path, "salience_hop", p.salience_hop);
  get_to(j, path, "synth_hop", p.synth_hop);
  get_to(j, path, "stft_win", p.stft_win);
  get_to(j, path, "stft_hop", p.stft_hop);
  get_to(j, path, "threshold", p.threshold);
  get_to(j, path, "sigma_bins", p.sigma_bins);
  get_to(j, path, "nyquist_cutoff", p.nyquist_cutoff);
  get_to(j, path, "oracle_salience", p.oracle_salience);
  get_to(j, path, "hcqt_harmonics", p.hcqt_harmonics);
  if (j.contains("grid")) apply_grid(p.grid, j.at("grid"), join(path, "grid"));
  get_to(j, path, "rec_scales", p.rec.scales);
  get_to(j, path, "rec_log_eps", p.rec.log_eps);
  get_ranges(j, path, "loss_ranges", p.loss_ranges);
  if (j.contains("salience_net")) {
    const json& s = j.at("salience_net");
    const std::string sp = join(path, "salience_net");
    check_object(s, sp);
    check_keys(s, sp, {"in_channels", "channels"});
    get_to(s, sp, "in_channels", p.salience_net.in_channels);
    get_to(s, sp, "channels", p.salience_net.channels);
  }
  if (j.contains("assign_net")) {
    const json& s = j.at("assign_net");
    const std::string sp = join(path, "assign_net");
    check_object(s, sp);
    check_keys(s, sp, {"channels"});
    get_to(s, sp, "channels", p.assign_net.channels);
  }
  if (j.contains("encoder_net")) {
    const json& s = j.at("encoder_net");
    const std::string sp = join(path, "encoder_net");
    check_object(s, sp);
    check_keys(s, sp, {"hidden", "latent"});
    get_to(s, sp, "hidden", p.encoder_net.hidden);
    get_to(s, sp, "latent", p.encoder_net.latent);
  }
  if (j.contains("decoder_net")) {
    const json& s = j.at("decoder_net");
    const std::string sp = join(path, "decoder_net");
    check_object(s, sp);
    check_keys(s, sp, {"hidden", "harmonics", "noise_bands"});
    get_to(s, sp, "hidden", p.decoder_net.hidden);
    get_to(s, sp, "harmonics", p.decoder_net.harmonics);
    get_to(s, sp, "noise_bands", p.decoder_net.noise_bands);
  }
  // Coupled sizes are derived, never read: the nets must agree with the
  // pipeline geometry by construction.
  p.assign_net.voices = p.voices;
  p.decoder_net.voices = p.voices;
  p.encoder_net.in_bins = static_cast<int>(p.stft_win / 2 + 1);
  p.decoder_net.latent = p.encoder_net.latent;
}

void apply_train(AppConfig& cfg, const json& j, const std::string& path) {
  check_object(j, path);
  check_keys(j, path, {"strategy", "max_epochs", "patience", "warmup_epochs", "batch_size", "lr",
                       "beta1", "beta2", "eps", "clip_norm", "nan_budget"});
  get_to(j, path, "strategy", cfg.strategy);
  get_to(j, path, "max_epochs", cfg.max_epochs);
  get_to(j, path, "patience", cfg.patience);
  get_to(j, path, "warmup_epochs", cfg.warmup_epochs);
  get_to(j, path, "batch_size", cfg.batch_size);
  get_to(j, path, "lr", cfg.adam.lr);
  get_to(j, path, "beta1", cfg.adam.beta1);
  get_to(j, path, "beta2", cfg.adam.beta2);
  get_to(j, path, "eps", cfg.adam.eps);
  get_to(j, path, "clip_norm", cfg.clip_norm);
  get_to(j, path, "nan_budget", cfg.nan_budget);
}

}  // namespace

void apply_json(AppConfig& cfg, const json& j) {
  AppConfig next = cfg;  // merge transactionally: a rejected document changes nothing
  check_object(j, "");
  check_keys(j, "", {"seed", "data", "pipeline", "train"});
  get_to(j, "", "seed", next.seed);
  if (j.contains("data")) apply_data(next, j.at("data"), "data");
  if (j.contains("pipeline")) apply_pipeline(next.pipeline, j.at("pipeline"), "pipeline");
  if (j.contains("train")) apply_train(next, j.at("train"), "train");

  train::parse_strategy(next.strategy);  // value check, throws ConfigError
  if (next.train_frac < 0.0 || next.valid_frac < 0.0 || next.train_frac + next.valid_frac > 1.0) {
    bad("data.train_frac/valid_frac", "fractions must be nonnegative and sum to at most 1");
  }
  cfg = std::move(next);
}

AppConfig load_config_file(const std::string& path) {
  std::ifstream f(path);
  if (!f.good()) throw ConfigError("config: cannot open " + path);
  json j;
  try {
    f >> j;
  } catch (const json::exception& e) {
    throw ConfigError("config: " + path + ": " + e.what());
  }
  AppConfig cfg;
  apply_json(cfg, j);
  return cfg;
}

json to_json(const AppConfig& cfg) {
  auto ranges_json = [](const std::vector<data::VoiceRange>& rs) {
    json a = json::array();
    for (const auto& r : rs) a.push_back({r.lo_hz, r.hi_hz});
    return a;
  };
  const data::GenConfig& g = cfg.gen;
  const train::PipelineConfig& p = cfg.pipeline;
  return json{
      {"seed", cfg.seed},
      {"data",
       {{"voices", g.voices},
        {"seconds", g.seconds},
        {"sample_rate", g.sample_rate},
        {"hop", g.hop},
        {"salience_rate", g.salience_rate},
        {"salience_hop", g.salience_hop},
        {"ranges", ranges_json(g.ranges)},
        {"note_lo", g.note_lo},
        {"note_hi", g.note_hi},
        {"glide_lo", g.glide_lo},
        {"glide_hi", g.glide_hi},
        {"rest_prob", g.rest_prob},
        {"rest_lo", g.rest_lo},
        {"rest_hi", g.rest_hi},
        {"vibrato_prob", g.vibrato_prob},
        {"vib_rate_lo", g.vib_rate_lo},
        {"vib_rate_hi", g.vib_rate_hi},
        {"vib_cents", g.vib_cents},
        {"rolloff_lo", g.rolloff_lo},
        {"rolloff_hi", g.rolloff_hi},
        {"gain_lo", g.gain_lo},
        {"gain_hi", g.gain_hi},
        {"fade", g.fade},
        {"harmonics", g.harmonics},
        {"noise_level", g.noise_level},
        {"clip_peak", g.clip_peak},
        {"train_frac", cfg.train_frac},
        {"valid_frac", cfg.valid_frac}}},
      {"pipeline",
       {{"voices", p.voices},
        {"sample_rate", p.sample_rate},
        {"salience_rate", p.salience_rate},
        {"salience_hop", p.salience_hop},
        {"synth_hop", p.synth_hop},
        {"stft_win", p.stft_win},
        {"stft_hop", p.stft_hop},
        {"threshold", p.threshold},
        {"sigma_bins", p.sigma_bins},
        {"nyquist_cutoff", p.nyquist_cutoff},
        {"oracle_salience", p.oracle_salience},
        {"hcqt_harmonics", p.hcqt_harmonics},
        {"grid",
         {{"fmin", p.grid.fmin},
          {"bins_per_octave", p.grid.bins_per_octave},
          {"n_bins", p.grid.n_bins}}},
        {"rec_scales", p.rec.scales},
        {"rec_log_eps", p.rec.log_eps},
        {"loss_ranges", ranges_json(p.loss_ranges)},
        {"salience_net",
         {{"in_channels", p.salience_net.in_channels}, {"channels", p.salience_net.channels}}},
        {"assign_net", {{"channels", p.assign_net.channels}}},
        {"encoder_net", {{"hidden", p.encoder_net.hidden}, {"latent", p.encoder_net.latent}}},
        {"decoder_net",
         {{"hidden", p.decoder_net.hidden},
          {"harmonics", p.decoder_net.harmonics},
          {"noise_bands", p.decoder_net.noise_bands}}}}},
      {"train",
       {{"strategy", cfg.strategy},
        {"max_epochs", cfg.max_epochs},
        {"patience", cfg.patience},
        {"warmup_epochs", cfg.warmup_epochs},
        {"batch_size", cfg.batch_size},
        {"lr", cfg.adam.lr},
        {"beta1", cfg.adam.beta1},
        {"beta2", cfg.adam.beta2},
        {"eps", cfg.adam.eps},
        {"clip_norm", cfg.clip_norm},
        {"nan_budget", cfg.nan_budget}}}};
}

void write_resolved_config(const std::string& path, const AppConfig& cfg,
                           const nlohmann::json& run_args) {
  json doc{{"config", to_json(cfg)}, {"run", run_args}};
  std::filesystem::path p(path);
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  std::ofstream f(path, std::ios::trunc);
  VX_CHECK(f.good(), "cannot write resolved config: " + path);
  f << doc.dump(2) << "\n";
}

}  // namespace voxsep::cli
