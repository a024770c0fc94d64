#include "voxsep/train/pipeline.h"

#include <cmath>

#include "voxsep/common.h"
#include "voxsep/core/ops.h"
#include "voxsep/dsp/resample.h"
#include "voxsep/dsp/stft.h"

namespace voxsep::train {
namespace {

std::uint64_t fnv1a64(const std::string& s) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

double get_cfg(const std::map<std::string, double>& m, const std::string& key) {
  auto it = m.find(key);
  VX_CHECK(it != m.end(), "pipeline config map: missing key " + key);
  return it->second;
}

}  // namespace

std::map<std::string, double> PipelineConfig::to_config_map() const {
  std::map<std::string, double> m;
  m["voices"] = voices;
  m["sample_rate"] = sample_rate;
  m["salience_rate"] = salience_rate;
  m["salience_hop"] = static_cast<double>(salience_hop);
  m["synth_hop"] = static_cast<double>(synth_hop);
  m["stft_win"] = static_cast<double>(stft_win);
  m["stft_hop"] = static_cast<double>(stft_hop);
  m["threshold"] = static_cast<double>(threshold);
  m["sigma_bins"] = sigma_bins;
  m["nyquist_cutoff"] = nyquist_cutoff;
  m["oracle_salience"] = oracle_salience ? 1.0 : 0.0;
  m["hcqt_count"] = static_cast<double>(hcqt_harmonics.size());
  for (std::size_t i = 0; i < hcqt_harmonics.size(); ++i)
    m["hcqt_h" + std::to_string(i)] = hcqt_harmonics[i];
  m["grid_fmin"] = grid.fmin;
  m["grid_bins_per_octave"] = grid.bins_per_octave;
  m["grid_n_bins"] = grid.n_bins;
  m["rec_count"] = static_cast<double>(rec.scales.size());
  for (std::size_t i = 0; i < rec.scales.size(); ++i)
    m["rec_scale" + std::to_string(i)] = static_cast<double>(rec.scales[i]);
  m["rec_log_eps"] = rec.log_eps;
  m["range_count"] = static_cast<double>(loss_ranges.size());
  for (std::size_t i = 0; i < loss_ranges.size(); ++i) {
    m["range" + std::to_string(i) + "_lo"] = loss_ranges[i].lo_hz;
    m["range" + std::to_string(i) + "_hi"] = loss_ranges[i].hi_hz;
  }
  m["salience_in_channels"] = salience_net.in_channels;
  m["salience_channels"] = salience_net.channels;
  m["assign_channels"] = assign_net.channels;
  m["encoder_hidden"] = encoder_net.hidden;
  m["encoder_latent"] = encoder_net.latent;
  m["decoder_hidden"] = decoder_net.hidden;
  m["decoder_harmonics"] = decoder_net.harmonics;
  m["decoder_noise_bands"] = decoder_net.noise_bands;
  return m;
}

PipelineConfig PipelineConfig::from_config_map(const std::map<std::string, double>& m) {
  PipelineConfig c;
  c.voices = static_cast<int>(get_cfg(m, "voices"));
  c.sample_rate = static_cast<int>(get_cfg(m, "sample_rate"));
  c.salience_rate = static_cast<int>(get_cfg(m, "salience_rate"));
  c.salience_hop = static_cast<std::int64_t>(get_cfg(m, "salience_hop"));
  c.synth_hop = static_cast<std::int64_t>(get_cfg(m, "synth_hop"));
  c.stft_win = static_cast<std::int64_t>(get_cfg(m, "stft_win"));
  c.stft_hop = static_cast<std::int64_t>(get_cfg(m, "stft_hop"));
  c.threshold = static_cast<float>(get_cfg(m, "threshold"));
  c.sigma_bins = get_cfg(m, "sigma_bins");
  c.nyquist_cutoff = get_cfg(m, "nyquist_cutoff");
  c.oracle_salience = get_cfg(m, "oracle_salience") != 0.0;
  c.hcqt_harmonics.clear();
  auto hcqt_count = static_cast<std::size_t>(get_cfg(m, "hcqt_count"));
  for (std::size_t i = 0; i < hcqt_count; ++i)
    c.hcqt_harmonics.push_back(get_cfg(m, "hcqt_h" + std::to_string(i)));
  c.grid.fmin = get_cfg(m, "grid_fmin");
  c.grid.bins_per_octave = static_cast<int>(get_cfg(m, "grid_bins_per_octave"));
  c.grid.n_bins = static_cast<int>(get_cfg(m, "grid_n_bins"));
  c.rec.scales.clear();
  auto rec_count = static_cast<std::size_t>(get_cfg(m, "rec_count"));
  for (std::size_t i = 0; i < rec_count; ++i)
    c.rec.scales.push_back(static_cast<std::int64_t>(get_cfg(m, "rec_scale" + std::to_string(i))));
  c.rec.log_eps = get_cfg(m, "rec_log_eps");
  c.loss_ranges.clear();
  auto range_count = static_cast<std::size_t>(get_cfg(m, "range_count"));
  for (std::size_t i = 0; i < range_count; ++i) {
    c.loss_ranges.push_back({get_cfg(m, "range" + std::to_string(i) + "_lo"),
                             get_cfg(m, "range" + std::to_string(i) + "_hi")});
  }
  c.salience_net.in_channels = static_cast<int>(get_cfg(m, "salience_in_channels"));
  c.salience_net.channels = static_cast<int>(get_cfg(m, "salience_channels"));
  c.assign_net.channels = static_cast<int>(get_cfg(m, "assign_channels"));
  c.assign_net.voices = c.voices;
  c.encoder_net.in_bins = static_cast<int>(c.stft_win / 2 + 1);
  c.encoder_net.hidden = static_cast<int>(get_cfg(m, "encoder_hidden"));
  c.encoder_net.latent = static_cast<int>(get_cfg(m, "encoder_latent"));
  c.decoder_net.latent = c.encoder_net.latent;
  c.decoder_net.voices = c.voices;
  c.decoder_net.hidden = static_cast<int>(get_cfg(m, "decoder_hidden"));
  c.decoder_net.harmonics = static_cast<int>(get_cfg(m, "decoder_harmonics"));
  c.decoder_net.noise_bands = static_cast<int>(get_cfg(m, "decoder_noise_bands"));
  return c;
}

Pipeline::Pipeline(const PipelineConfig& cfg, nets::ParamStore& store, std::uint64_t seed)
    : cfg_(cfg), store_(&store) {
  VX_CHECK(cfg_.voices >= 1, "pipeline: need at least one voice");
  VX_CHECK(cfg_.synth_hop == cfg_.stft_hop,
           "pipeline: synthesizer and analysis frame hops must agree");
  VX_CHECK(cfg_.loss_ranges.size() == static_cast<std::size_t>(cfg_.voices),
           "pipeline: one loss range per voice required");
  VX_CHECK(cfg_.assign_net.voices == cfg_.voices && cfg_.decoder_net.voices == cfg_.voices,
           "pipeline: net voice counts must match");
  VX_CHECK(cfg_.encoder_net.in_bins == cfg_.stft_win / 2 + 1,
           "pipeline: encoder input bins must match the analysis window");
  VX_CHECK(cfg_.encoder_net.latent == cfg_.decoder_net.latent,
           "pipeline: encoder/decoder latent width mismatch");

  if (!cfg_.oracle_salience) {
    VX_CHECK(cfg_.salience_net.in_channels ==
                 static_cast<int>(cfg_.hcqt_harmonics.size()),
             "pipeline: salience net channels must match HCQT harmonics");
    dsp::CqtConfig cq;
    cq.sample_rate = cfg_.salience_rate;
    cq.hop = cfg_.salience_hop;
    cq.fmin = cfg_.grid.fmin;
    cq.bins_per_octave = cfg_.grid.bins_per_octave;
    cq.n_bins = cfg_.grid.n_bins;
    cq.harmonics = cfg_.hcqt_harmonics;
    cqt_ = std::make_unique<dsp::HarmonicCqt>(cq);
    salience_ = std::make_unique<nets::SalienceNet>(store, cfg_.salience_net, seed);
  }
  assign_ = std::make_unique<nets::AssignmentNet>(store, cfg_.assign_net, seed);
  encoder_ = std::make_unique<nets::MixtureEncoder>(store, cfg_.encoder_net, seed);
  decoder_ = std::make_unique<nets::SourceDecoder>(store, cfg_.decoder_net, seed);

  for (const auto& r : cfg_.loss_ranges) {
    loss_masks_.push_back(salience::range_mask<float>(cfg_.grid, r.lo_hz, r.hi_hz));
  }
}

ExcerptCache Pipeline::prepare(const data::Excerpt& ex) const {
  VX_CHECK(ex.sample_rate == cfg_.sample_rate,
           "pipeline: excerpt sample rate mismatch for " + ex.id);
  const std::int64_t n = ex.mixture.numel();
  VX_CHECK(n > 0, "pipeline: empty mixture in " + ex.id);

  ExcerptCache c;
  c.id = ex.id;
  c.mixture = ex.mixture;
  c.rec_target = losses::prepare_target<float>(ex.mixture.data(), n, cfg_.rec);

  Tensor<float> mag =
      dsp::stft_mag_tensor<float>(ex.mixture.data(), n, cfg_.stft_win, cfg_.stft_hop);
  c.log_mag = Tensor<float>(mag.shape());
  for (std::int64_t i = 0; i < mag.numel(); ++i) c.log_mag.data()[i] = std::log1p(mag.data()[i]);
  const std::int64_t lf = mag.dim(0);

  std::int64_t ls = 0;
  if (cfg_.oracle_salience) {
    VX_CHECK(ex.f0_truth.size() == static_cast<std::size_t>(cfg_.voices),
             "pipeline: oracle salience needs one F0 track per voice in " + ex.id);
    c.oracle_map = nets::oracle_salience(ex.f0_truth, cfg_.grid, cfg_.sigma_bins);
    ls = c.oracle_map.dim(0);
  } else {
    std::vector<float> res =
        dsp::resample(ex.mixture.data(), n, cfg_.sample_rate, cfg_.salience_rate);
    c.hcqt = cqt_->compute(res.data(), static_cast<std::int64_t>(res.size()));
    ls = c.hcqt.dim(1);
  }

  // Synth frame l sits at l*synth_hop/sample_rate seconds; pick the nearest
  // salience frame on its own clock.
  const double ratio = static_cast<double>(cfg_.synth_hop) * cfg_.salience_rate /
                       (static_cast<double>(cfg_.sample_rate) * cfg_.salience_hop);
  c.gather_idx.resize(static_cast<std::size_t>(lf));
  for (std::int64_t l = 0; l < lf; ++l) {
    std::int64_t idx = std::llround(static_cast<double>(l) * ratio);
    c.gather_idx[static_cast<std::size_t>(l)] = std::min(std::max<std::int64_t>(idx, 0), ls - 1);
  }

  const std::uint64_t noise_seed = fnv1a64(ex.id);
  for (int j = 0; j < cfg_.voices; ++j) {
    c.noise.push_back(synth::make_noise_frames<float>(noise_seed, static_cast<std::uint64_t>(j), n,
                                                      cfg_.stft_win, cfg_.stft_hop));
  }
  return c;
}

Pipeline::Forward Pipeline::forward(FTape& tape, const nets::BoundParams& p,
                                    const ExcerptCache& c) const {
  Forward fw;
  if (cfg_.oracle_salience) {
    fw.s_mix = tape.constant(c.oracle_map);
  } else {
    fw.s_mix = salience_->forward(p, tape.constant(c.hcqt));
  }
  fw.assigned = assign_->forward(p, fw.s_mix);

  FValue latent = encoder_->forward(p, tape.constant(c.log_mag));
  const std::int64_t n = c.mixture.numel();
  for (int j = 0; j < cfg_.voices; ++j) {
    auto ext = salience::extract_f0(fw.assigned[static_cast<std::size_t>(j)], cfg_.grid,
                                    cfg_.threshold);
    fw.f0_sal.push_back(ext.f0);
    FValue f0 = ops::gather_rows(ext.f0, c.gather_idx);  // [Lf]
    Tensor<float> f0_data = f0.data();
    fw.f0_synth.push_back(f0_data);

    nets::SourceParams sp = decoder_->forward(p, latent, f0, j);
    FValue harm = ops::normalize_rows(sp.harm);
    FValue masked = ops::mul_const(
        harm, synth::nyquist_mask(f0_data, cfg_.decoder_net.harmonics, cfg_.nyquist_cutoff));
    FValue env = ops::mul_const(sp.amp, synth::voiced_mask(f0_data));
    FValue voiced_part =
        synth::oscillator_bank(masked, env, f0_data, cfg_.synth_hop, cfg_.sample_rate, n);
    FValue noise_part = synth::noise_filter(sp.noise, c.noise[static_cast<std::size_t>(j)]);
    fw.stems.push_back(ops::add(voiced_part, noise_part));
  }
  fw.mix_estimate = ops::add_n(fw.stems);
  return fw;
}

Pipeline::LossTerms Pipeline::build_losses(const Forward& fw, const ExcerptCache& c) const {
  LossTerms t;
  t.l_rec = losses::spectral_reconstruction(fw.mix_estimate, c.rec_target, cfg_.rec);
  t.l1 = losses::mix_consistency(fw.assigned, fw.s_mix);
  t.l2 = losses::range_penalty(fw.assigned, loss_masks_);
  t.l3 = losses::binary_pull(fw.assigned, cfg_.threshold);
  return t;
}

Pipeline::Separation Pipeline::separate(const data::Excerpt& ex) const {
  return separate(prepare(ex));
}

Pipeline::Separation Pipeline::separate(const ExcerptCache& c) const {
  FTape tape;
  nets::BoundParams p = nets::bind_constants(*store_, tape);
  Forward fw = forward(tape, p, c);

  Separation s;
  for (int j = 0; j < cfg_.voices; ++j) {
    s.estimates.push_back(fw.stems[static_cast<std::size_t>(j)].data());
    s.assigned.push_back(fw.assigned[static_cast<std::size_t>(j)].data());
    const Tensor<float>& f0 = fw.f0_sal[static_cast<std::size_t>(j)].data();
    std::vector<double> track(static_cast<std::size_t>(f0.numel()));
    for (std::int64_t i = 0; i < f0.numel(); ++i)
      track[static_cast<std::size_t>(i)] = static_cast<double>(f0.data()[i]);
    s.f0.push_back(std::move(track));
  }
  s.mix_salience = fw.s_mix.data();
  synth::SoftMaskResult masked =
      synth::soft_mask_separate(s.estimates, c.mixture, cfg_.stft_win, cfg_.stft_hop);
  s.stems = std::move(masked.stems);
  s.max_mask_dev = masked.max_mask_dev;
  return s;
}

std::vector<Pipeline::EvalRow> Pipeline::evaluate(const data::Excerpt& ex) const {
  VX_CHECK(ex.stems.size() == static_cast<std::size_t>(cfg_.voices),
           "evaluate: reference stems required for " + ex.id);
  VX_CHECK(ex.f0_truth.size() == static_cast<std::size_t>(cfg_.voices),
           "evaluate: F0 truth required for " + ex.id);
  Separation sep = separate(ex);
  std::vector<EvalRow> rows;
  for (int j = 0; j < cfg_.voices; ++j) {
    const auto& ref = ex.stems[static_cast<std::size_t>(j)];
    EvalRow row;
    row.scores.excerpt_id = ex.id;
    row.scores.voice = j;
    row.scores.si_sdr_db = metrics::si_sdr(ref, sep.stems[static_cast<std::size_t>(j)]);
    const auto& truth = ex.f0_truth[static_cast<std::size_t>(j)];
    const auto& est = sep.f0[static_cast<std::size_t>(j)];
    VX_CHECK(truth.size() == est.size(), "evaluate: F0 frame count mismatch for " + ex.id);
    row.scores.pitch = metrics::pitch_accuracy(truth, est);
    row.baseline_si_sdr_db = metrics::si_sdr(ref, ex.mixture);
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace voxsep::train
