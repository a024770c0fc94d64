#pragma once

// End-to-end differentiable separation graph: mixture salience (oracle or
// estimated), voice assignment, per-voice F0 extraction with the hard-forward
// soft-backward surrogate, frame-rate transfer to the synthesizer grid,
// mixture encoding, per-source harmonic + filtered-noise synthesis, and the
// four training losses. One Pipeline owns the nets' parameter layout; a
// forward build runs on a caller-provided tape against cached per-excerpt
// inputs so repeated epochs never redo fixed analysis work.

#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "voxsep/core/autodiff.h"
#include "voxsep/core/tensor.h"
#include "voxsep/data/data.h"
#include "voxsep/dsp/cqt.h"
#include "voxsep/losses/losses.h"
#include "voxsep/metrics/metrics.h"
#include "voxsep/nets/nets.h"
#include "voxsep/salience/salience.h"
#include "voxsep/synth/synth.h"

namespace voxsep::train {

using FValue = autodiff::Value<float>;
using FTape = autodiff::Tape<float>;

struct PipelineConfig {
  int voices = 4;
  int sample_rate = 16000;
  int salience_rate = 22050;
  std::int64_t salience_hop = 256;
  std::int64_t synth_hop = 256;   // control-frame hop at sample_rate
  std::int64_t stft_win = 512;    // encoder input, noise grid, separation masks
  std::int64_t stft_hop = 256;
  float threshold = 0.3f;         // voicing / binarization threshold
  double sigma_bins = 1.0;        // oracle salience bump width
  double nyquist_cutoff = 8000.0;
  bool oracle_salience = true;    // ground-truth salience instead of the net
  std::vector<double> hcqt_harmonics = {1.0};

  salience::FreqGrid grid;
  losses::SpectralLossConfig rec;

  // Conventional full SATB ranges for the range-containment loss; wider than
  // the generator's subranges so the penalty constrains without clipping.
  std::vector<data::VoiceRange> loss_ranges = {
      {260.0, 880.0}, {190.0, 660.0}, {145.0, 440.0}, {90.0, 290.0}};

  nets::SalienceNetConfig salience_net;
  nets::AssignmentNetConfig assign_net;
  nets::EncoderConfig encoder_net;
  nets::DecoderConfig decoder_net;

  // Round-trip through the flat numeric map stored in checkpoints.
  std::map<std::string, double> to_config_map() const;
  static PipelineConfig from_config_map(const std::map<std::string, double>& m);
};

// Fixed per-excerpt analysis, computed once and reused every epoch.
struct ExcerptCache {
  std::string id;
  Tensor<float> mixture;   // [n]
  Tensor<float> hcqt;      // [H, Ls, M]; empty in oracle mode
  Tensor<float> oracle_map;  // [Ls, M]; empty in net mode
  Tensor<float> log_mag;   // [Lf, bins] log1p magnitudes, encoder input
  losses::TargetSpectra<float> rec_target;
  std::vector<synth::NoiseFrames<float>> noise;  // per voice
  std::vector<std::int64_t> gather_idx;          // synth frame -> salience frame
};

class Pipeline {
 public:
  // Registers net parameters into `store` in a fixed order; `seed` drives
  // initialization only.
  Pipeline(const PipelineConfig& cfg, nets::ParamStore& store, std::uint64_t seed);

  const PipelineConfig& config() const { return cfg_; }
  nets::ParamStore& store() const { return *store_; }

  ExcerptCache prepare(const data::Excerpt& ex) const;

  struct Forward {
    FValue s_mix;                         // [Ls, M]
    std::vector<FValue> assigned;         // J x [Ls, M]
    std::vector<FValue> f0_sal;           // J x [Ls], hard forward values
    std::vector<Tensor<float>> f0_synth;  // J x [Lf] plain Hz tracks
    std::vector<FValue> stems;            // J x [n]
    FValue mix_estimate;                  // [n]
  };
  Forward forward(FTape& tape, const nets::BoundParams& p, const ExcerptCache& c) const;

  struct LossTerms {
    FValue l_rec, l1, l2, l3;
  };
  LossTerms build_losses(const Forward& fw, const ExcerptCache& c) const;

  // Inference build: parameters bound as constants, no backward state.
  struct Separation {
    std::vector<Tensor<float>> stems;      // J x [n], soft-masked mixture
    std::vector<Tensor<float>> estimates;  // J x [n], raw synthesizer output
    std::vector<std::vector<double>> f0;   // J x Ls in Hz, 0 = unvoiced
    Tensor<float> mix_salience;            // [Ls, M]
    std::vector<Tensor<float>> assigned;   // J x [Ls, M]
    double max_mask_dev = 0.0;             // worst |sum_j mask_j - 1|
  };
  Separation separate(const data::Excerpt& ex) const;
  Separation separate(const ExcerptCache& c) const;

  // Per-voice scores against reference stems and F0 truth, plus the
  // mixture-as-estimate SI-SDR baseline for the same voice.
  struct EvalRow {
    metrics::PairScores scores;
    double baseline_si_sdr_db = 0.0;
  };
  std::vector<EvalRow> evaluate(const data::Excerpt& ex) const;

 private:
  PipelineConfig cfg_;
  nets::ParamStore* store_;
  std::unique_ptr<nets::SalienceNet> salience_;  // null in oracle mode
  std::unique_ptr<nets::AssignmentNet> assign_;
  std::unique_ptr<nets::MixtureEncoder> encoder_;
  std::unique_ptr<nets::SourceDecoder> decoder_;
  std::unique_ptr<dsp::HarmonicCqt> cqt_;  // null in oracle mode
  std::vector<Tensor<float>> loss_masks_;  // J x [M]
};

}  // namespace voxsep::train
