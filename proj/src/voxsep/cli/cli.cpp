#include "voxsep/cli/cli.h"

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "voxsep/cli/config.h"
#include "voxsep/common.h"
#include "voxsep/core/gradcheck.h"
#include "voxsep/data/data.h"
#include "voxsep/dsp/wav.h"
#include "voxsep/losses/losses.h"
#include "voxsep/metrics/metrics.h"
#include "voxsep/salience/salience.h"
#include "voxsep/synth/synth.h"
#include "voxsep/train/checkpoint.h"
#include "voxsep/train/pipeline.h"
#include "voxsep/train/plan.h"
#include "voxsep/train/trainer.h"

namespace voxsep::cli {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

AppConfig base_config(const std::string& config_path) {
  return config_path.empty() ? AppConfig{} : load_config_file(config_path);
}

// Restores a checkpoint into a pipeline rebuilt from its own cfg/* entries.
struct LoadedModel {
  train::PipelineConfig pcfg;
  nets::ParamStore store;
  std::unique_ptr<train::Pipeline> pipe;
  train::TrainMeta meta;
};

LoadedModel load_model(const std::string& ckpt_path) {
  LoadedModel m;
  const train::CheckpointData ckpt = train::read_checkpoint_file(ckpt_path);
  m.pcfg = train::PipelineConfig::from_config_map(train::read_config_map(ckpt));
  m.pipe = std::make_unique<train::Pipeline>(m.pcfg, m.store, /*seed=*/1);
  train::Adam adam{train::AdamConfig{}};
  train::restore_checkpoint(ckpt, m.store, adam, &m.meta);
  return m;
}

// Every command with an output directory echoes its resolved configuration.
void echo_config(const std::string& dir, const AppConfig& cfg, const json& run_args) {
  write_resolved_config(dir + "/resolved_config.json", cfg, run_args);
}

int cmd_gen_data(const AppConfig& cfg, const std::string& out, double seconds) {
  const data::Manifest m = data::generate_corpus(out, cfg.seed, cfg.gen, seconds, cfg.train_frac,
                                                 cfg.valid_frac, cfg.pipeline.grid);
  echo_config(out, cfg, {{"command", "gen-data"}, {"out", out}, {"seconds", seconds}});
  int splits[3] = {0, 0, 0};
  for (const auto& e : m.entries) {
    if (e.split == "train") ++splits[0];
    else if (e.split == "valid") ++splits[1];
    else ++splits[2];
  }
  std::printf("gen-data: %zu excerpts (%d train / %d valid / %d test), %d voices, %g s each -> %s\n",
              m.entries.size(), splits[0], splits[1], splits[2], m.voices, cfg.gen.seconds,
              out.c_str());
  return 0;
}

int cmd_train(const AppConfig& cfg, const std::string& data_dir, const std::string& out) {
  const data::Manifest m = data::read_manifest(data_dir + "/manifest.jsonl");
  if (m.voices != cfg.pipeline.voices) {
    throw ConfigError("corpus has " + std::to_string(m.voices) + " voices but pipeline.voices is " +
                      std::to_string(cfg.pipeline.voices));
  }
  const auto train_set = data::load_split(m, "train", false);
  const auto valid_set = data::load_split(m, "valid", false);

  nets::ParamStore store;
  train::Pipeline pipe(cfg.pipeline, store, cfg.seed);
  const train::TrainPlan plan = train::make_plan(train::parse_strategy(cfg.strategy),
                                                 cfg.max_epochs, cfg.patience, cfg.warmup_epochs);
  train::TrainConfig tc;
  tc.adam = cfg.adam;
  tc.batch_size = cfg.batch_size;
  tc.clip_norm = cfg.clip_norm;
  tc.nan_budget = cfg.nan_budget;
  tc.seed = cfg.seed;
  tc.out_dir = out;

  echo_config(out, cfg, {{"command", "train"}, {"data", data_dir}, {"out", out}});
  std::printf("train: strategy %s, %zu train / %zu valid excerpts, batch %lld\n",
              cfg.strategy.c_str(), train_set.size(), valid_set.size(),
              static_cast<long long>(cfg.batch_size));

  train::Trainer trainer(pipe, tc, plan);
  const train::TrainResult res = trainer.run(train_set, valid_set);

  std::printf("train: done;");
  for (std::size_t i = 0; i < res.phase_epochs.size(); ++i) {
    std::printf(" phase %zu ran %lld epochs%s", i + 1,
                static_cast<long long>(res.phase_epochs[i]),
                i + 1 < res.phase_epochs.size() ? "," : "");
  }
  std::printf("\ntrain: best validation loss %.6g at epoch %lld%s -> %s/{best,last}.ckpt\n",
              res.best_val, static_cast<long long>(res.best_epoch),
              res.stopped_early ? " (stopped early)" : "", out.c_str());
  return 0;
}

int cmd_separate(const std::string& ckpt_path, const std::string& in_path, const std::string& out,
                 const std::string& f0_path, bool dump_salience) {
  LoadedModel m = load_model(ckpt_path);

  dsp::WavData wav = dsp::read_wav(in_path);
  if (wav.sample_rate != m.pcfg.sample_rate) {
    throw std::runtime_error("separate: " + in_path + " is sampled at " +
                             std::to_string(wav.sample_rate) + " Hz but the checkpoint expects " +
                             std::to_string(m.pcfg.sample_rate) + " Hz");
  }
  data::Excerpt ex;
  ex.id = fs::path(in_path).stem().string();
  ex.sample_rate = wav.sample_rate;
  ex.mixture = std::move(wav.samples);
  if (!f0_path.empty()) {
    ex.f0_truth = data::read_f0_csv(f0_path);
    if (static_cast<int>(ex.f0_truth.size()) != m.pcfg.voices) {
      throw ConfigError("--f0 file has " + std::to_string(ex.f0_truth.size()) +
                        " tracks but the checkpoint expects " + std::to_string(m.pcfg.voices));
    }
  } else if (m.pcfg.oracle_salience) {
    throw ConfigError(
        "this checkpoint derives salience from ground-truth F0; pass the matching CSV via --f0");
  }

  const train::Pipeline::Separation sep = m.pipe->separate(ex);
  fs::create_directories(out);
  const std::int64_t n = ex.mixture.numel();
  for (int j = 0; j < m.pcfg.voices; ++j) {
    dsp::write_wav_float32(out + "/stem_" + std::to_string(j) + ".wav", sep.stems[j].data(), n,
                           m.pcfg.sample_rate);
  }
  const double frame_period =
      static_cast<double>(m.pcfg.salience_hop) / static_cast<double>(m.pcfg.salience_rate);
  data::write_f0_csv(out + "/f0_est.csv", sep.f0, frame_period);
  if (dump_salience) {
    salience::write_salience_dump(out + "/salience_mix.sal", {sep.mix_salience});
    salience::write_salience_dump(out + "/salience_assigned.sal", sep.assigned);
  }

  double rec_err = 0.0;  // stems are masked shares of the mixture; they must sum back
  for (std::int64_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (int j = 0; j < m.pcfg.voices; ++j) s += sep.stems[j].data()[i];
    rec_err = std::max(rec_err, std::abs(s - static_cast<double>(ex.mixture.data()[i])));
  }

  AppConfig echo;
  echo.seed = m.meta.seed;
  echo.pipeline = m.pcfg;
  echo_config(out, echo,
              {{"command", "separate"}, {"ckpt", ckpt_path}, {"in", in_path}, {"f0", f0_path}});
  std::printf("separate: %d stems + f0_est.csv -> %s (mask dev %.2e, resynthesis gap %.2e)\n",
              m.pcfg.voices, out.c_str(), sep.max_mask_dev, rec_err);
  return 0;
}

int cmd_evaluate(const std::string& ckpt_path, const std::string& data_dir,
                 const std::string& report_path, const std::string& split) {
  LoadedModel m = load_model(ckpt_path);
  const data::Manifest man = data::read_manifest(data_dir + "/manifest.jsonl");
  if (man.voices != m.pcfg.voices) {
    throw ConfigError("corpus has " + std::to_string(man.voices) +
                      " voices but the checkpoint expects " + std::to_string(m.pcfg.voices));
  }
  const auto excerpts = data::load_split(man, split, true);
  if (excerpts.empty()) throw ConfigError("split '" + split + "' has no excerpts in " + data_dir);

  metrics::MetricReport rep;
  std::vector<double> baselines;
  json rows = json::array();
  for (const auto& ex : excerpts) {
    for (const auto& row : m.pipe->evaluate(ex)) {
      rep.rows.push_back(row.scores);
      baselines.push_back(row.baseline_si_sdr_db);
      rows.push_back({{"excerpt", row.scores.excerpt_id},
                      {"voice", row.scores.voice},
                      {"si_sdr_db", row.scores.si_sdr_db},
                      {"baseline_si_sdr_db", row.baseline_si_sdr_db},
                      {"rpa", row.scores.pitch.rpa},
                      {"rca", row.scores.pitch.rca},
                      {"oa", row.scores.pitch.oa}});
    }
  }
  const auto si = rep.column(&metrics::PairScores::si_sdr_db);
  const auto rpa = rep.pitch_column(&metrics::PitchScores::rpa);
  const auto rca = rep.pitch_column(&metrics::PitchScores::rca);
  const auto oa = rep.pitch_column(&metrics::PitchScores::oa);
  const json aggregate{{"si_sdr_mean_db", metrics::mean(si)},
                       {"si_sdr_median_db", metrics::median(si)},
                       {"baseline_si_sdr_mean_db", metrics::mean(baselines)},
                       {"baseline_si_sdr_median_db", metrics::median(baselines)},
                       {"rpa_mean", metrics::mean(rpa)},
                       {"rpa_median", metrics::median(rpa)},
                       {"rca_mean", metrics::mean(rca)},
                       {"rca_median", metrics::median(rca)},
                       {"oa_mean", metrics::mean(oa)},
                       {"oa_median", metrics::median(oa)},
                       {"excerpts", excerpts.size()},
                       {"voices", m.pcfg.voices}};
  const json report{{"split", split}, {"rows", rows}, {"aggregate", aggregate}};

  fs::path rp(report_path);
  if (rp.has_parent_path()) fs::create_directories(rp.parent_path());
  std::ofstream f(report_path, std::ios::trunc);
  VX_CHECK(f.good(), "evaluate: cannot write report " + report_path);
  f << report.dump(2) << "\n";

  AppConfig echo;
  echo.seed = m.meta.seed;
  echo.pipeline = m.pcfg;
  const std::string echo_dir = rp.has_parent_path() ? rp.parent_path().string() : ".";
  echo_config(echo_dir, echo,
              {{"command", "evaluate"}, {"ckpt", ckpt_path}, {"data", data_dir}, {"split", split}});

  std::printf("evaluate: %zu excerpts x %d voices (%s split)\n", excerpts.size(), m.pcfg.voices,
              split.c_str());
  std::printf("  SI-SDR mean %.2f dB (median %.2f), mixture baseline mean %.2f dB\n",
              metrics::mean(si), metrics::median(si), metrics::mean(baselines));
  std::printf("  RPA mean %.4f, RCA mean %.4f, OA mean %.4f -> %s\n", metrics::mean(rpa),
              metrics::mean(rca), metrics::mean(oa), report_path.c_str());
  return 0;
}

int cmd_gradcheck(bool self_test, const std::string& out) {
  if (self_test) {
    // The deliberately wrong adjoint must be flagged; the command then exits
    // nonzero to prove the harness has teeth.
    const gradcheck::Result r = gradcheck::run_fixture(gradcheck::broken_backward_fixture());
    if (!r.pass) {
      std::printf("gradcheck self-test: broken adjoint caught (max rel err %.3e); exiting 1\n",
                  r.max_rel_err);
      return 1;
    }
    std::fprintf(stderr, "gradcheck self-test FAILED: broken adjoint was not detected\n");
    return 2;
  }

  std::vector<gradcheck::Fixture> fixtures = gradcheck::core_fixtures();
  for (auto& f : losses::gradcheck_fixtures()) fixtures.push_back(std::move(f));
  for (auto& f : synth::gradcheck_fixtures()) fixtures.push_back(std::move(f));
  const bool ok = gradcheck::run_and_report(fixtures, /*verbose=*/true);
  std::printf("gradcheck: %zu fixtures, %s\n", fixtures.size(),
              ok ? "all gradients match finite differences" : "FAILURES above");

  AppConfig cfg;  // gradcheck takes no config; echo the defaults it ran under
  if (!out.empty()) {
    echo_config(out, cfg, {{"command", "gradcheck"}});
  } else {
    std::printf("resolved config: %s\n", to_json(cfg).dump().c_str());
  }
  return ok ? 0 : 1;
}

}  // namespace

int run_main(int argc, char** argv) {
  CLI::App app{"voxsep: unsupervised separation of polyphonic vocal mixtures"};
  app.require_subcommand(1);
  app.footer(
      "Precedence: command-line flags override the --config file, which overrides built-in\n"
      "defaults. Exit codes: 0 success, 1 usage or configuration error, 2 runtime failure.");

  std::string g_config, g_out;
  double g_seconds = 300.0;
  std::uint64_t g_seed = 0;
  CLI::App* gen = app.add_subcommand("gen-data", "Generate a synthetic vocal-quartet corpus");
  gen->add_option("--config", g_config, "JSON config file");
  gen->add_option("--out", g_out, "Corpus output directory")->required();
  gen->add_option("--seconds", g_seconds, "Total audio to generate, in seconds")
      ->capture_default_str();
  gen->add_option("--seed", g_seed, "Override the config seed");

  std::string t_config, t_data, t_out, t_strategy;
  std::uint64_t t_seed = 0;
  std::int64_t t_max_epochs = 0, t_patience = 0, t_warmup = 0, t_batch = 0;
  double t_lr = 0.0;
  CLI::App* tr = app.add_subcommand("train", "Train the separation model on a corpus");
  tr->add_option("--config", t_config, "JSON config file");
  tr->add_option("--data", t_data, "Corpus directory (contains manifest.jsonl)")->required();
  tr->add_option("--out", t_out, "Run directory for checkpoints and the log")->required();
  tr->add_option("--strategy", t_strategy, "sfsf | sftsft | sfsft | sfsftf | wup");
  tr->add_option("--seed", t_seed, "Override the config seed");
  tr->add_option("--max-epochs", t_max_epochs, "Total epoch budget");
  tr->add_option("--patience", t_patience, "Early-stop patience, in epochs");
  tr->add_option("--warmup-epochs", t_warmup, "Budget of each closed warm-up phase");
  tr->add_option("--batch-size", t_batch, "Excerpts per optimizer step");
  tr->add_option("--lr", t_lr, "Adam learning rate");

  std::string s_ckpt, s_in, s_out, s_f0;
  bool s_dump = false;
  CLI::App* sep = app.add_subcommand("separate", "Separate a mixture WAV into per-voice stems");
  sep->add_option("--ckpt", s_ckpt, "Trained checkpoint")->required();
  sep->add_option("--in", s_in, "Input mixture WAV")->required();
  sep->add_option("--out", s_out, "Output directory for stems")->required();
  sep->add_option("--f0", s_f0, "Ground-truth F0 CSV (required by oracle-salience checkpoints)");
  sep->add_flag("--dump-salience", s_dump, "Also write mixture and per-voice salience maps");

  std::string e_ckpt, e_data, e_report, e_split = "test";
  CLI::App* ev = app.add_subcommand("evaluate", "Score a checkpoint against a corpus split");
  ev->add_option("--ckpt", e_ckpt, "Trained checkpoint")->required();
  ev->add_option("--data", e_data, "Corpus directory (contains manifest.jsonl)")->required();
  ev->add_option("--report", e_report, "Output JSON report path")->required();
  ev->add_option("--split", e_split, "Manifest split to score")->capture_default_str();

  bool gc_self = false;
  std::string gc_out;
  CLI::App* gc = app.add_subcommand(
      "gradcheck", "Check every differentiable op against central finite differences");
  gc->add_flag("--self-test", gc_self, "Run only the deliberately broken adjoint; must exit 1");
  gc->add_option("--out", gc_out, "Optional directory for the resolved-config echo");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }

  if (gen->parsed()) {
    AppConfig cfg = base_config(g_config);
    if (gen->count("--seed")) cfg.seed = g_seed;
    return cmd_gen_data(cfg, g_out, g_seconds);
  }
  if (tr->parsed()) {
    AppConfig cfg = base_config(t_config);
    if (tr->count("--seed")) cfg.seed = t_seed;
    if (tr->count("--strategy")) {
      train::parse_strategy(t_strategy);
      cfg.strategy = t_strategy;
    }
    if (tr->count("--max-epochs")) cfg.max_epochs = t_max_epochs;
    if (tr->count("--patience")) cfg.patience = t_patience;
    if (tr->count("--warmup-epochs")) cfg.warmup_epochs = t_warmup;
    if (tr->count("--batch-size")) cfg.batch_size = t_batch;
    if (tr->count("--lr")) cfg.adam.lr = t_lr;
    return cmd_train(cfg, t_data, t_out);
  }
  if (sep->parsed()) return cmd_separate(s_ckpt, s_in, s_out, s_f0, s_dump);
  if (ev->parsed()) return cmd_evaluate(e_ckpt, e_data, e_report, e_split);
  if (gc->parsed()) return cmd_gradcheck(gc_self, gc_out);
  return 1;  // unreachable with require_subcommand(1)
}

}  // namespace voxsep::cli
