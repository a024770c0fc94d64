#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <vector>

#include "doctest.h"
#include "json.hpp"
#include "voxsep/data/data.h"
#include "voxsep/nets/nets.h"
#include "voxsep/train/adam.h"
#include "voxsep/train/checkpoint.h"
#include "voxsep/train/pipeline.h"
#include "voxsep/train/plan.h"
#include "voxsep/train/trainer.h"

using namespace voxsep;

namespace {

bool bitwise_equal(const Tensor<float>& a, const Tensor<float>& b) {
  if (!a.same_shape(b)) return false;
  return std::memcmp(a.data(), b.data(), static_cast<std::size_t>(a.numel()) * sizeof(float)) == 0;
}

std::string slurp(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  REQUIRE(f.good());
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

std::filesystem::path temp_dir(const std::string& tag) {
  auto p = std::filesystem::temp_directory_path() / ("voxsep_train_" + tag);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

Tensor<float> vec(std::initializer_list<float> xs) {
  Tensor<float> t({static_cast<std::int64_t>(xs.size())});
  std::int64_t i = 0;
  for (float x : xs) t.data()[i++] = x;
  return t;
}

// Half-second two-voice excerpts keep one trainer epoch well under a second.
data::Excerpt tiny_excerpt(std::uint64_t seed) {
  data::GenConfig g;
  g.voices = 2;
  g.seconds = 0.5;
  g.ranges = {{265.0, 430.0}, {150.0, 185.0}};
  salience::FreqGrid grid;
  data::Excerpt ex = data::generate_excerpt(seed, g, grid);
  ex.id = "t" + std::to_string(seed);
  return ex;
}

std::vector<data::Excerpt> tiny_corpus(int n, std::uint64_t seed0) {
  std::vector<data::Excerpt> out;
  for (int i = 0; i < n; ++i) out.push_back(tiny_excerpt(seed0 + static_cast<std::uint64_t>(i)));
  return out;
}

train::PipelineConfig tiny_pipeline_cfg() {
  train::PipelineConfig c;
  c.voices = 2;
  c.loss_ranges = {{260.0, 880.0}, {145.0, 440.0}};
  c.assign_net.voices = 2;
  c.assign_net.channels = 4;
  c.encoder_net.hidden = 32;
  c.encoder_net.latent = 16;
  c.decoder_net.latent = 16;
  c.decoder_net.voices = 2;
  c.decoder_net.hidden = 32;
  c.decoder_net.harmonics = 12;
  c.decoder_net.noise_bands = 9;
  return c;
}

train::TrainConfig tiny_train_cfg(std::string out_dir = "") {
  train::TrainConfig t;
  t.batch_size = 4;
  t.seed = 77;
  t.out_dir = std::move(out_dir);
  return t;
}

std::vector<Tensor<float>> snapshot_prefix(const nets::ParamStore& store,
                                           const std::string& prefix) {
  std::vector<Tensor<float>> out;
  for (const auto& e : store.entries()) {
    if (e.name.rfind(prefix, 0) == 0) out.push_back(e.value);
  }
  return out;
}

}  // namespace

TEST_CASE("adam first step moves a zero weight by about -lr") {
  nets::ParamStore store;
  store.add("decoder/w", vec({0.0f}));
  train::Adam adam({});
  adam.sync(store);
  std::vector<Tensor<float>> grads(1);
  grads[0] = vec({1.0f});
  auto res = adam.step(store, grads, 5.0);
  CHECK(res.applied);
  CHECK(res.grad_norm == doctest::Approx(1.0));
  CHECK(store.entry(0).value.data()[0] == doctest::Approx(-1e-4).epsilon(1e-6));
  CHECK(adam.slots().at("decoder/w").t == 1);
}

TEST_CASE("adam zero gradient leaves the weight bitwise unchanged") {
  nets::ParamStore store;
  store.add("decoder/w", vec({0.25f, -1.5f}));
  Tensor<float> before = store.entry(0).value;
  train::Adam adam({});
  adam.sync(store);
  std::vector<Tensor<float>> grads(1);
  grads[0] = Tensor<float>({2});  // zeros
  CHECK(adam.step(store, grads, 5.0).applied);
  CHECK(bitwise_equal(store.entry(0).value, before));
}

TEST_CASE("adam rejects non-finite gradients without touching state") {
  nets::ParamStore store;
  store.add("decoder/w", vec({1.0f}));
  train::Adam adam({});
  adam.sync(store);
  std::vector<Tensor<float>> g1(1);
  g1[0] = vec({1.0f});
  CHECK(adam.step(store, g1, 5.0).applied);
  Tensor<float> w_after = store.entry(0).value;
  Tensor<float> m_after = adam.slots().at("decoder/w").m;

  std::vector<Tensor<float>> bad(1);
  bad[0] = vec({std::numeric_limits<float>::quiet_NaN()});
  auto res = adam.step(store, bad, 5.0);
  CHECK_FALSE(res.applied);
  CHECK(bitwise_equal(store.entry(0).value, w_after));
  CHECK(bitwise_equal(adam.slots().at("decoder/w").m, m_after));
  CHECK(adam.slots().at("decoder/w").t == 1);

  bad[0] = vec({std::numeric_limits<float>::infinity()});
  CHECK_FALSE(adam.step(store, bad, 5.0).applied);
}

TEST_CASE("adam clipping at the global norm matches a pre-scaled gradient") {
  // norm([6,8]) = 10, clip 5 => exact scale 0.5, so the clipped step must be
  // bitwise identical to feeding [3,4] with clipping disabled.
  nets::ParamStore s1, s2;
  s1.add("decoder/w", vec({0.1f, -0.2f}));
  s2.add("decoder/w", vec({0.1f, -0.2f}));
  train::Adam a1({}), a2({});
  a1.sync(s1);
  a2.sync(s2);
  std::vector<Tensor<float>> g1(1), g2(1);
  g1[0] = vec({6.0f, 8.0f});
  g2[0] = vec({3.0f, 4.0f});
  auto r1 = a1.step(s1, g1, 5.0);
  auto r2 = a2.step(s2, g2, 0.0);  // clip disabled
  CHECK(r1.grad_norm == doctest::Approx(10.0));
  CHECK(bitwise_equal(s1.entry(0).value, s2.entry(0).value));
  CHECK(bitwise_equal(a1.slots().at("decoder/w").m, a2.slots().at("decoder/w").m));
  CHECK(bitwise_equal(a1.slots().at("decoder/w").v, a2.slots().at("decoder/w").v));

  // Below the clip threshold nothing is scaled.
  nets::ParamStore s3, s4;
  s3.add("decoder/w", vec({0.0f}));
  s4.add("decoder/w", vec({0.0f}));
  train::Adam a3({}), a4({});
  a3.sync(s3);
  a4.sync(s4);
  std::vector<Tensor<float>> g3(1);
  g3[0] = vec({2.0f});
  a3.step(s3, g3, 5.0);
  a4.step(s4, g3, 0.0);
  CHECK(bitwise_equal(s3.entry(0).value, s4.entry(0).value));
}

TEST_CASE("adam sync drops frozen slots and zero-initializes new ones") {
  nets::ParamStore store;
  store.add("assign/a", vec({0.0f, 0.0f}));
  store.add("encoder/b", vec({0.0f, 0.0f}));
  train::Adam adam({});
  adam.sync(store);
  CHECK(adam.slots().size() == 2);

  std::vector<Tensor<float>> grads(2);
  grads[0] = vec({1.0f, 1.0f});
  grads[1] = vec({1.0f, 1.0f});
  CHECK(adam.step(store, grads, 0.0).applied);
  CHECK(adam.slots().at("assign/a").t == 1);

  store.set_trainable_prefix("assign/", false);
  adam.sync(store);
  CHECK(adam.slots().count("assign/a") == 0);
  CHECK(adam.slots().at("encoder/b").t == 1);

  grads[0] = Tensor<float>();
  CHECK(adam.step(store, grads, 0.0).applied);
  CHECK(adam.slots().at("encoder/b").t == 2);

  store.set_trainable_prefix("assign/", true);
  adam.sync(store);
  const auto& fresh = adam.slots().at("assign/a");
  CHECK(fresh.t == 0);
  CHECK(fresh.m.data()[0] == 0.0f);
  CHECK(fresh.v.data()[1] == 0.0f);
  CHECK(adam.slots().at("encoder/b").t == 2);  // continuing state survives

  // Supplying a gradient for a frozen param is a caller bug.
  store.set_trainable_prefix("assign/", false);
  adam.sync(store);
  grads[0] = vec({1.0f, 1.0f});
  grads[1] = vec({1.0f, 1.0f});
  CHECK_THROWS(adam.step(store, grads, 0.0));
}

TEST_CASE("early stop flags after exactly `patience` non-improving epochs") {
  train::EarlyStop stop(3);
  CHECK_FALSE(stop.observe(5.0));
  CHECK_FALSE(stop.observe(4.0));  // improvement
  CHECK_FALSE(stop.observe(4.0));  // stall 1
  CHECK_FALSE(stop.observe(4.2));  // stall 2
  CHECK(stop.observe(4.0));        // stall 3 -> stop
  CHECK(stop.best() == 4.0);

  train::EarlyStop stop2(2);
  CHECK_FALSE(stop2.observe(1.0));
  CHECK_FALSE(stop2.observe(2.0));  // stall 1
  CHECK_FALSE(stop2.observe(0.5));  // improvement resets
  CHECK_FALSE(stop2.observe(0.6));
  CHECK(stop2.observe(0.7));

  CHECK_THROWS(train::EarlyStop(0));
}

TEST_CASE("plans encode the five strategies") {
  using train::Strategy;
  auto sfsf = train::make_plan(Strategy::SF_SF);
  REQUIRE(sfsf.phases.size() == 1);
  CHECK(sfsf.phases[0].epoch_budget == -1);
  CHECK(sfsf.phases[0].frozen == std::vector<std::string>{"salience", "assignment"});
  CHECK(sfsf.phases[0].loss_terms == std::vector<std::string>{"l_rec"});
  CHECK(sfsf.max_epochs == 200);
  CHECK(sfsf.patience == 30);

  auto sftsft = train::make_plan(Strategy::SFT_SFT);
  REQUIRE(sftsft.phases.size() == 1);
  CHECK(sftsft.phases[0].frozen.empty());
  CHECK(sftsft.phases[0].loss_terms == train::kAllLossTerms);

  auto sfsft = train::make_plan(Strategy::SF_SFT);
  REQUIRE(sfsft.phases.size() == 1);
  CHECK(sfsft.phases[0].frozen == std::vector<std::string>{"salience"});
  CHECK(sfsft.phases[0].loss_terms == train::kAllLossTerms);

  auto wup = train::make_plan(Strategy::WUP);
  REQUIRE(wup.phases.size() == 3);
  CHECK(wup.phases[0].epoch_budget == 50);
  CHECK(wup.phases[0].frozen == std::vector<std::string>{"salience", "encoder", "decoder"});
  CHECK(wup.phases[0].loss_terms == std::vector<std::string>{"l1", "l2", "l3"});
  CHECK(wup.phases[1].epoch_budget == 50);
  CHECK(wup.phases[1].frozen == std::vector<std::string>{"salience", "assignment"});
  CHECK(wup.phases[1].loss_terms == std::vector<std::string>{"l_rec"});
  CHECK(wup.phases[2].epoch_budget == -1);
  CHECK(wup.phases[2].frozen.empty());
  CHECK(wup.phases[2].loss_terms == train::kAllLossTerms);

  auto sfsftf = train::make_plan(Strategy::SF_SFT_F);
  REQUIRE(sfsftf.phases.size() == 2);
  CHECK(sfsftf.phases[0].frozen == std::vector<std::string>{"salience"});
  CHECK(sfsftf.phases[1].frozen.empty());
  CHECK(sfsftf.phases[0].epoch_budget == -1);

  CHECK(train::parse_strategy("wup") == Strategy::WUP);
  CHECK(train::parse_strategy("sfsftf") == Strategy::SF_SFT_F);
  CHECK(train::strategy_name(Strategy::SF_SF) == "sfsf");
  CHECK_THROWS_AS(train::parse_strategy("bogus"), ConfigError);
}

TEST_CASE("checkpoint file round-trips byte for byte") {
  auto dir = temp_dir("ckpt_bytes");
  train::CheckpointData ckpt;
  Tensor<float> t({2, 3});
  for (std::int64_t i = 0; i < 6; ++i) t.data()[i] = static_cast<float>(i) * 0.5f - 1.0f;
  ckpt.add("param/a", t);
  ckpt.add_scalar("flag/a", 1.0);
  ckpt.add_double("cfg/grid_fmin", 32.7);
  ckpt.add_double("cfg/neg", -1.0e-7);
  ckpt.add_bits64("meta/seed", 0xDEADBEEFCAFEBABEull);

  const std::string p1 = (dir / "a.ckpt").string();
  const std::string p2 = (dir / "b.ckpt").string();
  train::write_checkpoint_file(p1, ckpt);
  train::CheckpointData back = train::read_checkpoint_file(p1);
  train::write_checkpoint_file(p2, back);
  CHECK(slurp(p1) == slurp(p2));

  REQUIRE(back.entries.size() == ckpt.entries.size());
  CHECK(back.entries[0].first == "param/a");
  CHECK(bitwise_equal(back.entries[0].second, t));
  CHECK(back.scalar("flag/a") == 1.0);
  CHECK(back.get_double("cfg/grid_fmin") == 32.7);  // exact, not a f32 round-trip
  CHECK(back.get_double("cfg/neg") == -1.0e-7);
  CHECK(back.bits64("meta/seed") == 0xDEADBEEFCAFEBABEull);

  CHECK(ckpt.find("nope") == nullptr);
  CHECK_THROWS(ckpt.scalar("nope"));
  CHECK_THROWS(ckpt.add("param/a", t));  // duplicate

  std::ofstream bad((dir / "bad.ckpt").string(), std::ios::binary);
  bad << "XXXX junk";
  bad.close();
  CHECK_THROWS(train::read_checkpoint_file((dir / "bad.ckpt").string()));
  CHECK_THROWS(train::read_checkpoint_file((dir / "missing.ckpt").string()));
  std::filesystem::remove_all(dir);
}

TEST_CASE("train state survives assemble/restore bitwise") {
  nets::ParamStore store;
  store.add("assign/w", vec({0.5f, -0.5f, 0.25f}));
  store.add("encoder/w", vec({1.0f, 2.0f}));
  train::Adam adam({});
  adam.sync(store);
  std::vector<Tensor<float>> grads(2);
  grads[0] = vec({0.3f, -0.7f, 0.1f});
  grads[1] = vec({1.0f, -1.0f});
  REQUIRE(adam.step(store, grads, 5.0).applied);
  REQUIRE(adam.step(store, grads, 5.0).applied);

  train::TrainMeta meta;
  meta.phase_index = 2;
  meta.epoch = 17;
  meta.weights = {12.5, 0.03125, 7.0};
  meta.seed = 0x0123456789ABCDEFull;
  meta.config = {{"voices", 4.0}, {"grid_fmin", 32.7}};
  train::CheckpointData ckpt = train::assemble_checkpoint(store, adam, meta);

  // Same layout, different values: restore must overwrite everything.
  nets::ParamStore s2;
  s2.add("assign/w", Tensor<float>({3}));
  s2.add("encoder/w", Tensor<float>({2}));
  s2.set_trainable_prefix("assign/", false);
  train::Adam a2({});
  train::TrainMeta m2;
  train::restore_checkpoint(ckpt, s2, a2, &m2);

  CHECK(bitwise_equal(s2.entry(0).value, store.entry(0).value));
  CHECK(bitwise_equal(s2.entry(1).value, store.entry(1).value));
  CHECK(s2.entry(0).trainable);
  CHECK(bitwise_equal(a2.slots().at("assign/w").m, adam.slots().at("assign/w").m));
  CHECK(bitwise_equal(a2.slots().at("assign/w").v, adam.slots().at("assign/w").v));
  CHECK(a2.slots().at("assign/w").t == 2);
  CHECK(m2.phase_index == 2);
  CHECK(m2.epoch == 17);
  CHECK(m2.weights.alpha == 12.5);
  CHECK(m2.weights.beta == 0.03125);
  CHECK(m2.weights.gamma == 7.0);
  CHECK(m2.seed == 0x0123456789ABCDEFull);
  CHECK(m2.config.at("grid_fmin") == 32.7);
  CHECK(train::read_config_map(ckpt).at("voices") == 4.0);

  // Re-assembling from the restored state reproduces the same entry list.
  train::CheckpointData again = train::assemble_checkpoint(s2, a2, m2);
  REQUIRE(again.entries.size() == ckpt.entries.size());
  for (std::size_t i = 0; i < again.entries.size(); ++i) {
    CHECK(again.entries[i].first == ckpt.entries[i].first);
    CHECK(bitwise_equal(again.entries[i].second, ckpt.entries[i].second));
  }
}

TEST_CASE("pipeline prepare: frame-rate gather, oracle map, error paths") {
  auto ex = tiny_excerpt(500);
  nets::ParamStore store;
  train::Pipeline pipe(tiny_pipeline_cfg(), store, 42);
  train::ExcerptCache c = pipe.prepare(ex);

  // 0.5 s at 16 kHz: 32 synth frames; at 22.05 kHz: 44 salience frames.
  CHECK(c.log_mag.dim(0) == 32);
  CHECK(c.log_mag.dim(1) == 257);
  REQUIRE(c.oracle_map.rank() == 2);
  CHECK(c.oracle_map.dim(0) == 44);
  CHECK(c.oracle_map.dim(1) == 360);
  REQUIRE(c.gather_idx.size() == 32);
  CHECK(c.gather_idx[0] == 0);   // 0 * 1.378125
  CHECK(c.gather_idx[1] == 1);   // 1.378 -> 1
  CHECK(c.gather_idx[2] == 3);   // 2.756 -> 3
  CHECK(c.gather_idx[16] == 22); // 22.05 -> 22
  CHECK(c.gather_idx[31] == 43); // 42.72 -> 43, inside [0, 43]
  CHECK(c.noise.size() == 2);

  data::Excerpt wrong_rate = ex;
  wrong_rate.sample_rate = 22050;
  CHECK_THROWS(pipe.prepare(wrong_rate));

  data::Excerpt no_truth = ex;
  no_truth.f0_truth.clear();
  CHECK_THROWS(pipe.prepare(no_truth));
}

TEST_CASE("pipeline forward shapes and separation consistency") {
  auto ex = tiny_excerpt(501);
  nets::ParamStore store;
  train::Pipeline pipe(tiny_pipeline_cfg(), store, 42);
  train::ExcerptCache c = pipe.prepare(ex);

  train::FTape tape;
  auto p = nets::bind_params(store, tape);
  auto fw = pipe.forward(tape, p, c);
  REQUIRE(fw.assigned.size() == 2);
  CHECK(fw.assigned[0].shape() == std::vector<std::int64_t>{44, 360});
  CHECK(fw.f0_sal[0].shape() == std::vector<std::int64_t>{44});
  CHECK(fw.f0_synth[0].shape() == std::vector<std::int64_t>{32});
  CHECK(fw.stems[0].shape() == std::vector<std::int64_t>{8000});
  CHECK(fw.mix_estimate.shape() == std::vector<std::int64_t>{8000});

  // The gathered synth-rate track must be the salience-rate track sampled at
  // the cached indices.
  const auto& sal = fw.f0_sal[0].data();
  for (std::size_t l = 0; l < c.gather_idx.size(); ++l) {
    CHECK(fw.f0_synth[0].data()[l] == sal.data()[c.gather_idx[l]]);
  }

  auto lt = pipe.build_losses(fw, c);
  CHECK(lt.l_rec.data().data()[0] > 0.0f);
  CHECK(lt.l1.data().data()[0] >= 0.0f);
  CHECK(lt.l2.data().data()[0] >= 0.0f);
  CHECK(lt.l3.data().data()[0] >= 0.0f);

  auto sep = pipe.separate(ex);
  REQUIRE(sep.stems.size() == 2);
  CHECK(sep.stems[0].numel() == 8000);
  CHECK(sep.max_mask_dev <= 1e-6);
  float peak = 0.0f;
  Tensor<float> residual({8000});
  for (std::int64_t i = 0; i < 8000; ++i) {
    residual.data()[i] = ex.mixture.data()[i] - sep.stems[0].data()[i] - sep.stems[1].data()[i];
    peak = std::max(peak, std::abs(residual.data()[i]));
  }
  CHECK(peak < 1e-5f);  // soft masks conserve the mixture

  auto rows = pipe.evaluate(ex);
  REQUIRE(rows.size() == 2);
  CHECK(rows[0].scores.excerpt_id == ex.id);
  CHECK(rows[1].scores.voice == 1);
  CHECK(std::isfinite(rows[0].scores.si_sdr_db));
  CHECK(std::isfinite(rows[0].baseline_si_sdr_db));
  CHECK(rows[0].scores.pitch.rpa >= 0.0);
}

TEST_CASE("SF_SF keeps the assignment net bitwise frozen") {
  auto train_set = tiny_corpus(4, 100);
  auto valid_set = tiny_corpus(2, 900);
  nets::ParamStore store;
  train::Pipeline pipe(tiny_pipeline_cfg(), store, 42);
  auto assign_before = snapshot_prefix(store, "assign/");
  auto dec_before = snapshot_prefix(store, "decoder/");
  REQUIRE(assign_before.size() == 6);

  auto plan = train::make_plan(train::Strategy::SF_SF, 3, 30);
  train::Trainer tr(pipe, tiny_train_cfg(), plan);
  auto res = tr.run(train_set, valid_set);

  CHECK(res.phase_epochs == std::vector<std::int64_t>{3});
  CHECK(res.log.size() == 3);
  auto assign_after = snapshot_prefix(store, "assign/");
  auto dec_after = snapshot_prefix(store, "decoder/");
  for (std::size_t i = 0; i < assign_before.size(); ++i) {
    CHECK(bitwise_equal(assign_before[i], assign_after[i]));
  }
  bool decoder_moved = false;
  for (std::size_t i = 0; i < dec_before.size(); ++i) {
    if (!bitwise_equal(dec_before[i], dec_after[i])) decoder_moved = true;
  }
  CHECK(decoder_moved);

  // Moments exist only for the trainable modules.
  CHECK(res.final_checkpoint.has("adam/encoder/l1/w/m"));
  CHECK(res.final_checkpoint.has("adam/decoder/hidden/w/m"));
  CHECK_FALSE(res.final_checkpoint.has("adam/assign/conv1/w/m"));
}

TEST_CASE("WUP ledger and per-phase moment lifecycle") {
  auto train_set = tiny_corpus(4, 200);
  auto valid_set = tiny_corpus(2, 910);
  nets::ParamStore store;
  train::Pipeline pipe(tiny_pipeline_cfg(), store, 42);

  auto plan = train::make_plan(train::Strategy::WUP, 5, 30, 2);
  REQUIRE(plan.phases[0].epoch_budget == 2);
  train::Trainer tr(pipe, tiny_train_cfg(), plan);
  auto res = tr.run(train_set, valid_set);

  CHECK(res.phase_epochs == std::vector<std::int64_t>{2, 2, 1});
  CHECK(res.log.size() == 5);
  CHECK(res.log[0].phase == 0);
  CHECK(res.log[2].phase == 1);
  CHECK(res.log[4].phase == 2);
  CHECK(res.log[4].epoch == 5);

  // One step per epoch here (4 train excerpts, batch 4). The assignment net
  // was frozen through phase 2, so its moments restarted in phase 3: t = 1.
  // Encoder/decoder trained in phases 2 and 3: t = 3.
  CHECK(res.final_checkpoint.scalar("adam/assign/conv1/w/t") == 1.0);
  CHECK(res.final_checkpoint.scalar("adam/encoder/l1/w/t") == 3.0);
  CHECK(res.final_checkpoint.scalar("adam/decoder/harm/w/t") == 3.0);
}

TEST_CASE("identical config and seed give bit-identical training runs") {
  auto train_set = tiny_corpus(4, 300);
  auto valid_set = tiny_corpus(2, 920);
  auto dir = temp_dir("determinism");

  auto run_once = [&](const std::string& name) {
    nets::ParamStore store;
    train::Pipeline pipe(tiny_pipeline_cfg(), store, 42);
    auto plan = train::make_plan(train::Strategy::SFT_SFT, 2, 30);
    train::TrainConfig tc = tiny_train_cfg((dir / name).string());
    train::Trainer tr(pipe, tc, plan);
    return tr.run(train_set, valid_set);
  };
  auto r1 = run_once("run1");
  auto r2 = run_once("run2");

  CHECK(slurp((dir / "run1/last.ckpt").string()) == slurp((dir / "run2/last.ckpt").string()));
  CHECK(slurp((dir / "run1/best.ckpt").string()) == slurp((dir / "run2/best.ckpt").string()));
  CHECK(r1.best_val == r2.best_val);
  REQUIRE(r1.log.size() == r2.log.size());
  for (std::size_t i = 0; i < r1.log.size(); ++i) {
    CHECK(r1.log[i].l_full == r2.log[i].l_full);
    CHECK(r1.log[i].val_l_full == r2.log[i].val_l_full);
  }
  std::filesystem::remove_all(dir);
}

TEST_CASE("checkpoint restore reproduces forward outputs bitwise") {
  auto train_set = tiny_corpus(4, 400);
  auto valid_set = tiny_corpus(2, 930);
  nets::ParamStore store;
  train::Pipeline pipe(tiny_pipeline_cfg(), store, 42);
  auto plan = train::make_plan(train::Strategy::SFT_SFT, 2, 30);
  train::Trainer tr(pipe, tiny_train_cfg(), plan);
  auto res = tr.run(train_set, valid_set);

  // Rebuild everything from the checkpoint's own config echo.
  auto cfg2 = train::PipelineConfig::from_config_map(train::read_config_map(res.final_checkpoint));
  CHECK(cfg2.voices == 2);
  CHECK(cfg2.grid.fmin == 32.7);
  nets::ParamStore s2;
  train::Pipeline p2(cfg2, s2, 999);  // init seed is irrelevant, restore overwrites
  train::Adam a2({});
  train::TrainMeta m2;
  train::restore_checkpoint(res.final_checkpoint, s2, a2, &m2);
  CHECK(m2.seed == 77);

  auto probe = tiny_excerpt(444);
  auto sep1 = pipe.separate(probe);
  auto sep2 = p2.separate(probe);
  REQUIRE(sep1.stems.size() == sep2.stems.size());
  for (std::size_t j = 0; j < sep1.stems.size(); ++j) {
    CHECK(bitwise_equal(sep1.stems[j], sep2.stems[j]));
    CHECK(bitwise_equal(sep1.estimates[j], sep2.estimates[j]));
    CHECK(sep1.f0[j] == sep2.f0[j]);
  }
}

TEST_CASE("training log file is valid JSONL and artifacts are written") {
  auto train_set = tiny_corpus(4, 600);
  auto valid_set = tiny_corpus(2, 940);
  auto dir = temp_dir("jsonl");
  nets::ParamStore store;
  train::Pipeline pipe(tiny_pipeline_cfg(), store, 42);
  auto plan = train::make_plan(train::Strategy::SF_SFT, 2, 30);
  train::Trainer tr(pipe, tiny_train_cfg(dir.string()), plan);
  auto res = tr.run(train_set, valid_set);

  CHECK(std::filesystem::exists(dir / "last.ckpt"));
  CHECK(std::filesystem::exists(dir / "best.ckpt"));
  std::ifstream log((dir / "train_log.jsonl").string());
  REQUIRE(log.good());
  std::string line;
  std::int64_t rows = 0;
  while (std::getline(log, line)) {
    auto j = nlohmann::json::parse(line);
    ++rows;
    CHECK(j.at("epoch").get<std::int64_t>() == rows);
    for (const char* key : {"phase", "l_rec", "l1", "l2", "l3", "l_full", "val_l_full", "lr"}) {
      CHECK(j.contains(key));
    }
    CHECK(j.at("lr").get<double>() == 1e-4);
  }
  CHECK(rows == static_cast<std::int64_t>(res.log.size()));

  auto best = train::read_checkpoint_file((dir / "best.ckpt").string());
  CHECK(best.has("param/assign/conv1/w"));
  CHECK_FALSE(best.has("param/salience/conv1/w"));  // oracle mode has no salience net
  std::filesystem::remove_all(dir);
}

TEST_CASE("early stopping halts an open phase once validation stalls") {
  auto train_set = tiny_corpus(4, 700);
  auto valid_set = tiny_corpus(2, 950);
  nets::ParamStore store;
  train::Pipeline pipe(tiny_pipeline_cfg(), store, 42);
  auto plan = train::make_plan(train::Strategy::SF_SF, 40, 1);  // patience 1
  train::Trainer tr(pipe, tiny_train_cfg(), plan);
  auto res = tr.run(train_set, valid_set);

  REQUIRE(!res.log.empty());
  if (res.stopped_early) {
    const std::size_t n = res.log.size();
    // Every epoch before the stop strictly improved on the running best, and
    // the stopping epoch did not.
    double best = HUGE_VAL;
    for (std::size_t i = 0; i + 1 < n; ++i) {
      CHECK(res.log[i].val_l_full < best);
      best = std::min(best, res.log[i].val_l_full);
    }
    CHECK(res.log[n - 1].val_l_full >= best);
    CHECK(res.best_epoch == static_cast<std::int64_t>(n - 1));
  } else {
    CHECK(res.log.size() == 40);
  }
}

TEST_CASE("trainer input validation") {
  auto valid_set = tiny_corpus(2, 960);
  nets::ParamStore store;
  train::Pipeline pipe(tiny_pipeline_cfg(), store, 42);
  auto plan = train::make_plan(train::Strategy::SF_SF, 2, 30);
  train::Trainer tr(pipe, tiny_train_cfg(), plan);

  std::vector<data::Excerpt> empty;
  CHECK_THROWS(tr.run(empty, valid_set));

  auto three = tiny_corpus(3, 970);  // batch_size 4: no full batch
  CHECK_THROWS(tr.run(three, valid_set));

  auto four = tiny_corpus(4, 980);
  CHECK_THROWS(tr.run(four, empty));
}
