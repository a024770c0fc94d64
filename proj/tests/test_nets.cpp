#include <cmath>
#include <cstdint>
#include <vector>

#include "doctest.h"
#include "voxsep/core/autodiff.h"
#include "voxsep/core/ops.h"
#include "voxsep/core/rng.h"
#include "voxsep/core/tensor.h"
#include "voxsep/nets/nets.h"
#include "voxsep/salience/salience.h"

using namespace voxsep;
using nets::BoundParams;
using nets::ParamStore;

namespace {

Tensor<float> rand_tensor(const std::vector<std::int64_t>& shape, std::uint64_t seed, float lo,
                          float hi) {
  Tensor<float> t(shape);
  Rng rng(seed);
  rng.fill_uniform(t.data(), static_cast<std::size_t>(t.numel()), lo, hi);
  return t;
}

bool all_in(const Tensor<float>& t, float lo, float hi) {
  for (std::int64_t i = 0; i < t.numel(); ++i)
    if (!(t[i] >= lo && t[i] <= hi) || !std::isfinite(t[i])) return false;
  return true;
}

}  // namespace

TEST_CASE("ParamStore keeps insertion order and enforces unique names") {
  ParamStore store;
  store.add("a/w", Tensor<float>({2, 2}));
  store.add("b/w", Tensor<float>({3}));
  store.add("a/b", Tensor<float>({2}));
  CHECK(store.size() == 3);
  CHECK(store.entries()[0].name == "a/w");
  CHECK(store.entries()[1].name == "b/w");
  CHECK(store.entries()[2].name == "a/b");
  CHECK(store.index_of("b/w") == 1);
  CHECK(store.index_of("missing") == -1);
  CHECK_THROWS(store.add("a/w", Tensor<float>({1})));
}

TEST_CASE("prefix freeze flips exactly the module group and round-trips") {
  ParamStore store;
  nets::SalienceNet sal(store, {}, 1);
  nets::AssignmentNet asg(store, {}, 1);
  nets::MixtureEncoder enc(store, {}, 1);
  nets::SourceDecoder dec(store, {}, 1);
  const std::int64_t total = store.count_trainable();
  CHECK(total == static_cast<std::int64_t>(store.size()));

  store.set_trainable_prefix("salience/", false);
  std::int64_t frozen = 0;
  for (const auto& e : store.entries()) {
    const bool is_sal = e.name.rfind("salience/", 0) == 0;
    CHECK(e.trainable == !is_sal);
    if (is_sal) ++frozen;
  }
  CHECK(frozen == 6);  // three conv layers, weight + bias each
  CHECK(store.count_trainable() == total - frozen);
  store.set_trainable_prefix("salience/", true);
  CHECK(store.count_trainable() == total);
}

TEST_CASE("initialization is deterministic in the seed and fan-in bounded") {
  ParamStore a, b, c;
  nets::SalienceNet sa(a, {}, 42);
  nets::SalienceNet sb(b, {}, 42);
  nets::SalienceNet sc(c, {}, 43);
  REQUIRE(a.size() == b.size());
  bool identical = true, differs = false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const auto& ta = a.entries()[i].value;
    const auto& tb = b.entries()[i].value;
    const auto& tc = c.entries()[i].value;
    for (std::int64_t k = 0; k < ta.numel(); ++k) {
      if (ta[k] != tb[k]) identical = false;
      if (ta[k] != tc[k]) differs = true;
    }
  }
  CHECK(identical);
  CHECK(differs);

  // conv1 weights: fan_in = in_channels * 5 * 5 = 25.
  const auto& w1 = a.entries()[0].value;
  const float bound = std::sqrt(1.0f / 25.0f);
  CHECK(all_in(w1, -bound, bound));
}

TEST_CASE("salience net maps an HCQT grid to a sigmoid salience map") {
  ParamStore store;
  nets::SalienceNet net(store, {}, 7);
  autodiff::Tape<float> tape;
  auto bound = nets::bind_params(store, tape);
  auto x = tape.leaf(rand_tensor({1, 12, 30}, 3, 0.0f, 1.0f), false);
  auto y = net.forward(bound, x);
  REQUIRE(y.shape() == std::vector<std::int64_t>{12, 30});
  CHECK(all_in(y.data(), 0.0f, 1.0f));

  // Zeroed output layer pins every sigmoid at exactly 0.5.
  store.entry(store.index_of("salience/conv3/w")).value.fill(0.0f);
  store.entry(store.index_of("salience/conv3/b")).value.fill(0.0f);
  autodiff::Tape<float> t2;
  auto b2 = nets::bind_params(store, t2);
  auto y2 = net.forward(b2, t2.leaf(rand_tensor({1, 4, 9}, 4, 0.0f, 1.0f), false));
  for (std::int64_t i = 0; i < y2.numel(); ++i) CHECK(y2.data()[i] == 0.5f);

  autodiff::Tape<float> t3;
  auto b3 = nets::bind_params(store, t3);
  CHECK_THROWS(net.forward(b3, t3.leaf(Tensor<float>({2, 4, 9}), false)));
}

TEST_CASE("assignment net emits J sigmoid maps and passes gradient to its input") {
  ParamStore store;
  nets::AssignmentNetConfig cfg;
  cfg.voices = 3;
  nets::AssignmentNet net(store, cfg, 9);
  autodiff::Tape<float> tape;
  auto bound = nets::bind_params(store, tape);
  auto s = tape.leaf(rand_tensor({10, 24}, 5, 0.0f, 1.0f), true);
  auto maps = net.forward(bound, s);
  REQUIRE(maps.size() == 3);
  for (const auto& m : maps) {
    REQUIRE(m.shape() == std::vector<std::int64_t>{10, 24});
    CHECK(all_in(m.data(), 0.0f, 1.0f));
  }

  auto root = ops::sum(ops::add_n(maps));
  tape.backward(root);
  float gsum = 0.0f;
  for (std::int64_t i = 0; i < s.grad().numel(); ++i) gsum += std::abs(s.grad()[i]);
  CHECK(gsum > 0.0f);
}

TEST_CASE("encoder and decoder produce positive finite source parameters") {
  ParamStore store;
  nets::EncoderConfig ecfg;
  ecfg.in_bins = 33;
  ecfg.hidden = 20;
  ecfg.latent = 8;
  nets::MixtureEncoder enc(store, ecfg, 11);
  nets::DecoderConfig dcfg;
  dcfg.latent = 8;
  dcfg.voices = 4;
  dcfg.hidden = 16;
  dcfg.harmonics = 6;
  dcfg.noise_bands = 5;
  nets::SourceDecoder dec(store, dcfg, 11);

  autodiff::Tape<float> tape;
  auto bound = nets::bind_params(store, tape);
  const std::int64_t L = 7;
  auto z = enc.forward(bound, tape.leaf(rand_tensor({L, 33}, 6, 0.0f, 3.0f), false));
  REQUIRE(z.shape() == std::vector<std::int64_t>{L, 8});

  Tensor<float> f0({L});
  for (std::int64_t l = 0; l < L; ++l) f0.data()[l] = 200.0f + 10.0f * static_cast<float>(l);
  auto f0v = tape.leaf(f0, false);
  auto sp0 = dec.forward(bound, z, f0v, 0);
  REQUIRE(sp0.harm.shape() == std::vector<std::int64_t>{L, 6});
  REQUIRE(sp0.amp.shape() == std::vector<std::int64_t>{L});
  REQUIRE(sp0.noise.shape() == std::vector<std::int64_t>{L, 5});
  for (std::int64_t i = 0; i < sp0.harm.numel(); ++i) CHECK(sp0.harm.data()[i] > 0.0f);
  for (std::int64_t i = 0; i < sp0.amp.numel(); ++i) CHECK(sp0.amp.data()[i] > 0.0f);
  for (std::int64_t i = 0; i < sp0.noise.numel(); ++i) CHECK(sp0.noise.data()[i] > 0.0f);

  // The voice one-hot changes the conditioning, so another voice must differ.
  auto sp1 = dec.forward(bound, z, f0v, 1);
  bool differs = false;
  for (std::int64_t i = 0; i < sp0.harm.numel(); ++i)
    if (sp0.harm.data()[i] != sp1.harm.data()[i]) differs = true;
  CHECK(differs);
  CHECK_THROWS(dec.forward(bound, z, f0v, 4));

  autodiff::Tape<float> t2;
  auto b2 = nets::bind_params(store, t2);
  CHECK_THROWS(enc.forward(b2, t2.leaf(Tensor<float>({L, 32}), false)));
}

TEST_CASE("oracle salience places unit bumps at rounded F0 bins") {
  salience::FreqGrid g;

  std::vector<std::vector<double>> one = {{440.0, 0.0, 440.0}};
  auto m = nets::oracle_salience(one, g, 1.0);
  REQUIRE(m.shape() == std::vector<std::int64_t>{3, 360});
  CHECK(m.at(0, 225) == 1.0f);
  CHECK(m.at(0, 224) == doctest::Approx(std::exp(-0.5)).epsilon(1e-5));
  for (std::int64_t k = 0; k < 360; ++k) CHECK(m.at(1, k) == 0.0f);  // unvoiced frame

  // Two voices an octave apart: peaks 60 bins apart, both exactly 1.
  std::vector<std::vector<double>> oct = {{220.0}, {440.0}};
  auto mo = nets::oracle_salience(oct, g, 1.0);
  CHECK(mo.at(0, 165) == 1.0f);
  CHECK(mo.at(0, 225) == 1.0f);

  // Coincident voices clamp at 1.
  std::vector<std::vector<double>> dup = {{330.0}, {330.0}};
  auto md = nets::oracle_salience(dup, g, 1.0);
  for (std::int64_t k = 0; k < 360; ++k) CHECK(md.at(0, k) <= 1.0f);
  CHECK(md.at(0, g.nearest_bin(330.0)) == 1.0f);

  // Out-of-grid F0 clamps to the edge bin.
  std::vector<std::vector<double>> low = {{10.0}};
  auto ml = nets::oracle_salience(low, g, 1.0);
  CHECK(ml.at(0, 0) == 1.0f);

  CHECK_THROWS(nets::oracle_salience(one, g, 0.0));
}

TEST_CASE("assignment net trained toward a fixed mixture map reduces the loss") {
  ParamStore store;
  nets::AssignmentNetConfig cfg;
  cfg.voices = 2;
  cfg.channels = 4;
  nets::AssignmentNet net(store, cfg, 21);

  const Tensor<float> target = rand_tensor({6, 16}, 8, 0.0f, 1.0f);
  const Tensor<float> input = rand_tensor({6, 16}, 9, 0.0f, 1.0f);

  const float lr = 0.5f;
  double prev = 0.0;
  int drops = 0;
  const int steps = 200;
  for (int step = 0; step < steps; ++step) {
    autodiff::Tape<float> tape;
    auto bound = nets::bind_params(store, tape);
    auto maps = net.forward(bound, tape.leaf(input, false));
    auto mixed = ops::add_n(maps);
    auto loss = ops::mse(mixed, tape.constant(target));
    const double now = loss.data()[0];
    tape.backward(loss);
    for (std::size_t i = 0; i < store.size(); ++i) {
      auto& e = store.entries()[i];
      if (!e.trainable) continue;
      const auto& gv = bound.leaves[i].grad();
      for (std::int64_t k = 0; k < e.value.numel(); ++k)
        e.value.data()[k] -= lr * gv[k];
    }
    if (step > 0 && now < prev) ++drops;
    prev = now;
  }
  // Descent is monotone in at least 95% of steps on this fixed fixture.
  CHECK(drops >= static_cast<int>(0.95 * (steps - 1)));
}
