#include <cmath>
#include <cstdint>
#include <vector>

#include "doctest.h"
#include "voxsep/core/rng.h"
#include "voxsep/core/tensor.h"
#include "voxsep/metrics/metrics.h"

using namespace voxsep;

namespace {

Tensor<float> rand_signal(std::int64_t n, std::uint64_t seed) {
  Tensor<float> x({n});
  Rng rng(seed);
  rng.fill_uniform(x.data(), static_cast<std::size_t>(n), -1.0f, 1.0f);
  return x;
}

// Independent per-frame oracle: multiplicative pitch bounds instead of cent
// logs, explicit octave search instead of modular folding.
metrics::PitchScores brute_force_pitch(const std::vector<double>& ref,
                                       const std::vector<double>& est) {
  const double up = std::pow(2.0, 50.0 / 1200.0), down = 1.0 / up;
  std::int64_t voiced = 0, rpa = 0, rca = 0, oa = 0;
  for (std::size_t l = 0; l < ref.size(); ++l) {
    if (ref[l] <= 0.0) {
      if (est[l] <= 0.0) ++oa;
      continue;
    }
    ++voiced;
    if (est[l] <= 0.0) continue;
    const bool plain = est[l] >= ref[l] * down && est[l] <= ref[l] * up;
    if (plain) {
      ++rpa;
      ++oa;
    }
    bool chroma = false;
    for (int k = -12; k <= 12; ++k) {
      const double folded = est[l] * std::pow(2.0, static_cast<double>(k));
      if (folded >= ref[l] * down && folded <= ref[l] * up) chroma = true;
    }
    if (chroma) ++rca;
  }
  metrics::PitchScores p;
  const auto frac = [](std::int64_t h, std::int64_t t) {
    return t == 0 ? 1.0 : static_cast<double>(h) / static_cast<double>(t);
  };
  p.rpa = frac(rpa, voiced);
  p.rca = frac(rca, voiced);
  p.oa = frac(oa, static_cast<std::int64_t>(ref.size()));
  return p;
}

}  // namespace

TEST_CASE("si_sdr clamps perfect and rescaled estimates to 100 dB") {
  auto s = rand_signal(512, 1);
  CHECK(metrics::si_sdr(s, s) == 100.0);

  Tensor<float> twice({512});
  for (std::int64_t i = 0; i < 512; ++i) twice.data()[i] = 2.0f * s[i];
  CHECK(metrics::si_sdr(s, twice) == 100.0);
}

TEST_CASE("si_sdr hand example: orthogonal error of equal energy gives 0 dB") {
  Tensor<float> s = Tensor<float>::from({1.0f, 0.0f}, {2});
  Tensor<float> sh = Tensor<float>::from({1.0f, 1.0f}, {2});
  CHECK(metrics::si_sdr(s, sh) == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("si_sdr is invariant to estimate and reference scaling within 1e-9 dB") {
  auto s = rand_signal(1000, 2);
  auto sh = rand_signal(1000, 3);
  const double base = metrics::si_sdr(s, sh);
  // Power-of-two factors scale float samples exactly, isolating the metric's
  // own invariance from input quantization.
  for (float c : {0.25f, 0.5f, -2.0f, 8.0f, 1024.0f}) {
    Tensor<float> se({1000}), she({1000});
    for (std::int64_t i = 0; i < 1000; ++i) {
      se.data()[i] = c * s[i];
      she.data()[i] = c * sh[i];
    }
    CHECK(std::abs(metrics::si_sdr(s, she) - base) <= 1e-9);
    CHECK(std::abs(metrics::si_sdr(se, sh) - base) <= 1e-9);
  }

  // In double the property holds for arbitrary nonzero factors.
  std::vector<double> sd(1000), shd(1000);
  for (std::int64_t i = 0; i < 1000; ++i) {
    sd[static_cast<std::size_t>(i)] = s[i];
    shd[static_cast<std::size_t>(i)] = sh[i];
  }
  const double base_d = metrics::si_sdr(sd.data(), shd.data(), 1000);
  for (double c : {0.1, 3.0, -7.3, 1e-3, 997.0}) {
    std::vector<double> sde(1000), shde(1000);
    for (std::size_t i = 0; i < 1000; ++i) {
      sde[i] = c * sd[i];
      shde[i] = c * shd[i];
    }
    CHECK(std::abs(metrics::si_sdr(sd.data(), shde.data(), 1000) - base_d) <= 1e-9);
    CHECK(std::abs(metrics::si_sdr(sde.data(), shd.data(), 1000) - base_d) <= 1e-9);
  }
}

TEST_CASE("si_sdr rejects a silent reference") {
  Tensor<float> zero({64});
  auto sh = rand_signal(64, 4);
  CHECK_THROWS(metrics::si_sdr(zero, sh));
  CHECK_THROWS(metrics::si_sdr(Tensor<float>({0}), Tensor<float>({0})));
}

TEST_CASE("pitch accuracy on exact, octave, and over-voiced estimates") {
  std::vector<double> ref(100), est(100);
  for (int l = 0; l < 100; ++l) ref[l] = est[l] = 200.0 + l;
  auto p = metrics::pitch_accuracy(ref, est);
  CHECK(p.oa == 1.0);
  CHECK(p.rpa == 1.0);
  CHECK(p.rca == 1.0);

  // Octave-up estimate: raw accuracy collapses, chroma accuracy survives.
  for (int l = 0; l < 100; ++l) est[l] = 2.0 * ref[l];
  p = metrics::pitch_accuracy(ref, est);
  CHECK(p.rpa == 0.0);
  CHECK(p.rca == 1.0);
  CHECK(p.oa == 0.0);

  // 80 voiced frames matched, pitch reported on the 20 unvoiced ones.
  for (int l = 80; l < 100; ++l) ref[l] = 0.0;
  for (int l = 0; l < 100; ++l) est[l] = l < 80 ? ref[l] : 300.0;
  p = metrics::pitch_accuracy(ref, est);
  CHECK(p.rpa == 1.0);
  CHECK(p.oa == doctest::Approx(0.8));

  CHECK_THROWS(metrics::pitch_accuracy(ref, std::vector<double>(99)));
}

TEST_CASE("pitch accuracy equals the brute-force oracle on 100 random tracks") {
  Rng rng(77);
  for (int t = 0; t < 100; ++t) {
    const std::int64_t L = rng.uniform_int(1, 60);
    std::vector<double> ref(static_cast<std::size_t>(L)), est(static_cast<std::size_t>(L));
    for (std::int64_t l = 0; l < L; ++l) {
      ref[static_cast<std::size_t>(l)] = rng.uniform() < 0.2 ? 0.0 : rng.uniform(60.0, 1500.0);
      const double pick = rng.uniform();
      if (pick < 0.2) {
        est[static_cast<std::size_t>(l)] = 0.0;
      } else if (pick < 0.5 && ref[static_cast<std::size_t>(l)] > 0.0) {
        // near-miss around the reference, sometimes octave-shifted
        const double oct = std::pow(2.0, static_cast<double>(rng.uniform_int(-2, 2)));
        est[static_cast<std::size_t>(l)] =
            ref[static_cast<std::size_t>(l)] * oct * std::pow(2.0, rng.uniform(-0.08, 0.08) / 12.0);
      } else {
        est[static_cast<std::size_t>(l)] = rng.uniform(60.0, 1500.0);
      }
    }
    const auto a = metrics::pitch_accuracy(ref, est);
    const auto b = brute_force_pitch(ref, est);
    CHECK(a.oa == b.oa);
    CHECK(a.rpa == b.rpa);
    CHECK(a.rca == b.rca);
    CHECK(a.rca >= a.rpa);
  }
}

TEST_CASE("mean and median aggregate pools with the midpoint convention") {
  CHECK(metrics::mean({1.0, 2.0, 6.0}) == doctest::Approx(3.0));
  CHECK(metrics::median({5.0, 1.0, 3.0}) == 3.0);
  CHECK(metrics::median({4.0, 1.0, 3.0, 2.0}) == doctest::Approx(2.5));
  CHECK_THROWS(metrics::median({}));

  metrics::MetricReport rep;
  rep.rows.push_back({"a", 0, 5.0, {1.0, 0.9, 0.95}});
  rep.rows.push_back({"a", 1, 7.0, {0.8, 0.7, 0.75}});
  const auto sdr = rep.column(&metrics::PairScores::si_sdr_db);
  CHECK(metrics::mean(sdr) == doctest::Approx(6.0));
  const auto rpa = rep.pitch_column(&metrics::PitchScores::rpa);
  CHECK(metrics::mean(rpa) == doctest::Approx(0.8));
}
