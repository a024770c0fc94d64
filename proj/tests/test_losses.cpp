#include <cmath>
#include <vector>

#include "doctest.h"
#include "voxsep/core/autodiff.h"
#include "voxsep/core/gradcheck.h"
#include "voxsep/core/ops.h"
#include "voxsep/core/rng.h"
#include "voxsep/core/tensor.h"
#include "voxsep/kernels/kernels.h"
#include "voxsep/losses/losses.h"
#include "voxsep/salience/salience.h"

using namespace voxsep;

namespace {

template <typename T>
Tensor<T> random_signal(std::int64_t n, std::uint64_t seed) {
  Tensor<T> x({n});
  Rng rng(seed);
  rng.fill_uniform(x.data(), static_cast<std::size_t>(n), T(-0.8), T(0.8));
  return x;
}

}  // namespace

TEST_CASE("spectral loss of a signal against itself is exactly zero") {
  losses::SpectralLossConfig cfg;  // production scales, largest 2048
  auto x = random_signal<float>(4096, 7);
  const auto target = losses::prepare_target<float>(x.data(), x.numel(), cfg);

  autodiff::Tape<float> tape;
  auto xh = tape.leaf(x, true);
  auto loss = losses::spectral_reconstruction<float>(xh, target, cfg);
  CHECK(loss.data()[0] == 0.0f);

  autodiff::Tape<double> dtape;
  auto xd = x.cast<double>();
  const auto dtarget = losses::prepare_target<double>(xd.data(), xd.numel(), cfg);
  auto loss_d = losses::spectral_reconstruction<double>(dtape.leaf(xd, true), dtarget, cfg);
  CHECK(loss_d.data()[0] == 0.0);
}

TEST_CASE("spectral loss separates distinct signals and rejects bad setups") {
  losses::SpectralLossConfig cfg;
  cfg.scales = {128, 64};
  auto a = random_signal<float>(512, 1);
  auto b = random_signal<float>(512, 2);
  const auto target = losses::prepare_target<float>(a.data(), 512, cfg);

  autodiff::Tape<float> tape;
  auto loss = losses::spectral_reconstruction<float>(tape.leaf(b, true), target, cfg);
  CHECK(loss.data()[0] > 1.0f);

  // Signal shorter than the largest scale.
  CHECK_THROWS(losses::prepare_target<float>(a.data(), 100, cfg));
  // Non power-of-two scale.
  losses::SpectralLossConfig bad;
  bad.scales = {96};
  CHECK_THROWS(losses::prepare_target<float>(a.data(), 512, bad));
  // Length mismatch between estimate and prepared target.
  autodiff::Tape<float> t2;
  auto short_leaf = t2.leaf(random_signal<float>(256, 3), true);
  CHECK_THROWS(losses::spectral_reconstruction<float>(short_leaf, target, cfg));
}

TEST_CASE("silent target pins the log floor at log(1e-7)") {
  losses::SpectralLossConfig cfg;
  cfg.scales = {64};
  Tensor<float> zero({256});
  const auto target = losses::prepare_target<float>(zero.data(), 256, cfg);
  const double floor = std::log(1e-7);  // -16.1181
  for (std::int64_t i = 0; i < target.log_mags[0].numel(); ++i)
    CHECK(target.log_mags[0][i] == doctest::Approx(floor).epsilon(1e-5));

  // Silence against silence is still exactly zero.
  autodiff::Tape<float> tape;
  auto loss = losses::spectral_reconstruction<float>(tape.leaf(zero, true), target, cfg);
  CHECK(loss.data()[0] == 0.0f);
}

TEST_CASE("mix consistency vanishes when assigned maps sum to the mixture") {
  const std::int64_t L = 6, M = 20;
  Tensor<float> mix({L, M});
  Rng rng(11);
  rng.fill_uniform(mix.data(), static_cast<std::size_t>(mix.numel()), 0.0f, 1.0f);

  autodiff::Tape<float> tape;
  // Power-of-two shares keep the float sum bitwise equal to the mixture.
  const float shares[3] = {0.25f, 0.25f, 0.5f};
  std::vector<autodiff::Value<float>> maps;
  for (float s : shares) {
    Tensor<float> part({L, M});
    const auto& K = kern::active<float>();
    K.scale(mix.data(), s, part.data(), static_cast<std::size_t>(mix.numel()));
    maps.push_back(tape.leaf(part, true));
  }
  CHECK(losses::mix_consistency<float>(maps, mix).data()[0] == 0.0f);

  // A single perturbed entry contributes delta^2 / (L*M).
  autodiff::Tape<float> t2;
  std::vector<autodiff::Value<float>> maps2;
  for (std::size_t j = 0; j < 3; ++j) {
    Tensor<float> part({L, M});
    kern::active<float>().scale(mix.data(), shares[j], part.data(),
                                static_cast<std::size_t>(mix.numel()));
    if (j == 0) part.data()[5] += 0.25f;
    maps2.push_back(t2.leaf(part, true));
  }
  const float got = losses::mix_consistency<float>(maps2, mix).data()[0];
  CHECK(got == doctest::Approx(0.25 * 0.25 / double(L * M)).epsilon(1e-5));
}

TEST_CASE("range penalty is zero inside the mask and counts leakage outside") {
  const std::int64_t L = 4, M = 12;
  Tensor<float> mask({M});
  for (std::int64_t m = 3; m <= 8; ++m) mask.data()[m] = 1.0f;

  Tensor<float> inside({L, M});
  Rng rng(12);
  for (std::int64_t l = 0; l < L; ++l)
    for (std::int64_t m = 3; m <= 8; ++m) inside.at(l, m) = static_cast<float>(rng.uniform(0.1, 1.0));

  autodiff::Tape<float> tape;
  std::vector<autodiff::Value<float>> maps = {tape.leaf(inside, true)};
  CHECK(losses::range_penalty<float>(maps, {mask}).data()[0] == 0.0f);

  Tensor<float> leaky = inside;
  leaky.at(1, 0) = 0.4f;
  leaky.at(2, 11) = 0.2f;
  autodiff::Tape<float> t2;
  std::vector<autodiff::Value<float>> maps2 = {t2.leaf(leaky, true)};
  const double expect = (0.4 * 0.4 + 0.2 * 0.2) / double(L * M);
  CHECK(losses::range_penalty<float>(maps2, {mask}).data()[0] ==
        doctest::Approx(expect).epsilon(1e-5));
}

TEST_CASE("binary pull vanishes on hard maps and matches MSE to the binarized map") {
  const std::int64_t L = 3, M = 10;
  Tensor<float> hard({L, M});
  hard.at(0, 2) = 1.0f;
  hard.at(1, 7) = 1.0f;  // row 2 stays unvoiced

  autodiff::Tape<float> tape;
  std::vector<autodiff::Value<float>> maps = {tape.leaf(hard, true)};
  CHECK(losses::binary_pull<float>(maps, 0.3f).data()[0] == 0.0f);

  Tensor<float> soft({L, M});
  Rng rng(13);
  rng.fill_uniform(soft.data(), static_cast<std::size_t>(soft.numel()), 0.05f, 0.95f);
  const Tensor<float> bin = salience::binarize(soft, 0.3f);
  double expect = 0.0;
  for (std::int64_t i = 0; i < soft.numel(); ++i) {
    const double d = double(soft[i]) - double(bin[i]);
    expect += d * d;
  }
  expect /= double(soft.numel());
  autodiff::Tape<float> t2;
  std::vector<autodiff::Value<float>> maps2 = {t2.leaf(soft, true)};
  CHECK(losses::binary_pull<float>(maps2, 0.3f).data()[0] == doctest::Approx(expect).epsilon(1e-5));
}

TEST_CASE("calibration balances terms against the reconstruction loss") {
  const auto w = losses::calibrate(2.0, 0.5, 8.0, 2.0);
  CHECK(w.alpha == doctest::Approx(4.0));
  CHECK(w.beta == doctest::Approx(0.25));
  CHECK(w.gamma == doctest::Approx(1.0));

  // Ratios clamp into [1e-9, 1e9]: guard rails against degenerate division,
  // wide enough that genuine scale gaps still calibrate through.
  const auto hi = losses::calibrate(1e6, 1e-12, 1.0, 1.0);
  CHECK(hi.alpha == doctest::Approx(1e9));
  const auto lo = losses::calibrate(1.0, 1e15, 1.0, 1.0);
  CHECK(lo.alpha == doctest::Approx(1e-9));

  // A zero term falls back to weight 1.0.
  const auto z = losses::calibrate(2.0, 0.0, 0.0, 4.0);
  CHECK(z.alpha == 1.0);
  CHECK(z.beta == 1.0);
  CHECK(z.gamma == doctest::Approx(0.5));
}

TEST_CASE("finite differences validate the loss gradients") {
  for (const auto& f : losses::gradcheck_fixtures()) {
    const auto r = voxsep::gradcheck::run_fixture(f);
    INFO(f.name, " rel_err=", r.max_rel_err);
    CHECK(r.pass);
  }
}
