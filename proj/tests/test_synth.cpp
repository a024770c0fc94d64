#include <cmath>
#include <complex>
#include <vector>

#include "doctest.h"
#include "voxsep/core/ops.h"
#include "voxsep/core/rng.h"
#include "voxsep/dsp/stft.h"
#include "voxsep/synth/synth.h"

using voxsep::Rng;
using voxsep::Tensor;
namespace ops = voxsep::ops;
namespace dsp = voxsep::dsp;
namespace synth = voxsep::synth;

namespace {

constexpr double kPi = 3.14159265358979323846;

// Constant-pitch render with the first harmonic only.
Tensor<float> render_tone(double f0_hz, std::int64_t L, std::int64_t K, std::int64_t hop, int sr,
                          std::int64_t n, float gain) {
  voxsep::autodiff::Tape<float> tape;
  Tensor<float> amps({L, K});
  for (std::int64_t l = 0; l < L; ++l) amps.at(l, 0) = 1.0f;
  Tensor<float> env = Tensor<float>::full({L}, gain);
  Tensor<float> f0 = Tensor<float>::full({L}, static_cast<float>(f0_hz));
  auto y = synth::oscillator_bank(tape.leaf(amps, false), tape.leaf(env, false), f0, hop, sr, n);
  return y.data();
}

double rms(const Tensor<float>& x) {
  double acc = 0.0;
  for (std::int64_t i = 0; i < x.numel(); ++i) acc += static_cast<double>(x[i]) * x[i];
  return std::sqrt(acc / static_cast<double>(x.numel()));
}

}  // namespace

TEST_CASE("oscillator with one harmonic reproduces a sine") {
  const int sr = 16000;
  const std::int64_t n = 4000;
  const Tensor<float> y = render_tone(440.0, 16, 4, 256, sr, n, 1.0f);
  double worst = 0.0;
  for (std::int64_t t = 0; t < n; ++t) {
    const double ref = std::sin(2.0 * kPi * 440.0 * t / sr);
    worst = std::max(worst, std::abs(static_cast<double>(y[t]) - ref));
  }
  CHECK(worst < 1e-5);
}

TEST_CASE("oscillator pitch lands on the right stft bin across the range") {
  const int sr = 16000;
  const std::int64_t n = 64000;
  for (double f0 : {90.0, 200.0, 440.0, 880.0}) {
    const Tensor<float> y = render_tone(f0, 251, 4, 256, sr, n, 0.8f);
    const Tensor<float> m = dsp::stft_mag_tensor(y.data(), n, 512, 256);
    const std::int64_t l = m.dim(0) / 2;
    std::int64_t best = 0;
    for (std::int64_t k = 1; k < m.dim(1); ++k)
      if (m.at(l, k) > m.at(l, best)) best = k;
    CHECK(std::abs(static_cast<double>(best) - f0 * 512.0 / sr) <= 1.0);
  }
}

TEST_CASE("oscillator output scales linearly with the envelope") {
  const Tensor<float> a = render_tone(220.0, 32, 4, 128, 16000, 4096, 1.0f);
  const Tensor<float> b = render_tone(220.0, 32, 4, 128, 16000, 4096, 0.5f);
  CHECK(rms(b) / rms(a) == doctest::Approx(0.5).epsilon(0.01));
}

TEST_CASE("unvoiced frames synthesize exact silence") {
  voxsep::autodiff::Tape<float> tape;
  const std::int64_t L = 8, K = 6, n = 2048;
  Tensor<float> amps = Tensor<float>::full({L, K}, 0.3f);
  Tensor<float> f0({L});  // all zero: unvoiced
  Tensor<float> env = Tensor<float>::full({L}, 0.9f);
  auto y = synth::oscillator_bank(tape.leaf(amps, false), tape.leaf(env, false), f0, 256, 16000, n);
  for (std::int64_t t = 0; t < n; ++t) CHECK(y.data()[t] == 0.0f);
}

TEST_CASE("nyquist mask zeroes aliasing harmonics framewise") {
  Tensor<float> f0 = Tensor<float>::from({440.0f, 0.0f, 200.0f}, {3});
  const Tensor<float> m = synth::nyquist_mask(f0, 40, 8000.0);
  CHECK(m.at(0, 17) == 1.0f);  // 18 * 440 = 7920
  CHECK(m.at(0, 18) == 0.0f);  // 19 * 440 = 8360
  for (std::int64_t k = 0; k < 40; ++k) CHECK(m.at(1, k) == 1.0f);  // unvoiced passes all
  CHECK(m.at(2, 38) == 1.0f);  // 39 * 200 = 7800
  CHECK(m.at(2, 39) == 0.0f);  // 40 * 200 = 8000: at the cutoff counts as aliasing
}

TEST_CASE("flat bands reproduce the stored noise") {
  const std::int64_t n = 16000, win = 512, hop = 256;
  const auto nf = synth::make_noise_frames<float>(77, 3, n, win, hop);

  // replicate the generator's stream to recover the raw noise
  Rng rng = Rng::derive(77, {3, 0x4e4f4953ULL});
  std::vector<float> noise(static_cast<std::size_t>(n));
  rng.fill_uniform(noise.data(), noise.size(), -1.0f, 1.0f);

  voxsep::autodiff::Tape<float> tape;
  Tensor<float> bands = Tensor<float>::full({nf.spec.L, 65}, 1.0f);
  auto y = synth::noise_filter(tape.leaf(bands, false), nf);
  float worst = 0.0f;
  for (std::int64_t t = 0; t < n; ++t)
    worst = std::max(worst, std::abs(y.data()[t] - noise[static_cast<std::size_t>(t)]));
  CHECK(worst < 1e-6f);
}

TEST_CASE("band magnitudes shape the noise spectrum") {
  const std::int64_t n = 16000, win = 512, hop = 256;
  const auto nf = synth::make_noise_frames<float>(78, 4, n, win, hop);
  Rng rng = Rng::derive(78, {4, 0x4e4f4953ULL});
  std::vector<float> noise(static_cast<std::size_t>(n));
  rng.fill_uniform(noise.data(), noise.size(), -1.0f, 1.0f);

  // low half at 0.3, high half at 1.0 (step at band 32 = bin 128)
  voxsep::autodiff::Tape<float> tape;
  Tensor<float> bands({nf.spec.L, 65});
  for (std::int64_t l = 0; l < nf.spec.L; ++l)
    for (std::int64_t b = 0; b < 65; ++b) bands.at(l, b) = b < 32 ? 0.3f : 1.0f;
  auto y = synth::noise_filter(tape.leaf(bands, false), nf);

  const Tensor<float> py = dsp::stft_mag_tensor(y.data().data(), n, win, hop);
  const Tensor<float> pn = dsp::stft_mag_tensor(noise.data(), n, win, hop);
  auto welch_db = [&](std::int64_t k) {
    double sy = 0.0, sn = 0.0;
    for (std::int64_t l = 0; l < py.dim(0); ++l) {
      sy += static_cast<double>(py.at(l, k)) * py.at(l, k);
      sn += static_cast<double>(pn.at(l, k)) * pn.at(l, k);
    }
    return 10.0 * std::log10(sy / sn);
  };
  for (std::int64_t k : {20, 60, 100})
    CHECK(std::abs(welch_db(k) - 20.0 * std::log10(0.3)) < 3.0);
  for (std::int64_t k : {160, 200, 240})
    CHECK(std::abs(welch_db(k)) < 3.0);
}

TEST_CASE("noise filtering is linear in the band magnitudes") {
  const std::int64_t n = 4000, win = 256, hop = 64;
  const auto nf = synth::make_noise_frames<float>(79, 5, n, win, hop);
  Tensor<float> bands({nf.spec.L, 33});
  Rng rng(91);
  rng.fill_uniform(bands.data(), static_cast<std::size_t>(bands.numel()), 0.1f, 1.0f);
  Tensor<float> doubled = bands;
  for (std::int64_t i = 0; i < doubled.numel(); ++i) doubled[i] *= 2.0f;

  voxsep::autodiff::Tape<float> tape;
  auto y1 = synth::noise_filter(tape.leaf(bands, false), nf);
  auto y2 = synth::noise_filter(tape.leaf(doubled, false), nf);
  for (std::int64_t t = 0; t < n; ++t) {
    const float a = 2.0f * y1.data()[t], b = y2.data()[t];
    CHECK(std::abs(a - b) <= 1e-6f * std::max(1.0f, std::abs(a)));
  }
}

TEST_CASE("soft masks are conservative and rebuild the mixture") {
  const std::int64_t n = 16000;
  const int sr = 16000;
  Tensor<float> s1({n}), s2({n}), mix({n});
  for (std::int64_t t = 0; t < n; ++t) {
    s1[t] = static_cast<float>(0.6 * std::sin(2.0 * kPi * 220.0 * t / sr));
    s2[t] = static_cast<float>(0.5 * std::sin(2.0 * kPi * 1330.0 * t / sr));
    mix[t] = s1[t] + s2[t];
  }
  const auto res = synth::soft_mask_separate({s1, s2}, mix, 512, 256);
  REQUIRE(res.stems.size() == 2);
  CHECK(res.max_mask_dev <= 1e-6);

  float worst = 0.0f;
  for (std::int64_t t = 0; t < n; ++t)
    worst = std::max(worst, std::abs(res.stems[0][t] + res.stems[1][t] - mix[t]));
  CHECK(worst < 1e-5f);

  // masks keep each tone in its own stem
  auto corr = [n](const Tensor<float>& a, const Tensor<float>& b) {
    double num = 0.0, da = 0.0, db = 0.0;
    for (std::int64_t t = 1000; t < n - 1000; ++t) {
      num += static_cast<double>(a[t]) * b[t];
      da += static_cast<double>(a[t]) * a[t];
      db += static_cast<double>(b[t]) * b[t];
    }
    return num / std::sqrt(da * db);
  };
  CHECK(corr(res.stems[0], s1) > 0.95);
  CHECK(corr(res.stems[1], s2) > 0.95);
}

TEST_CASE("finite differences validate the synthesis ops") {
  for (const auto& f : synth::gradcheck_fixtures()) {
    const auto r = voxsep::gradcheck::run_fixture(f);
    INFO(f.name, " rel_err=", r.max_rel_err);
    CHECK(r.pass);
  }
}
