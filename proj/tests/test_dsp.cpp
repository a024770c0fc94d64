#include <cmath>
#include <complex>
#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "voxsep/core/fft.h"
#include "voxsep/core/ops.h"
#include "voxsep/core/rng.h"
#include "voxsep/dsp/cqt.h"
#include "voxsep/dsp/resample.h"
#include "voxsep/dsp/stft.h"
#include "voxsep/dsp/wav.h"

using voxsep::Rng;
using voxsep::Tensor;
namespace dsp = voxsep::dsp;
namespace ops = voxsep::ops;

namespace {

constexpr double kPi = 3.14159265358979323846;

std::vector<float> sine(double freq, int sr, std::int64_t n, double amp = 0.8) {
  std::vector<float> x(static_cast<std::size_t>(n));
  for (std::int64_t i = 0; i < n; ++i)
    x[static_cast<std::size_t>(i)] = static_cast<float>(amp * std::sin(2.0 * kPi * freq * i / sr));
  return x;
}

void write_raw(const std::string& path, const std::vector<unsigned char>& bytes) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

void push_u32(std::vector<unsigned char>& v, std::uint32_t x) {
  for (int i = 0; i < 4; ++i) v.push_back(static_cast<unsigned char>(x >> (8 * i)));
}
void push_u16(std::vector<unsigned char>& v, std::uint16_t x) {
  v.push_back(static_cast<unsigned char>(x));
  v.push_back(static_cast<unsigned char>(x >> 8));
}

std::vector<unsigned char> tiny_wav(std::uint16_t fmt, std::uint16_t channels, std::uint32_t rate,
                                    std::uint16_t bits) {
  std::vector<unsigned char> v;
  const std::uint32_t data_bytes = 8;
  v.insert(v.end(), {'R', 'I', 'F', 'F'});
  push_u32(v, 36 + data_bytes);
  v.insert(v.end(), {'W', 'A', 'V', 'E'});
  v.insert(v.end(), {'f', 'm', 't', ' '});
  push_u32(v, 16);
  push_u16(v, fmt);
  push_u16(v, channels);
  push_u32(v, rate);
  push_u32(v, rate * channels * bits / 8);
  push_u16(v, static_cast<std::uint16_t>(channels * bits / 8));
  push_u16(v, bits);
  v.insert(v.end(), {'d', 'a', 't', 'a'});
  push_u32(v, data_bytes);
  for (std::uint32_t i = 0; i < data_bytes; ++i) v.push_back(0);
  return v;
}

}  // namespace

TEST_CASE("wav float32 round-trip is bitwise") {
  std::vector<float> x(777);
  Rng rng(42);
  rng.fill_uniform(x.data(), x.size(), -0.9f, 0.9f);
  const std::string path = "tmp_rt_f32.wav";
  dsp::write_wav_float32(path, x.data(), static_cast<std::int64_t>(x.size()), 16000);
  const dsp::WavData w = dsp::read_wav(path);
  REQUIRE(w.sample_rate == 16000);
  REQUIRE(w.samples.numel() == 777);
  for (std::size_t i = 0; i < x.size(); ++i) CHECK(w.samples[static_cast<std::int64_t>(i)] == x[i]);
  std::remove(path.c_str());
}

TEST_CASE("wav pcm16 round-trip is within one quantization step") {
  std::vector<float> x(512);
  Rng rng(43);
  rng.fill_uniform(x.data(), x.size(), -0.99f, 0.99f);
  const std::string path = "tmp_rt_p16.wav";
  dsp::write_wav_pcm16(path, x.data(), static_cast<std::int64_t>(x.size()), 22050);
  const dsp::WavData w = dsp::read_wav(path);
  REQUIRE(w.sample_rate == 22050);
  for (std::size_t i = 0; i < x.size(); ++i)
    CHECK(std::abs(w.samples[static_cast<std::int64_t>(i)] - x[i]) < 1.0f / 32768.0f);
  std::remove(path.c_str());
}

TEST_CASE("wav reader rejects unsupported files") {
  struct Bad {
    const char* name;
    std::vector<unsigned char> bytes;
  };
  const std::vector<Bad> cases = {
      {"tmp_bad_stereo.wav", tiny_wav(1, 2, 16000, 16)},
      {"tmp_bad_rate.wav", tiny_wav(1, 1, 8000, 16)},
      {"tmp_bad_bits.wav", tiny_wav(1, 1, 16000, 24)},
      {"tmp_bad_fmt.wav", tiny_wav(7, 1, 16000, 16)},
      {"tmp_bad_f64.wav", tiny_wav(3, 1, 22050, 64)},
  };
  for (const auto& c : cases) {
    write_raw(c.name, c.bytes);
    CHECK_THROWS(dsp::read_wav(c.name));
    std::remove(c.name);
  }
  write_raw("tmp_bad_riff.wav", {'N', 'O', 'P', 'E'});
  CHECK_THROWS(dsp::read_wav("tmp_bad_riff.wav"));
  std::remove("tmp_bad_riff.wav");
}

TEST_CASE("stft shape matches centered framing") {
  const auto x = sine(440.0, 16000, 64000);
  const Tensor<float> m = dsp::stft_mag_tensor(x.data(), 64000, 512, 256);
  CHECK(m.dim(0) == 251);
  CHECK(m.dim(1) == 257);
}

TEST_CASE("a 440 Hz tone lands in stft bin 14 at 16 kHz / 512") {
  const auto x = sine(440.0, 16000, 64000);
  const Tensor<float> m = dsp::stft_mag_tensor(x.data(), 64000, 512, 256);
  const std::int64_t l = m.dim(0) / 2;
  std::int64_t best = 0;
  for (std::int64_t k = 1; k < m.dim(1); ++k)
    if (m.at(l, k) > m.at(l, best)) best = k;
  CHECK(best == 14);  // 440 * 512 / 16000 = 14.08
}

TEST_CASE("istft inverts stft below 1e-6") {
  const std::int64_t n = 8192;
  std::vector<float> x(static_cast<std::size_t>(n));
  Rng rng(7);
  rng.fill_uniform(x.data(), x.size(), -0.8f, 0.8f);
  const auto spec = dsp::stft_complex(x.data(), n, 512, 256);
  const Tensor<float> y = dsp::istft(spec, n);
  float worst = 0.0f;
  for (std::int64_t i = 0; i < n; ++i) worst = std::max(worst, std::abs(y[i] - x[static_cast<std::size_t>(i)]));
  CHECK(worst < 1e-6f);
}

TEST_CASE("istft round-trip in double is near machine precision") {
  const std::int64_t n = 4096;
  std::vector<double> x(static_cast<std::size_t>(n));
  Rng rng(8);
  rng.fill_uniform(x.data(), x.size(), -0.8, 0.8);
  const auto spec = dsp::stft_complex(x.data(), n, 256, 64);
  const Tensor<double> y = dsp::istft(spec, n);
  double worst = 0.0;
  for (std::int64_t i = 0; i < n; ++i) worst = std::max(worst, std::abs(y[i] - x[static_cast<std::size_t>(i)]));
  CHECK(worst < 1e-12);
}

TEST_CASE("istft rejects window/hop pairs with coverage holes") {
  const std::int64_t n = 2048;
  const auto x = sine(200.0, 16000, n);
  auto spec = dsp::stft_complex(x.data(), n, 256, 256);  // hann zero at frame starts
  CHECK_THROWS(dsp::istft(spec, n));
}

TEST_CASE("op-layer stft magnitudes equal the plain transform bitwise") {
  const std::int64_t n = 3000;
  std::vector<float> x(static_cast<std::size_t>(n));
  Rng rng(9);
  rng.fill_uniform(x.data(), x.size(), -0.8f, 0.8f);
  const Tensor<float> plain = dsp::stft_mag_tensor(x.data(), n, 128, 32);

  voxsep::autodiff::Tape<float> tape;
  auto xv = tape.leaf(Tensor<float>::from(x, {n}), false);
  auto mag = ops::stft_mag(xv, 128, 32, dsp::hann_window<float>(128));
  REQUIRE(mag.data().same_shape(plain));
  for (std::int64_t i = 0; i < plain.numel(); ++i) CHECK(mag.data()[i] == plain[i]);
}

TEST_CASE("resampling 16k to 22.05k keeps a tone in place") {
  const auto x = sine(440.0, 16000, 64000);
  const auto y = dsp::resample(x.data(), 64000, 16000, 22050);
  REQUIRE(static_cast<std::int64_t>(y.size()) == 88200);

  // windowed spectrum of an interior chunk
  const std::int64_t w = 8192, off = 30000;
  std::vector<double> seg(static_cast<std::size_t>(w));
  for (std::int64_t i = 0; i < w; ++i)
    seg[static_cast<std::size_t>(i)] =
        y[static_cast<std::size_t>(off + i)] * 0.5 * (1.0 - std::cos(2.0 * kPi * i / w));
  std::vector<std::complex<double>> spec(static_cast<std::size_t>(w / 2 + 1));
  voxsep::fft::rfft(seg.data(), w, spec.data());
  std::int64_t best = 1;
  for (std::int64_t k = 1; k <= w / 2; ++k)
    if (std::abs(spec[static_cast<std::size_t>(k)]) > std::abs(spec[static_cast<std::size_t>(best)])) best = k;
  CHECK(best == std::llround(440.0 * w / 22050.0));

  // amplitude preserved (interior RMS, away from edge taper)
  double rx = 0.0, ry = 0.0;
  for (std::int64_t i = 8000; i < 56000; ++i) rx += static_cast<double>(x[static_cast<std::size_t>(i)]) * x[static_cast<std::size_t>(i)];
  for (std::int64_t i = 11025; i < 77175; ++i) ry += static_cast<double>(y[static_cast<std::size_t>(i)]) * y[static_cast<std::size_t>(i)];
  rx = std::sqrt(rx / 48000.0);
  ry = std::sqrt(ry / 66150.0);
  CHECK(std::abs(ry / rx - 1.0) < 0.01);
}

TEST_CASE("constant-q transform localizes tones on the log grid") {
  dsp::CqtConfig cfg;
  const dsp::HarmonicCqt cqt(cfg);
  CHECK(cqt.bin_freq(0) == doctest::Approx(32.7));
  CHECK(cqt.bin_freq(225) == doctest::Approx(439.95).epsilon(1e-3));

  const std::int64_t n = 88200;
  const auto x440 = sine(440.0, 22050, n);
  const Tensor<float> s = cqt.compute(x440.data(), n);
  REQUIRE(s.dim(0) == 1);
  REQUIRE(s.dim(1) == 345);
  REQUIRE(s.dim(2) == 360);

  const std::int64_t l = 172;
  std::int64_t best = 0;
  for (std::int64_t m = 1; m < 360; ++m)
    if (s.at(0, l, m) > s.at(0, l, best)) best = m;
  CHECK(best == 225);

  float mx = 0.0f;
  for (std::int64_t i = 0; i < s.numel(); ++i) mx = std::max(mx, s[i]);
  CHECK(mx == doctest::Approx(1.0f));

  const auto x65 = sine(65.4, 22050, n);
  const Tensor<float> s2 = cqt.compute(x65.data(), n);
  best = 0;
  for (std::int64_t m = 1; m < 360; ++m)
    if (s2.at(0, l, m) > s2.at(0, l, best)) best = m;
  CHECK(best == 60);
}
