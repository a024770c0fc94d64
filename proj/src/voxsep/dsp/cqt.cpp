#include "voxsep/dsp/cqt.h"

#include <algorithm>
#include <cmath>

#include "voxsep/common.h"
#include "voxsep/core/fft.h"

namespace voxsep::dsp {

namespace {
constexpr double kPi = 3.14159265358979323846;
constexpr double kKernelThreshold = 1e-4;  // relative to the kernel's spectral peak
}  // namespace

HarmonicCqt::HarmonicCqt(CqtConfig cfg) : cfg_(std::move(cfg)) {
  VX_CHECK(cfg_.sample_rate > 0 && cfg_.hop > 0 && cfg_.n_bins > 0 && cfg_.bins_per_octave > 0,
           "cqt: bad configuration");
  VX_CHECK(!cfg_.harmonics.empty(), "cqt: need at least one harmonic");
  const double q = 1.0 / (std::pow(2.0, 1.0 / cfg_.bins_per_octave) - 1.0);

  // Longest kernel sets the frame FFT size.
  double lowest = cfg_.fmin * cfg_.harmonics[0];
  for (double h : cfg_.harmonics) lowest = std::min(lowest, cfg_.fmin * h);
  VX_CHECK(lowest > 0.0, "cqt: lowest analyzed frequency must be positive");
  const double max_len = q * cfg_.sample_rate / lowest;
  nfft_ = 1;
  while (nfft_ < static_cast<std::int64_t>(std::ceil(max_len))) nfft_ <<= 1;

  std::vector<std::complex<double>> time(static_cast<std::size_t>(nfft_));
  kernels_.resize(cfg_.harmonics.size());
  for (std::size_t hi = 0; hi < cfg_.harmonics.size(); ++hi) {
    kernels_[hi].resize(static_cast<std::size_t>(cfg_.n_bins));
    for (int m = 0; m < cfg_.n_bins; ++m) {
      const double f = cfg_.harmonics[hi] * bin_freq(m);
      SparseKernel& sk = kernels_[hi][static_cast<std::size_t>(m)];
      if (f >= 0.5 * cfg_.sample_rate) continue;  // above Nyquist: bin stays zero
      std::int64_t len = std::llround(q * cfg_.sample_rate / f);
      len = std::min(len, nfft_);
      std::fill(time.begin(), time.end(), std::complex<double>(0.0, 0.0));
      const std::int64_t start = nfft_ / 2 - len / 2;
      double wsum = 0.0;
      for (std::int64_t i = 0; i < len; ++i) {
        const double w =
            len > 1 ? 0.5 * (1.0 - std::cos(2.0 * kPi * static_cast<double>(i) / (len - 1))) : 1.0;
        wsum += w;
      }
      for (std::int64_t i = 0; i < len; ++i) {
        const double w =
            len > 1 ? 0.5 * (1.0 - std::cos(2.0 * kPi * static_cast<double>(i) / (len - 1))) : 1.0;
        const double t = static_cast<double>(start + i - nfft_ / 2);
        const double ph = 2.0 * kPi * f * t / cfg_.sample_rate;
        time[static_cast<std::size_t>(start + i)] =
            (w / wsum) * std::complex<double>(std::cos(ph), std::sin(ph));
      }
      fft::fft(time.data(), nfft_, false);
      double peak = 0.0;
      for (std::int64_t i = 0; i < nfft_; ++i) peak = std::max(peak, std::abs(time[static_cast<std::size_t>(i)]));
      const double thr = kKernelThreshold * peak;
      for (std::int64_t i = 0; i < nfft_; ++i) {
        if (std::abs(time[static_cast<std::size_t>(i)]) >= thr) {
          sk.idx.push_back(static_cast<std::int32_t>(i));
          sk.conj_val.push_back(std::conj(time[static_cast<std::size_t>(i)]));
        }
      }
    }
  }
}

double HarmonicCqt::bin_freq(int m) const {
  return cfg_.fmin * std::pow(2.0, static_cast<double>(m) / cfg_.bins_per_octave);
}

Tensor<float> HarmonicCqt::compute(const float* x, std::int64_t n) const {
  VX_CHECK(n > 0, "cqt: empty input");
  const std::int64_t L = frames_for(n);
  const std::int64_t H = static_cast<std::int64_t>(cfg_.harmonics.size());
  const std::int64_t M = cfg_.n_bins;
  Tensor<float> out({H, L, M});

  const std::int64_t kb = nfft_ / 2;  // rfft bins - 1
  std::vector<double> frame(static_cast<std::size_t>(nfft_));
  std::vector<std::complex<double>> spec(static_cast<std::size_t>(kb + 1));
  for (std::int64_t l = 0; l < L; ++l) {
    const std::int64_t start = l * cfg_.hop - nfft_ / 2;
    for (std::int64_t i = 0; i < nfft_; ++i) {
      const std::int64_t s = start + i;
      frame[static_cast<std::size_t>(i)] = (s >= 0 && s < n) ? static_cast<double>(x[s]) : 0.0;
    }
    fft::rfft(frame.data(), nfft_, spec.data());
    for (std::int64_t hi = 0; hi < H; ++hi) {
      for (std::int64_t m = 0; m < M; ++m) {
        const SparseKernel& sk = kernels_[static_cast<std::size_t>(hi)][static_cast<std::size_t>(m)];
        std::complex<double> acc(0.0, 0.0);
        for (std::size_t j = 0; j < sk.idx.size(); ++j) {
          const std::int32_t f = sk.idx[j];
          // real input: X[nfft - f] = conj(X[f])
          const std::complex<double> xv =
              f <= kb ? spec[static_cast<std::size_t>(f)]
                      : std::conj(spec[static_cast<std::size_t>(nfft_ - f)]);
          acc += sk.conj_val[j] * xv;
        }
        out.at(hi, l, m) = static_cast<float>(std::abs(acc) / static_cast<double>(nfft_));
      }
    }
  }

  if (cfg_.log_compress) {
    for (std::int64_t i = 0; i < out.numel(); ++i)
      out[i] = std::log1p(out[i]);
  }
  if (cfg_.normalize) {
    float mx = 0.0f;
    for (std::int64_t i = 0; i < out.numel(); ++i) mx = std::max(mx, out[i]);
    if (mx > 0.0f)
      for (std::int64_t i = 0; i < out.numel(); ++i) out[i] /= mx;
  }
  return out;
}

}  // namespace voxsep::dsp
