#pragma once

// Harmonic constant-Q transform: log-spaced frequency analysis used as the
// pitch-salience input representation. Kernels are Hann-windowed complex
// exponentials, length Q*sr/f per bin, evaluated per frame in the frequency
// domain through sparse spectra.

#include <complex>
#include <cstdint>
#include <vector>

#include "voxsep/core/tensor.h"

namespace voxsep::dsp {

struct CqtConfig {
  int sample_rate = 22050;
  std::int64_t hop = 256;
  double fmin = 32.7;
  int bins_per_octave = 60;
  int n_bins = 360;
  std::vector<double> harmonics = {1.0};
  bool log_compress = true;  // log(1 + m) on magnitudes
  bool normalize = true;     // divide by the per-call maximum
};

class HarmonicCqt {
 public:
  explicit HarmonicCqt(CqtConfig cfg);

  // x at cfg.sample_rate. Output [n_harmonics, L, n_bins] with
  // L = n / hop + 1 (centered frames).
  Tensor<float> compute(const float* x, std::int64_t n) const;

  std::int64_t frames_for(std::int64_t n) const { return n / cfg_.hop + 1; }
  double bin_freq(int m) const;
  const CqtConfig& config() const { return cfg_; }

 private:
  struct SparseKernel {
    std::vector<std::int32_t> idx;               // full-spectrum FFT bin
    std::vector<std::complex<double>> conj_val;  // pre-conjugated kernel spectrum
  };

  CqtConfig cfg_;
  std::int64_t nfft_ = 0;
  std::vector<std::vector<SparseKernel>> kernels_;  // [harmonic][bin]
};

}  // namespace voxsep::dsp
