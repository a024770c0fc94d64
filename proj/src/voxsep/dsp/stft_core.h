#pragma once

// Tensor-level framing / windowing / spectrum routines shared by the
// differentiable ops and the plain transform paths, so both produce
// bit-identical forward results.

#include <complex>
#include <cstdint>
#include <vector>

#include "voxsep/common.h"
#include "voxsep/core/fft.h"
#include "voxsep/core/tensor.h"
#include "voxsep/kernels/kernels.h"

namespace voxsep::dsp {

// Periodic Hann window: w[i] = 0.5 * (1 - cos(2 pi i / n)).
template <typename T>
Tensor<T> hann_window(std::int64_t n) {
  VX_CHECK(n > 0, "hann_window: n must be positive");
  Tensor<T> w({n});
  const double step = 2.0 * 3.14159265358979323846 / static_cast<double>(n);
  for (std::int64_t i = 0; i < n; ++i)
    w.data()[i] = static_cast<T>(0.5 * (1.0 - std::cos(step * static_cast<double>(i))));
  return w;
}

// Frame count for a center-padded signal of n samples.
inline std::int64_t num_frames(std::int64_t n, std::int64_t hop) {
  return n / hop + 1;
}

// Center-padded framing: frame l starts at l*hop - win/2 in signal
// coordinates, out-of-range samples are zero. Output [L, win].
template <typename T>
Tensor<T> frame_signal(const T* x, std::int64_t n, std::int64_t win, std::int64_t hop) {
  VX_CHECK(n > 0 && win > 0 && hop > 0, "frame_signal: bad sizes");
  const std::int64_t L = num_frames(n, hop);
  const std::int64_t half = win / 2;
  Tensor<T> frames({L, win});
  for (std::int64_t l = 0; l < L; ++l) {
    const std::int64_t start = l * hop - half;
    T* row = frames.data() + l * win;
    for (std::int64_t i = 0; i < win; ++i) {
      const std::int64_t s = start + i;
      row[i] = (s >= 0 && s < n) ? x[s] : T(0);
    }
  }
  return frames;
}

// rows ⊙= rowvec, applied to each row.
template <typename T>
void mul_rows_inplace(Tensor<T>& rows, const T* rowvec) {
  const auto& K = kern::active<T>();
  const std::int64_t R = rows.dim(0), C = rows.numel() / rows.dim(0);
  std::vector<T> tmp(static_cast<std::size_t>(C));
  for (std::int64_t r = 0; r < R; ++r) {
    T* row = rows.data() + r * C;
    K.mul(row, rowvec, tmp.data(), static_cast<std::size_t>(C));
    std::copy(tmp.begin(), tmp.end(), row);
  }
}

// Per-row real FFT magnitudes. frames [L, win] -> [L, win/2+1]. If spectra
// is non-null it receives the complex spectra row-major (L * (win/2+1)).
template <typename T>
Tensor<T> rfft_mag_rows(const Tensor<T>& frames, std::vector<std::complex<T>>* spectra) {
  VX_CHECK(frames.rank() == 2, "rfft_mag_rows: need [L, win]");
  const std::int64_t L = frames.dim(0), win = frames.dim(1);
  VX_CHECK(fft::is_pow2(win), "rfft_mag_rows: window must be a power of two");
  const std::int64_t K = win / 2 + 1;
  Tensor<T> mags({L, K});
  std::vector<std::complex<T>> spec(static_cast<std::size_t>(K));
  if (spectra) spectra->resize(static_cast<std::size_t>(L * K));
  for (std::int64_t l = 0; l < L; ++l) {
    fft::rfft(frames.data() + l * win, win, spec.data());
    T* mrow = mags.data() + l * K;
    for (std::int64_t k = 0; k < K; ++k) mrow[k] = std::abs(spec[static_cast<std::size_t>(k)]);
    if (spectra) std::copy(spec.begin(), spec.end(), spectra->begin() + l * K);
  }
  return mags;
}

}  // namespace voxsep::dsp
