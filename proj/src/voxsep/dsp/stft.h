#pragma once

// Non-differentiable STFT paths: complex analysis for soft masking and the
// least-squares inverse. Framing and windowing share stft_core.h with the
// differentiable ops, so magnitudes agree bitwise between the two paths.

#include <complex>
#include <cstdint>
#include <vector>

#include "voxsep/core/tensor.h"
#include "voxsep/dsp/stft_core.h"

namespace voxsep::dsp {

template <typename T>
struct ComplexSpec {
  std::vector<std::complex<T>> v;  // row-major [L, win/2 + 1]
  std::int64_t L = 0;
  std::int64_t win = 0;
  std::int64_t hop = 0;
  std::int64_t bins() const { return win / 2 + 1; }
  std::complex<T>* row(std::int64_t l) { return v.data() + l * bins(); }
  const std::complex<T>* row(std::int64_t l) const { return v.data() + l * bins(); }
};

// Hann-windowed, center-padded complex STFT.
template <typename T>
ComplexSpec<T> stft_complex(const T* x, std::int64_t n, std::int64_t win, std::int64_t hop);

// Hann-windowed magnitude STFT; identical to the op-layer forward.
template <typename T>
Tensor<T> stft_mag_tensor(const T* x, std::int64_t n, std::int64_t win, std::int64_t hop);

// Least-squares inverse: windowed overlap-add divided by the window-square
// sum. Errors out when the window/hop pair leaves coverage holes.
template <typename T>
Tensor<T> istft(const ComplexSpec<T>& spec, std::int64_t out_len);

}  // namespace voxsep::dsp
