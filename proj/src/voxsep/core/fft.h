#pragma once

// Iterative radix-2 FFT, float and double, power-of-two sizes only (every
// transform size in this codebase is a power of two). Plans (bit-reversal +
// twiddles) are cached per size behind a mutex; transforms themselves are
// reentrant.

#include <complex>
#include <cstddef>
#include <vector>

namespace voxsep::fft {

bool is_pow2(std::size_t n);

// In-place DFT, e^{-i 2 pi k n / N} convention; inverse applies 1/N.
template <typename T>
void fft(std::complex<T>* a, std::size_t n, bool inverse);

// Real-input FFT via N/2 complex packing. X must hold n/2+1 bins. n >= 2.
template <typename T>
void rfft(const T* x, std::size_t n, std::complex<T>* X);

// Exact inverse of rfft: imaginary parts of X[0] and X[n/2] are ignored.
template <typename T>
void irfft(const std::complex<T>* X, std::size_t n, T* x);

// Adjoint of irfft as a linear map R^n -> C^{n/2+1}:
// out_k = (c_k / n) * rfft(g)_k with c = 1 at DC/Nyquist and 2 elsewhere.
template <typename T>
void irfft_adjoint(const T* g, std::size_t n, std::complex<T>* out);

}  // namespace voxsep::fft
