#pragma once

// Differentiable source synthesis: a harmonic oscillator bank driven by
// frame-rate controls, plus filtered-noise residuals. Phases are integrated
// from F0 as constants; gradients flow only through amplitude controls, by
// construction.

#include <cstdint>
#include <vector>

#include "voxsep/core/autodiff.h"
#include "voxsep/core/gradcheck.h"
#include "voxsep/core/tensor.h"
#include "voxsep/dsp/stft.h"

namespace voxsep::synth {

// [L, K]: 1 while harmonic k+1 stays below cutoff_hz, 0 from the first
// aliasing harmonic on. Unvoiced frames (f0 = 0) pass everything; their
// output is silenced through the envelope instead.
template <typename T>
Tensor<T> nyquist_mask(const Tensor<T>& f0, std::int64_t n_harmonics, double cutoff_hz);

template <typename T>
Tensor<T> voiced_mask(const Tensor<T>& f0);  // [L]: 1 where f0 > 0

// y(t) = env(t) * sum_k amps_k(t) * sin(phi_k(t)), controls linearly
// upsampled between frame centers l*hop. phi_k integrates k * f0 at the
// sample rate in double, phi(0) = 0; between a voiced and an unvoiced frame
// the voiced frequency is held, between two unvoiced frames it is 0.
// f0 is deliberately a plain tensor: no gradient path into the phase.
template <typename T>
autodiff::Value<T> oscillator_bank(autodiff::Value<T> amps /*[L,K]*/,
                                   autodiff::Value<T> env /*[L]*/, const Tensor<T>& f0 /*[L]*/,
                                   std::int64_t hop, int sample_rate, std::int64_t out_len);

// Fixed white-noise excitation, analyzed once per excerpt.
template <typename T>
struct NoiseFrames {
  dsp::ComplexSpec<T> spec;  // rfft of hann-windowed noise frames
  std::int64_t out_len = 0;
  std::vector<T> ola_den;  // window-square overlap-add sum per sample
};

template <typename T>
NoiseFrames<T> make_noise_frames(std::uint64_t seed, std::uint64_t stream, std::int64_t n,
                                 std::int64_t win, std::int64_t hop);

// Filters the stored noise frames with per-frame band magnitudes: bands sit
// on bins {0, s, 2s, ...} with s = (win/2) / (B-1), linearly interpolated
// across bins, multiplied into the noise spectra, then inverted by
// least-squares overlap-add. Linear in the bands, so the adjoint is exact.
template <typename T>
autodiff::Value<T> noise_filter(autodiff::Value<T> bands /*[L,B]*/, const NoiseFrames<T>& nf);

// Wiener-style soft masking on the mixture spectrogram (double precision,
// not differentiable): mask_j = (|Y_j|^2 + eps) / (sum_k |Y_k|^2 + J eps).
struct SoftMaskResult {
  std::vector<Tensor<float>> stems;
  double max_mask_dev = 0.0;  // max |sum_j mask_j - 1| over tf bins
};
SoftMaskResult soft_mask_separate(const std::vector<Tensor<float>>& estimates,
                                  const Tensor<float>& mixture, std::int64_t win, std::int64_t hop);

// FD fixtures for the two synthesis ops (run by the gradient-check gate).
std::vector<gradcheck::Fixture> gradcheck_fixtures();

}  // namespace voxsep::synth
