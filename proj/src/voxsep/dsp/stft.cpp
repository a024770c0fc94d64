#include "voxsep/dsp/stft.h"

#include <algorithm>
#include <cmath>

#include "voxsep/common.h"
#include "voxsep/core/fft.h"

namespace voxsep::dsp {

template <typename T>
ComplexSpec<T> stft_complex(const T* x, std::int64_t n, std::int64_t win, std::int64_t hop) {
  Tensor<T> frames = frame_signal(x, n, win, hop);
  const Tensor<T> w = hann_window<T>(win);
  mul_rows_inplace(frames, w.data());
  ComplexSpec<T> out;
  out.L = frames.dim(0);
  out.win = win;
  out.hop = hop;
  out.v.resize(static_cast<std::size_t>(out.L * out.bins()));
  for (std::int64_t l = 0; l < out.L; ++l) fft::rfft(frames.data() + l * win, win, out.row(l));
  return out;
}

template <typename T>
Tensor<T> stft_mag_tensor(const T* x, std::int64_t n, std::int64_t win, std::int64_t hop) {
  Tensor<T> frames = frame_signal(x, n, win, hop);
  const Tensor<T> w = hann_window<T>(win);
  mul_rows_inplace(frames, w.data());
  return rfft_mag_rows(frames, static_cast<std::vector<std::complex<T>>*>(nullptr));
}

template <typename T>
Tensor<T> istft(const ComplexSpec<T>& spec, std::int64_t out_len) {
  VX_CHECK(out_len > 0, "istft: output length must be positive");
  const std::int64_t win = spec.win, hop = spec.hop, L = spec.L, half = win / 2;
  const Tensor<T> w = hann_window<T>(win);
  Tensor<T> num({out_len});
  std::vector<T> den(static_cast<std::size_t>(out_len), T(0));
  std::vector<T> frame(static_cast<std::size_t>(win));
  for (std::int64_t l = 0; l < L; ++l) {
    fft::irfft(spec.row(l), win, frame.data());
    const std::int64_t start = l * hop - half;
    const std::int64_t i0 = start < 0 ? -start : 0;
    const std::int64_t i1 = std::min(win, out_len - start);
    for (std::int64_t i = i0; i < i1; ++i) {
      num[start + i] += frame[static_cast<std::size_t>(i)] * w[i];
      den[static_cast<std::size_t>(start + i)] += w[i] * w[i];
    }
  }
  for (std::int64_t t = 0; t < out_len; ++t) {
    VX_CHECK(den[static_cast<std::size_t>(t)] > T(1e-6),
             "istft: window/hop pair does not cover the signal (overlap-add sum below threshold)");
    num[t] /= den[static_cast<std::size_t>(t)];
  }
  return num;
}

template ComplexSpec<float> stft_complex<float>(const float*, std::int64_t, std::int64_t, std::int64_t);
template ComplexSpec<double> stft_complex<double>(const double*, std::int64_t, std::int64_t, std::int64_t);
template Tensor<float> stft_mag_tensor<float>(const float*, std::int64_t, std::int64_t, std::int64_t);
template Tensor<double> stft_mag_tensor<double>(const double*, std::int64_t, std::int64_t, std::int64_t);
template Tensor<float> istft<float>(const ComplexSpec<float>&, std::int64_t);
template Tensor<double> istft<double>(const ComplexSpec<double>&, std::int64_t);

}  // namespace voxsep::dsp
