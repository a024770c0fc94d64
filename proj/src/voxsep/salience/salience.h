#pragma once

// Pitch-salience map utilities: the log-frequency bin grid, hard peak
// picking, voice range masks, and per-frame F0 extraction wired through the
// straight-through estimator so gradients reach the soft maps.

#include <cstdint>
#include <string>
#include <vector>

#include "voxsep/core/autodiff.h"
#include "voxsep/core/tensor.h"

namespace voxsep::salience {

// Bin m sits at fmin * 2^(m / bins_per_octave) Hz (20-cent steps by default).
struct FreqGrid {
  double fmin = 32.7;
  int bins_per_octave = 60;
  int n_bins = 360;

  double freq(int m) const;
  int nearest_bin(double f) const;  // nearest center in log-frequency, clamped to the grid
  template <typename T>
  Tensor<T> freq_vector() const;  // [n_bins]
};

// Per-frame hard decision: when the row maximum reaches `threshold`, a
// one-hot at that bin (ties resolve to the lower bin); otherwise all zeros.
template <typename T>
Tensor<T> binarize(const Tensor<T>& s, T threshold);  // [L, M] -> [L, M]

// 1.0 for bins whose center lies inside [lo_hz, hi_hz] (closed), else 0.0.
template <typename T>
Tensor<T> range_mask(const FreqGrid& g, double lo_hz, double hi_hz);  // [M]

template <typename T>
struct F0Extraction {
  autodiff::Value<T> f0;  // [L]: hard peak frequency, 0 when unvoiced
  Tensor<T> binary;       // [L, M] hard map the forward pass used
};

// Forward: f0_l = sum_m freq_m * binarize(s)_lm. Backward: the hard map is a
// straight-through copy of s, so d f0_l / d s_lm = freq_m for every frame.
template <typename T>
F0Extraction<T> extract_f0(autodiff::Value<T> s, const FreqGrid& g, T threshold);

// Salience dump: "SALI", u32 J, L, M, then J*L*M little-endian f32 row-major.
void write_salience_dump(const std::string& path, const std::vector<Tensor<float>>& maps);
std::vector<Tensor<float>> read_salience_dump(const std::string& path);

}  // namespace voxsep::salience
