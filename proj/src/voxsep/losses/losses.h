#pragma once

// Training losses: multiscale spectral reconstruction against a fixed
// target, and the three salience-assignment penalties (mixture consistency,
// range containment, binary pull) with automatic weight calibration.

#include <cstdint>
#include <vector>

#include "voxsep/core/autodiff.h"
#include "voxsep/core/gradcheck.h"
#include "voxsep/core/tensor.h"

namespace voxsep::losses {

struct SpectralLossConfig {
  std::vector<std::int64_t> scales = {2048, 1024, 512, 256, 128, 64};  // hop = scale / 4
  double log_eps = 1e-7;
};

// Target magnitudes per scale, precomputed through the same kernels as the
// differentiable path so that identical signals produce an exact zero loss.
template <typename T>
struct TargetSpectra {
  std::vector<Tensor<T>> mags;
  std::vector<Tensor<T>> log_mags;
  std::int64_t n = 0;
};

template <typename T>
TargetSpectra<T> prepare_target(const T* x, std::int64_t n, const SpectralLossConfig& cfg);

// sum over scales of |M - M_t|_1 + |log(M + eps) - log(M_t + eps)|_1.
template <typename T>
autodiff::Value<T> spectral_reconstruction(autodiff::Value<T> x_hat, const TargetSpectra<T>& target,
                                           const SpectralLossConfig& cfg);

// MSE(sum_j assigned_j, mixture_map).
template <typename T>
autodiff::Value<T> mix_consistency(const std::vector<autodiff::Value<T>>& assigned,
                                   const Tensor<T>& mixture_map);

// Same, but the mixture map carries gradients too (trainable salience net).
template <typename T>
autodiff::Value<T> mix_consistency(const std::vector<autodiff::Value<T>>& assigned,
                                   autodiff::Value<T> mixture_map);

// sum_j MSE(assigned_j, assigned_j ⊙ mask_j): pushes salience inside each
// voice range; gradients flow through both MSE arguments.
template <typename T>
autodiff::Value<T> range_penalty(const std::vector<autodiff::Value<T>>& assigned,
                                 const std::vector<Tensor<T>>& masks);

// sum_j MSE(assigned_j, binarize(assigned_j)): the hard map is a constant.
template <typename T>
autodiff::Value<T> binary_pull(const std::vector<autodiff::Value<T>>& assigned, T threshold);

struct LossWeights {
  double alpha = 1.0, beta = 1.0, gamma = 1.0;
};

// First-batch balancing: each weight is l_rec / term, clamped to
// [1e-6, 1e6]; a zero term falls back to 1.0 with a warning.
LossWeights calibrate(double l_rec, double l1, double l2, double l3);

std::vector<gradcheck::Fixture> gradcheck_fixtures();

}  // namespace voxsep::losses
