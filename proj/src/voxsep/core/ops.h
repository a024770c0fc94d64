#pragma once

// Differentiable op library over the tape. Ops validate shapes, compute
// forward through the kernel layer, and attach closures that accumulate into
// parent gradients. Constants (window vectors, range masks, frequency grids)
// are passed as plain tensors.

#include <complex>
#include <cstdint>
#include <vector>

#include "voxsep/core/autodiff.h"
#include "voxsep/core/tensor.h"

namespace voxsep::ops {

template <typename T> using Value = autodiff::Value<T>;
template <typename T> using Tape = autodiff::Tape<T>;

// Arithmetic, same shape unless noted.
template <typename T> Value<T> add(Value<T> a, Value<T> b);
template <typename T> Value<T> sub(Value<T> a, Value<T> b);
template <typename T> Value<T> mul(Value<T> a, Value<T> b);
template <typename T> Value<T> div(Value<T> a, Value<T> b);
template <typename T> Value<T> scale(Value<T> a, T c);
template <typename T> Value<T> add_n(const std::vector<Value<T>>& xs);
template <typename T> Value<T> mul_const(Value<T> a, const Tensor<T>& c);  // same shape constant

// Maps.
template <typename T> Value<T> sigmoid(Value<T> a);
template <typename T> Value<T> exp(Value<T> a);
template <typename T> Value<T> log_eps(Value<T> a, T eps);  // log(a + eps)
template <typename T> Value<T> abs(Value<T> a);
template <typename T> Value<T> leaky_relu(Value<T> a, T slope);
template <typename T> Value<T> exp_sigmoid(Value<T> a);  // 2*sigmoid(a)^ln(10) + 1e-7

// Reductions to scalar values.
template <typename T> Value<T> sum(Value<T> a);
template <typename T> Value<T> mean(Value<T> a);
template <typename T> Value<T> mse(Value<T> a, Value<T> b);      // mean squared error over all entries
template <typename T> Value<T> l1_norm(Value<T> a);              // sum |a|
template <typename T> Value<T> l1_diff(Value<T> a, Value<T> b);  // sum |a-b|

// Linear algebra. Row-major 2D.
template <typename T> Value<T> matmul(Value<T> a, Value<T> b);                // [m,k] x [k,n]
template <typename T> Value<T> linear(Value<T> x, Value<T> w, Value<T> b);    // x[m,k], w[out,k], b[out] -> x w^T + b
template <typename T> Value<T> conv1d(Value<T> x, Value<T> w, Value<T> b);    // x[Cin,L], w[Cout,Cin,K] odd K, same pad
template <typename T> Value<T> conv2d(Value<T> x, Value<T> w, Value<T> b);    // x[Cin,H,W], w[Cout,Cin,Kh,Kw] odd, same pad

// Shape and indexing.
template <typename T> Value<T> reshape(Value<T> a, std::vector<std::int64_t> shape);
template <typename T> Value<T> slice_rows(Value<T> a, std::int64_t r0, std::int64_t r1);  // axis 0, [r0, r1)
template <typename T> Value<T> concat_cols(const std::vector<Value<T>>& parts);           // rank 2, equal rows
template <typename T> Value<T> gather_rows(Value<T> a, const std::vector<std::int64_t>& idx);
template <typename T> Value<T> mul_cols(Value<T> a, const Tensor<T>& r);    // y_ij = a_ij * r_j, constant r
template <typename T> Value<T> scale_rows(Value<T> a, Value<T> c);          // y_ij = a_ij * c_i
template <typename T> Value<T> normalize_rows(Value<T> a);                  // y_ij = a_ij / sum_j a_ij, sums > 0
template <typename T> Value<T> rows_dot(Value<T> a, const Tensor<T>& f);    // y_i = sum_j a_ij f_j, constant f

// Signal ops. frame() center-pads with win/2 zeros each side, so
// L = floor(n / hop) + 1; overlap_add() is its exact adjoint.
template <typename T> Value<T> frame(Value<T> x, std::int64_t win, std::int64_t hop);
template <typename T> Value<T> overlap_add(Value<T> frames, std::int64_t hop, std::int64_t out_len);
template <typename T> Value<T> rfft_magnitude(Value<T> frames);  // [L,win] -> [L,win/2+1]
template <typename T> Value<T> straight_through(Value<T> soft, Tensor<T> hard);

// Windowed magnitude STFT as a composition: frame -> window -> rfft magnitude.
template <typename T> Value<T> stft_mag(Value<T> x, std::int64_t win, std::int64_t hop, const Tensor<T>& window);

// Plain-tensor helper shared with the non-differentiable transform paths.
template <typename T> Tensor<T> transpose2d(const Tensor<T>& a);

}  // namespace voxsep::ops
