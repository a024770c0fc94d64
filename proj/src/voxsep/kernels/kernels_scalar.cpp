// Scalar reference kernels. These define the semantics; SIMD variants must
// agree with them within the tolerances checked in test_kernels.

#include "voxsep/kernels/kernels.h"

#include <algorithm>
#include <cmath>

namespace voxsep::kern {
namespace {

template <typename T> void s_add(const T* a, const T* b, T* d, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) d[i] = a[i] + b[i];
}
template <typename T> void s_sub(const T* a, const T* b, T* d, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) d[i] = a[i] - b[i];
}
template <typename T> void s_mul(const T* a, const T* b, T* d, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) d[i] = a[i] * b[i];
}
template <typename T> void s_div(const T* a, const T* b, T* d, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) d[i] = a[i] / b[i];
}
template <typename T> void s_scale(const T* x, T a, T* d, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) d[i] = a * x[i];
}
template <typename T> void s_axpy(T a, const T* x, T* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += a * x[i];
}
template <typename T> void s_mul_acc(const T* a, const T* b, T* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += a[i] * b[i];
}

template <typename T> void s_vexp(const T* x, T* d, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) d[i] = std::exp(x[i]);
}
template <typename T> void s_vlog_eps(const T* x, T eps, T* d, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) d[i] = std::log(x[i] + eps);
}
template <typename T> void s_vsigmoid(const T* x, T* d, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) d[i] = T(1) / (T(1) + std::exp(-x[i]));
}
template <typename T> void s_vsin(const T* x, T* d, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) d[i] = std::sin(x[i]);
}
template <typename T> void s_vabs(const T* x, T* d, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) d[i] = std::abs(x[i]);
}
template <typename T> void s_leaky_relu(const T* x, T slope, T* d, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) d[i] = x[i] > T(0) ? x[i] : slope * x[i];
}
template <typename T> void s_leaky_relu_grad(const T* x, const T* g, T slope, T* d, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) d[i] += g[i] * (x[i] > T(0) ? T(1) : slope);
}

template <typename T> T s_sum(const T* x, std::size_t n) {
  T acc = 0;
  for (std::size_t i = 0; i < n; ++i) acc += x[i];
  return acc;
}
template <typename T> T s_dot(const T* a, const T* b, std::size_t n) {
  T acc = 0;
  for (std::size_t i = 0; i < n; ++i) acc += a[i] * b[i];
  return acc;
}
template <typename T> T s_abs_sum(const T* x, std::size_t n) {
  T acc = 0;
  for (std::size_t i = 0; i < n; ++i) acc += std::abs(x[i]);
  return acc;
}
template <typename T> T s_abs_diff_sum(const T* a, const T* b, std::size_t n) {
  T acc = 0;
  for (std::size_t i = 0; i < n; ++i) acc += std::abs(a[i] - b[i]);
  return acc;
}
template <typename T> T s_sq_diff_sum(const T* a, const T* b, std::size_t n) {
  T acc = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const T d = a[i] - b[i];
    acc += d * d;
  }
  return acc;
}
template <typename T> T s_max_val(const T* x, std::size_t n) {
  T m = x[0];
  for (std::size_t i = 1; i < n; ++i) m = std::max(m, x[i]);
  return m;
}

template <typename T>
void s_gemm(std::size_t m, std::size_t n, std::size_t k, const T* A, const T* B, T* C, bool accumulate) {
  for (std::size_t i = 0; i < m; ++i) {
    T* c = C + i * n;
    if (!accumulate) std::fill(c, c + n, T(0));
    const T* a = A + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const T ap = a[p];
      const T* b = B + p * n;
      for (std::size_t j = 0; j < n; ++j) c[j] += ap * b[j];
    }
  }
}

template <typename T> KernelSet<T> make_scalar() {
  KernelSet<T> s;
  s.add = s_add<T>;
  s.sub = s_sub<T>;
  s.mul = s_mul<T>;
  s.div = s_div<T>;
  s.scale = s_scale<T>;
  s.axpy = s_axpy<T>;
  s.mul_acc = s_mul_acc<T>;
  s.vexp = s_vexp<T>;
  s.vlog_eps = s_vlog_eps<T>;
  s.vsigmoid = s_vsigmoid<T>;
  s.vsin = s_vsin<T>;
  s.vabs = s_vabs<T>;
  s.leaky_relu = s_leaky_relu<T>;
  s.leaky_relu_grad = s_leaky_relu_grad<T>;
  s.sum = s_sum<T>;
  s.dot = s_dot<T>;
  s.abs_sum = s_abs_sum<T>;
  s.abs_diff_sum = s_abs_diff_sum<T>;
  s.sq_diff_sum = s_sq_diff_sum<T>;
  s.max_val = s_max_val<T>;
  s.gemm = s_gemm<T>;
  return s;
}

}  // namespace

template <> const KernelSet<float>& scalar_table<float>() {
  static const KernelSet<float> t = make_scalar<float>();
  return t;
}
template <> const KernelSet<double>& scalar_table<double>() {
  static const KernelSet<double> t = make_scalar<double>();
  return t;
}

}  // namespace voxsep::kern
