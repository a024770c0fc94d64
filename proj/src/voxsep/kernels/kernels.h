#pragma once

// Flat-array math kernels behind the tensor and synthesis layers.
// Every kernel has a scalar reference implementation; on x86 an AVX2+FMA
// variant is selected at runtime. Tables are immutable after first use, so
// concurrent readers are safe.

#include <cstddef>

namespace voxsep::kern {

template <typename T>
struct KernelSet {
  // Elementwise. dst may alias a or b.
  void (*add)(const T* a, const T* b, T* dst, std::size_t n);
  void (*sub)(const T* a, const T* b, T* dst, std::size_t n);
  void (*mul)(const T* a, const T* b, T* dst, std::size_t n);
  void (*div)(const T* a, const T* b, T* dst, std::size_t n);
  void (*scale)(const T* x, T a, T* dst, std::size_t n);         // dst = a*x
  void (*axpy)(T a, const T* x, T* y, std::size_t n);            // y += a*x
  void (*mul_acc)(const T* a, const T* b, T* y, std::size_t n);  // y += a*b

  // Maps. vsin requires arguments already wrapped into [-pi, pi].
  void (*vexp)(const T* x, T* dst, std::size_t n);
  void (*vlog_eps)(const T* x, T eps, T* dst, std::size_t n);    // log(x+eps), x+eps > 0
  void (*vsigmoid)(const T* x, T* dst, std::size_t n);
  void (*vsin)(const T* x, T* dst, std::size_t n);
  void (*vabs)(const T* x, T* dst, std::size_t n);
  void (*leaky_relu)(const T* x, T slope, T* dst, std::size_t n);
  void (*leaky_relu_grad)(const T* x, const T* g, T slope, T* dst, std::size_t n);  // dst += g * (x>0 ? 1 : slope)

  // Reductions.
  T (*sum)(const T* x, std::size_t n);
  T (*dot)(const T* a, const T* b, std::size_t n);
  T (*abs_sum)(const T* x, std::size_t n);
  T (*abs_diff_sum)(const T* a, const T* b, std::size_t n);
  T (*sq_diff_sum)(const T* a, const T* b, std::size_t n);
  T (*max_val)(const T* x, std::size_t n);  // n >= 1

  // Row-major C[m x n] = (accumulate ? C : 0) + A[m x k] * B[k x n]. C must not alias A or B.
  void (*gemm)(std::size_t m, std::size_t n, std::size_t k, const T* A, const T* B, T* C, bool accumulate);
};

// Active table: AVX2 when the CPU supports it, unless VOXSEP_KERNELS=scalar.
template <typename T> const KernelSet<T>& active();

// Fixed tables for equivalence tests.
template <typename T> const KernelSet<T>& scalar_table();
template <typename T> const KernelSet<T>* avx2_table();  // nullptr when unsupported or not compiled in

bool cpu_has_avx2();
const char* active_backend_name();  // "avx2" or "scalar"

}  // namespace voxsep::kern
