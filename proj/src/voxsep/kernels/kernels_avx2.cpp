// AVX2+FMA kernels. Compiled with -mavx2 -mfma; only reached when cpuid
// reports support. Float transcendentals use the classic Cephes polynomial
// range reductions (as in sse_mathfun); double transcendentals stay on libm
// since every hot transcendental loop in this codebase runs in float.

#include "voxsep/kernels/kernels.h"

#include <cmath>
#include <cstdint>
#include <immintrin.h>

namespace voxsep::kern {
namespace {

//----( float, 8-wide )----

inline float hsum(__m256 v) {
  __m128 lo = _mm256_castps256_ps128(v);
  __m128 hi = _mm256_extractf128_ps(v, 1);
  lo = _mm_add_ps(lo, hi);
  lo = _mm_add_ps(lo, _mm_movehl_ps(lo, lo));
  lo = _mm_add_ss(lo, _mm_shuffle_ps(lo, lo, 1));
  return _mm_cvtss_f32(lo);
}

inline float hmax(__m256 v) {
  __m128 lo = _mm256_castps256_ps128(v);
  __m128 hi = _mm256_extractf128_ps(v, 1);
  lo = _mm_max_ps(lo, hi);
  lo = _mm_max_ps(lo, _mm_movehl_ps(lo, lo));
  lo = _mm_max_ss(lo, _mm_shuffle_ps(lo, lo, 1));
  return _mm_cvtss_f32(lo);
}

inline __m256 abs_ps(__m256 v) {
  return _mm256_andnot_ps(_mm256_set1_ps(-0.0f), v);
}

// exp(x), Cephes style. Valid over the full float range (clamped).
inline __m256 exp_ps(__m256 x) {
  const __m256 hi = _mm256_set1_ps(88.3762626647950f);
  const __m256 lo = _mm256_set1_ps(-87.3365478515625f);
  x = _mm256_min_ps(_mm256_max_ps(x, lo), hi);

  const __m256 log2e = _mm256_set1_ps(1.44269504088896341f);
  __m256 fx = _mm256_fmadd_ps(x, log2e, _mm256_set1_ps(0.5f));
  fx = _mm256_floor_ps(fx);

  const __m256 c1 = _mm256_set1_ps(0.693359375f);
  const __m256 c2 = _mm256_set1_ps(-2.12194440e-4f);
  x = _mm256_fnmadd_ps(fx, c1, x);
  x = _mm256_fnmadd_ps(fx, c2, x);

  __m256 y = _mm256_set1_ps(1.9875691500e-4f);
  y = _mm256_fmadd_ps(y, x, _mm256_set1_ps(1.3981999507e-3f));
  y = _mm256_fmadd_ps(y, x, _mm256_set1_ps(8.3334519073e-3f));
  y = _mm256_fmadd_ps(y, x, _mm256_set1_ps(4.1665795894e-2f));
  y = _mm256_fmadd_ps(y, x, _mm256_set1_ps(1.6666665459e-1f));
  y = _mm256_fmadd_ps(y, x, _mm256_set1_ps(5.0000001201e-1f));
  y = _mm256_fmadd_ps(y, _mm256_mul_ps(x, x), _mm256_add_ps(x, _mm256_set1_ps(1.0f)));

  __m256i n = _mm256_cvttps_epi32(fx);
  n = _mm256_add_epi32(n, _mm256_set1_epi32(127));
  n = _mm256_slli_epi32(n, 23);
  return _mm256_mul_ps(y, _mm256_castsi256_ps(n));
}

// log(x) for x > 0.
inline __m256 log_ps(__m256 x) {
  const __m256i mant_mask = _mm256_set1_epi32(0x007fffff);
  const __m256i half_bits = _mm256_set1_epi32(0x3f000000);

  // Mantissa is forced into [0.5, 1), so the unbiased exponent is field-126.
  __m256i xi = _mm256_castps_si256(x);
  __m256 e = _mm256_cvtepi32_ps(_mm256_sub_epi32(_mm256_srli_epi32(xi, 23), _mm256_set1_epi32(126)));
  __m256 m = _mm256_castsi256_ps(_mm256_or_si256(_mm256_and_si256(xi, mant_mask), half_bits));

  const __m256 sqrthf = _mm256_set1_ps(0.707106781186547524f);
  __m256 below = _mm256_cmp_ps(m, sqrthf, _CMP_LT_OQ);
  e = _mm256_sub_ps(e, _mm256_and_ps(below, _mm256_set1_ps(1.0f)));
  m = _mm256_add_ps(m, _mm256_and_ps(below, m));
  m = _mm256_sub_ps(m, _mm256_set1_ps(1.0f));

  __m256 z = _mm256_mul_ps(m, m);
  __m256 y = _mm256_set1_ps(7.0376836292e-2f);
  y = _mm256_fmadd_ps(y, m, _mm256_set1_ps(-1.1514610310e-1f));
  y = _mm256_fmadd_ps(y, m, _mm256_set1_ps(1.1676998740e-1f));
  y = _mm256_fmadd_ps(y, m, _mm256_set1_ps(-1.2420140846e-1f));
  y = _mm256_fmadd_ps(y, m, _mm256_set1_ps(1.4249322787e-1f));
  y = _mm256_fmadd_ps(y, m, _mm256_set1_ps(-1.6668057665e-1f));
  y = _mm256_fmadd_ps(y, m, _mm256_set1_ps(2.0000714765e-1f));
  y = _mm256_fmadd_ps(y, m, _mm256_set1_ps(-2.4999993993e-1f));
  y = _mm256_fmadd_ps(y, m, _mm256_set1_ps(3.3333331174e-1f));
  y = _mm256_mul_ps(_mm256_mul_ps(y, m), z);

  y = _mm256_fmadd_ps(e, _mm256_set1_ps(-2.12194440e-4f), y);
  y = _mm256_fnmadd_ps(_mm256_set1_ps(0.5f), z, y);
  m = _mm256_add_ps(m, y);
  return _mm256_fmadd_ps(e, _mm256_set1_ps(0.693359375f), m);
}

// sin(x) for |x| <= pi (range reduction handles a few periods beyond).
inline __m256 sin_ps(__m256 x) {
  __m256 sign = _mm256_and_ps(x, _mm256_set1_ps(-0.0f));
  x = abs_ps(x);

  __m256 y = _mm256_mul_ps(x, _mm256_set1_ps(1.27323954473516f));  // 4/pi
  __m256i j = _mm256_cvttps_epi32(y);
  j = _mm256_add_epi32(j, _mm256_and_si256(j, _mm256_set1_epi32(1)));
  y = _mm256_cvtepi32_ps(j);

  __m256i flip = _mm256_slli_epi32(_mm256_and_si256(j, _mm256_set1_epi32(4)), 29);
  sign = _mm256_xor_ps(sign, _mm256_castsi256_ps(flip));
  __m256i cos_mask = _mm256_cmpeq_epi32(_mm256_and_si256(j, _mm256_set1_epi32(2)), _mm256_set1_epi32(2));

  x = _mm256_fmadd_ps(y, _mm256_set1_ps(-0.78515625f), x);
  x = _mm256_fmadd_ps(y, _mm256_set1_ps(-2.4187564849853515625e-4f), x);
  x = _mm256_fmadd_ps(y, _mm256_set1_ps(-3.77489497744594108e-8f), x);

  __m256 z = _mm256_mul_ps(x, x);

  __m256 pc = _mm256_set1_ps(2.443315711809948e-5f);
  pc = _mm256_fmadd_ps(pc, z, _mm256_set1_ps(-1.388731625493765e-3f));
  pc = _mm256_fmadd_ps(pc, z, _mm256_set1_ps(4.166664568298827e-2f));
  pc = _mm256_mul_ps(_mm256_mul_ps(pc, z), z);
  pc = _mm256_fnmadd_ps(z, _mm256_set1_ps(0.5f), pc);
  pc = _mm256_add_ps(pc, _mm256_set1_ps(1.0f));

  __m256 ps = _mm256_set1_ps(-1.9515295891e-4f);
  ps = _mm256_fmadd_ps(ps, z, _mm256_set1_ps(8.3321608736e-3f));
  ps = _mm256_fmadd_ps(ps, z, _mm256_set1_ps(-1.6666654611e-1f));
  ps = _mm256_mul_ps(_mm256_mul_ps(ps, z), x);
  ps = _mm256_add_ps(ps, x);

  __m256 r = _mm256_blendv_ps(ps, pc, _mm256_castsi256_ps(cos_mask));
  return _mm256_xor_ps(r, sign);
}

void f_add(const float* a, const float* b, float* d, std::size_t n) {
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8)
    _mm256_storeu_ps(d + i, _mm256_add_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i)));
  for (; i < n; ++i) d[i] = a[i] + b[i];
}
void f_sub(const float* a, const float* b, float* d, std::size_t n) {
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8)
    _mm256_storeu_ps(d + i, _mm256_sub_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i)));
  for (; i < n; ++i) d[i] = a[i] - b[i];
}
void f_mul(const float* a, const float* b, float* d, std::size_t n) {
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8)
    _mm256_storeu_ps(d + i, _mm256_mul_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i)));
  for (; i < n; ++i) d[i] = a[i] * b[i];
}
void f_div(const float* a, const float* b, float* d, std::size_t n) {
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8)
    _mm256_storeu_ps(d + i, _mm256_div_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i)));
  for (; i < n; ++i) d[i] = a[i] / b[i];
}
void f_scale(const float* x, float a, float* d, std::size_t n) {
  const __m256 va = _mm256_set1_ps(a);
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) _mm256_storeu_ps(d + i, _mm256_mul_ps(va, _mm256_loadu_ps(x + i)));
  for (; i < n; ++i) d[i] = a * x[i];
}
void f_axpy(float a, const float* x, float* y, std::size_t n) {
  const __m256 va = _mm256_set1_ps(a);
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8)
    _mm256_storeu_ps(y + i, _mm256_fmadd_ps(va, _mm256_loadu_ps(x + i), _mm256_loadu_ps(y + i)));
  for (; i < n; ++i) y[i] += a * x[i];
}
void f_mul_acc(const float* a, const float* b, float* y, std::size_t n) {
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8)
    _mm256_storeu_ps(y + i, _mm256_fmadd_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i), _mm256_loadu_ps(y + i)));
  for (; i < n; ++i) y[i] += a[i] * b[i];
}

void f_vexp(const float* x, float* d, std::size_t n) {
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) _mm256_storeu_ps(d + i, exp_ps(_mm256_loadu_ps(x + i)));
  if (i < n) {
    float tin[8], tout[8];
    for (std::size_t j = 0; j < n - i; ++j) tin[j] = x[i + j];
    for (std::size_t j = n - i; j < 8; ++j) tin[j] = 0.0f;
    _mm256_storeu_ps(tout, exp_ps(_mm256_loadu_ps(tin)));
    for (std::size_t j = 0; j < n - i; ++j) d[i + j] = tout[j];
  }
}
void f_vlog_eps(const float* x, float eps, float* d, std::size_t n) {
  const __m256 ve = _mm256_set1_ps(eps);
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) _mm256_storeu_ps(d + i, log_ps(_mm256_add_ps(_mm256_loadu_ps(x + i), ve)));
  if (i < n) {
    float tin[8], tout[8];
    for (std::size_t j = 0; j < n - i; ++j) tin[j] = x[i + j];
    for (std::size_t j = n - i; j < 8; ++j) tin[j] = 1.0f;
    _mm256_storeu_ps(tout, log_ps(_mm256_add_ps(_mm256_loadu_ps(tin), ve)));
    for (std::size_t j = 0; j < n - i; ++j) d[i + j] = tout[j];
  }
}
void f_vsigmoid(const float* x, float* d, std::size_t n) {
  const __m256 one = _mm256_set1_ps(1.0f);
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    __m256 e = exp_ps(_mm256_sub_ps(_mm256_setzero_ps(), _mm256_loadu_ps(x + i)));
    _mm256_storeu_ps(d + i, _mm256_div_ps(one, _mm256_add_ps(one, e)));
  }
  for (; i < n; ++i) d[i] = 1.0f / (1.0f + std::exp(-x[i]));
}
void f_vsin(const float* x, float* d, std::size_t n) {
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) _mm256_storeu_ps(d + i, sin_ps(_mm256_loadu_ps(x + i)));
  if (i < n) {
    float tin[8] = {0}, tout[8];
    for (std::size_t j = 0; j < n - i; ++j) tin[j] = x[i + j];
    _mm256_storeu_ps(tout, sin_ps(_mm256_loadu_ps(tin)));
    for (std::size_t j = 0; j < n - i; ++j) d[i + j] = tout[j];
  }
}
void f_vabs(const float* x, float* d, std::size_t n) {
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) _mm256_storeu_ps(d + i, abs_ps(_mm256_loadu_ps(x + i)));
  for (; i < n; ++i) d[i] = std::abs(x[i]);
}
void f_leaky_relu(const float* x, float slope, float* d, std::size_t n) {
  const __m256 vs = _mm256_set1_ps(slope);
  const __m256 zero = _mm256_setzero_ps();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    __m256 v = _mm256_loadu_ps(x + i);
    __m256 neg = _mm256_cmp_ps(v, zero, _CMP_LE_OQ);
    _mm256_storeu_ps(d + i, _mm256_blendv_ps(v, _mm256_mul_ps(vs, v), neg));
  }
  for (; i < n; ++i) d[i] = x[i] > 0.0f ? x[i] : slope * x[i];
}
void f_leaky_relu_grad(const float* x, const float* g, float slope, float* d, std::size_t n) {
  const __m256 vs = _mm256_set1_ps(slope);
  const __m256 one = _mm256_set1_ps(1.0f);
  const __m256 zero = _mm256_setzero_ps();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    __m256 v = _mm256_loadu_ps(x + i);
    __m256 neg = _mm256_cmp_ps(v, zero, _CMP_LE_OQ);
    __m256 w = _mm256_blendv_ps(one, vs, neg);
    _mm256_storeu_ps(d + i, _mm256_fmadd_ps(_mm256_loadu_ps(g + i), w, _mm256_loadu_ps(d + i)));
  }
  for (; i < n; ++i) d[i] += g[i] * (x[i] > 0.0f ? 1.0f : slope);
}

float f_sum(const float* x, std::size_t n) {
  __m256 acc = _mm256_setzero_ps();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) acc = _mm256_add_ps(acc, _mm256_loadu_ps(x + i));
  float r = hsum(acc);
  for (; i < n; ++i) r += x[i];
  return r;
}
float f_dot(const float* a, const float* b, std::size_t n) {
  __m256 acc = _mm256_setzero_ps();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) acc = _mm256_fmadd_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i), acc);
  float r = hsum(acc);
  for (; i < n; ++i) r += a[i] * b[i];
  return r;
}
float f_abs_sum(const float* x, std::size_t n) {
  __m256 acc = _mm256_setzero_ps();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) acc = _mm256_add_ps(acc, abs_ps(_mm256_loadu_ps(x + i)));
  float r = hsum(acc);
  for (; i < n; ++i) r += std::abs(x[i]);
  return r;
}
float f_abs_diff_sum(const float* a, const float* b, std::size_t n) {
  __m256 acc = _mm256_setzero_ps();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8)
    acc = _mm256_add_ps(acc, abs_ps(_mm256_sub_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i))));
  float r = hsum(acc);
  for (; i < n; ++i) r += std::abs(a[i] - b[i]);
  return r;
}
float f_sq_diff_sum(const float* a, const float* b, std::size_t n) {
  __m256 acc = _mm256_setzero_ps();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    __m256 dd = _mm256_sub_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i));
    acc = _mm256_fmadd_ps(dd, dd, acc);
  }
  float r = hsum(acc);
  for (; i < n; ++i) {
    const float dd = a[i] - b[i];
    r += dd * dd;
  }
  return r;
}
float f_max_val(const float* x, std::size_t n) {
  std::size_t i = 0;
  float r = x[0];
  if (n >= 8) {
    __m256 acc = _mm256_loadu_ps(x);
    for (i = 8; i + 8 <= n; i += 8) acc = _mm256_max_ps(acc, _mm256_loadu_ps(x + i));
    r = hmax(acc);
  }
  for (; i < n; ++i) r = r > x[i] ? r : x[i];
  return r;
}

// 4x16 register-blocked GEMM with FMA; plain loops on the fringes.
void f_gemm(std::size_t m, std::size_t n, std::size_t k, const float* A, const float* B, float* C, bool accumulate) {
  std::size_t i = 0;
  for (; i + 4 <= m; i += 4) {
    std::size_t j = 0;
    for (; j + 16 <= n; j += 16) {
      __m256 c00, c01, c10, c11, c20, c21, c30, c31;
      if (accumulate) {
        c00 = _mm256_loadu_ps(C + (i + 0) * n + j); c01 = _mm256_loadu_ps(C + (i + 0) * n + j + 8);
        c10 = _mm256_loadu_ps(C + (i + 1) * n + j); c11 = _mm256_loadu_ps(C + (i + 1) * n + j + 8);
        c20 = _mm256_loadu_ps(C + (i + 2) * n + j); c21 = _mm256_loadu_ps(C + (i + 2) * n + j + 8);
        c30 = _mm256_loadu_ps(C + (i + 3) * n + j); c31 = _mm256_loadu_ps(C + (i + 3) * n + j + 8);
      } else {
        c00 = c01 = c10 = c11 = c20 = c21 = c30 = c31 = _mm256_setzero_ps();
      }
      for (std::size_t p = 0; p < k; ++p) {
        const __m256 b0 = _mm256_loadu_ps(B + p * n + j);
        const __m256 b1 = _mm256_loadu_ps(B + p * n + j + 8);
        __m256 a0 = _mm256_set1_ps(A[(i + 0) * k + p]);
        __m256 a1 = _mm256_set1_ps(A[(i + 1) * k + p]);
        __m256 a2 = _mm256_set1_ps(A[(i + 2) * k + p]);
        __m256 a3 = _mm256_set1_ps(A[(i + 3) * k + p]);
        c00 = _mm256_fmadd_ps(a0, b0, c00); c01 = _mm256_fmadd_ps(a0, b1, c01);
        c10 = _mm256_fmadd_ps(a1, b0, c10); c11 = _mm256_fmadd_ps(a1, b1, c11);
        c20 = _mm256_fmadd_ps(a2, b0, c20); c21 = _mm256_fmadd_ps(a2, b1, c21);
        c30 = _mm256_fmadd_ps(a3, b0, c30); c31 = _mm256_fmadd_ps(a3, b1, c31);
      }
      _mm256_storeu_ps(C + (i + 0) * n + j, c00); _mm256_storeu_ps(C + (i + 0) * n + j + 8, c01);
      _mm256_storeu_ps(C + (i + 1) * n + j, c10); _mm256_storeu_ps(C + (i + 1) * n + j + 8, c11);
      _mm256_storeu_ps(C + (i + 2) * n + j, c20); _mm256_storeu_ps(C + (i + 2) * n + j + 8, c21);
      _mm256_storeu_ps(C + (i + 3) * n + j, c30); _mm256_storeu_ps(C + (i + 3) * n + j + 8, c31);
    }
    for (; j < n; ++j) {
      for (std::size_t r = 0; r < 4; ++r) {
        float acc = accumulate ? C[(i + r) * n + j] : 0.0f;
        for (std::size_t p = 0; p < k; ++p) acc += A[(i + r) * k + p] * B[p * n + j];
        C[(i + r) * n + j] = acc;
      }
    }
  }
  for (; i < m; ++i) {
    std::size_t j = 0;
    for (; j + 8 <= n; j += 8) {
      __m256 c0 = accumulate ? _mm256_loadu_ps(C + i * n + j) : _mm256_setzero_ps();
      for (std::size_t p = 0; p < k; ++p)
        c0 = _mm256_fmadd_ps(_mm256_set1_ps(A[i * k + p]), _mm256_loadu_ps(B + p * n + j), c0);
      _mm256_storeu_ps(C + i * n + j, c0);
    }
    for (; j < n; ++j) {
      float acc = accumulate ? C[i * n + j] : 0.0f;
      for (std::size_t p = 0; p < k; ++p) acc += A[i * k + p] * B[p * n + j];
      C[i * n + j] = acc;
    }
  }
}

//----( double, 4-wide )----

inline double hsum(__m256d v) {
  __m128d lo = _mm256_castpd256_pd128(v);
  __m128d hi = _mm256_extractf128_pd(v, 1);
  lo = _mm_add_pd(lo, hi);
  return _mm_cvtsd_f64(_mm_add_sd(lo, _mm_unpackhi_pd(lo, lo)));
}

inline __m256d abs_pd(__m256d v) {
  return _mm256_andnot_pd(_mm256_set1_pd(-0.0), v);
}

void d_add(const double* a, const double* b, double* d, std::size_t n) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(d + i, _mm256_add_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
  for (; i < n; ++i) d[i] = a[i] + b[i];
}
void d_sub(const double* a, const double* b, double* d, std::size_t n) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(d + i, _mm256_sub_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
  for (; i < n; ++i) d[i] = a[i] - b[i];
}
void d_mul(const double* a, const double* b, double* d, std::size_t n) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(d + i, _mm256_mul_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
  for (; i < n; ++i) d[i] = a[i] * b[i];
}
void d_div(const double* a, const double* b, double* d, std::size_t n) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(d + i, _mm256_div_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
  for (; i < n; ++i) d[i] = a[i] / b[i];
}
void d_scale(const double* x, double a, double* d, std::size_t n) {
  const __m256d va = _mm256_set1_pd(a);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) _mm256_storeu_pd(d + i, _mm256_mul_pd(va, _mm256_loadu_pd(x + i)));
  for (; i < n; ++i) d[i] = a * x[i];
}
void d_axpy(double a, const double* x, double* y, std::size_t n) {
  const __m256d va = _mm256_set1_pd(a);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(y + i, _mm256_fmadd_pd(va, _mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
  for (; i < n; ++i) y[i] += a * x[i];
}
void d_mul_acc(const double* a, const double* b, double* y, std::size_t n) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(y + i, _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), _mm256_loadu_pd(y + i)));
  for (; i < n; ++i) y[i] += a[i] * b[i];
}

void d_vexp(const double* x, double* d, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) d[i] = std::exp(x[i]);
}
void d_vlog_eps(const double* x, double eps, double* d, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) d[i] = std::log(x[i] + eps);
}
void d_vsigmoid(const double* x, double* d, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) d[i] = 1.0 / (1.0 + std::exp(-x[i]));
}
void d_vsin(const double* x, double* d, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) d[i] = std::sin(x[i]);
}
void d_vabs(const double* x, double* d, std::size_t n) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) _mm256_storeu_pd(d + i, abs_pd(_mm256_loadu_pd(x + i)));
  for (; i < n; ++i) d[i] = std::abs(x[i]);
}
void d_leaky_relu(const double* x, double slope, double* d, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) d[i] = x[i] > 0.0 ? x[i] : slope * x[i];
}
void d_leaky_relu_grad(const double* x, const double* g, double slope, double* d, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) d[i] += g[i] * (x[i] > 0.0 ? 1.0 : slope);
}

double d_sum(const double* x, std::size_t n) {
  __m256d acc = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) acc = _mm256_add_pd(acc, _mm256_loadu_pd(x + i));
  double r = hsum(acc);
  for (; i < n; ++i) r += x[i];
  return r;
}
double d_dot(const double* a, const double* b, std::size_t n) {
  __m256d acc = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) acc = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc);
  double r = hsum(acc);
  for (; i < n; ++i) r += a[i] * b[i];
  return r;
}
double d_abs_sum(const double* x, std::size_t n) {
  __m256d acc = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) acc = _mm256_add_pd(acc, abs_pd(_mm256_loadu_pd(x + i)));
  double r = hsum(acc);
  for (; i < n; ++i) r += std::abs(x[i]);
  return r;
}
double d_abs_diff_sum(const double* a, const double* b, std::size_t n) {
  __m256d acc = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    acc = _mm256_add_pd(acc, abs_pd(_mm256_sub_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i))));
  double r = hsum(acc);
  for (; i < n; ++i) r += std::abs(a[i] - b[i]);
  return r;
}
double d_sq_diff_sum(const double* a, const double* b, std::size_t n) {
  __m256d acc = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    __m256d dd = _mm256_sub_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i));
    acc = _mm256_fmadd_pd(dd, dd, acc);
  }
  double r = hsum(acc);
  for (; i < n; ++i) {
    const double dd = a[i] - b[i];
    r += dd * dd;
  }
  return r;
}
double d_max_val(const double* x, std::size_t n) {
  double r = x[0];
  for (std::size_t i = 1; i < n; ++i) r = r > x[i] ? r : x[i];
  return r;
}

void d_gemm(std::size_t m, std::size_t n, std::size_t k, const double* A, const double* B, double* C, bool accumulate) {
  std::size_t i = 0;
  for (; i + 2 <= m; i += 2) {
    std::size_t j = 0;
    for (; j + 8 <= n; j += 8) {
      __m256d c00, c01, c10, c11;
      if (accumulate) {
        c00 = _mm256_loadu_pd(C + (i + 0) * n + j); c01 = _mm256_loadu_pd(C + (i + 0) * n + j + 4);
        c10 = _mm256_loadu_pd(C + (i + 1) * n + j); c11 = _mm256_loadu_pd(C + (i + 1) * n + j + 4);
      } else {
        c00 = c01 = c10 = c11 = _mm256_setzero_pd();
      }
      for (std::size_t p = 0; p < k; ++p) {
        const __m256d b0 = _mm256_loadu_pd(B + p * n + j);
        const __m256d b1 = _mm256_loadu_pd(B + p * n + j + 4);
        __m256d a0 = _mm256_set1_pd(A[(i + 0) * k + p]);
        __m256d a1 = _mm256_set1_pd(A[(i + 1) * k + p]);
        c00 = _mm256_fmadd_pd(a0, b0, c00); c01 = _mm256_fmadd_pd(a0, b1, c01);
        c10 = _mm256_fmadd_pd(a1, b0, c10); c11 = _mm256_fmadd_pd(a1, b1, c11);
      }
      _mm256_storeu_pd(C + (i + 0) * n + j, c00); _mm256_storeu_pd(C + (i + 0) * n + j + 4, c01);
      _mm256_storeu_pd(C + (i + 1) * n + j, c10); _mm256_storeu_pd(C + (i + 1) * n + j + 4, c11);
    }
    for (; j < n; ++j) {
      for (std::size_t r = 0; r < 2; ++r) {
        double acc = accumulate ? C[(i + r) * n + j] : 0.0;
        for (std::size_t p = 0; p < k; ++p) acc += A[(i + r) * k + p] * B[p * n + j];
        C[(i + r) * n + j] = acc;
      }
    }
  }
  for (; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double acc = accumulate ? C[i * n + j] : 0.0;
      for (std::size_t p = 0; p < k; ++p) acc += A[i * k + p] * B[p * n + j];
      C[i * n + j] = acc;
    }
  }
}

template <typename T> KernelSet<T> make_avx2();

template <> KernelSet<float> make_avx2<float>() {
  KernelSet<float> s;
  s.add = f_add; s.sub = f_sub; s.mul = f_mul; s.div = f_div;
  s.scale = f_scale; s.axpy = f_axpy; s.mul_acc = f_mul_acc;
  s.vexp = f_vexp; s.vlog_eps = f_vlog_eps; s.vsigmoid = f_vsigmoid;
  s.vsin = f_vsin; s.vabs = f_vabs;
  s.leaky_relu = f_leaky_relu; s.leaky_relu_grad = f_leaky_relu_grad;
  s.sum = f_sum; s.dot = f_dot; s.abs_sum = f_abs_sum;
  s.abs_diff_sum = f_abs_diff_sum; s.sq_diff_sum = f_sq_diff_sum; s.max_val = f_max_val;
  s.gemm = f_gemm;
  return s;
}

template <> KernelSet<double> make_avx2<double>() {
  KernelSet<double> s;
  s.add = d_add; s.sub = d_sub; s.mul = d_mul; s.div = d_div;
  s.scale = d_scale; s.axpy = d_axpy; s.mul_acc = d_mul_acc;
  s.vexp = d_vexp; s.vlog_eps = d_vlog_eps; s.vsigmoid = d_vsigmoid;
  s.vsin = d_vsin; s.vabs = d_vabs;
  s.leaky_relu = d_leaky_relu; s.leaky_relu_grad = d_leaky_relu_grad;
  s.sum = d_sum; s.dot = d_dot; s.abs_sum = d_abs_sum;
  s.abs_diff_sum = d_abs_diff_sum; s.sq_diff_sum = d_sq_diff_sum; s.max_val = d_max_val;
  s.gemm = d_gemm;
  return s;
}

}  // namespace

// Referenced by the dispatcher; must only be called on AVX2-capable hosts.
const KernelSet<float>& avx2_table_impl_f32() {
  static const KernelSet<float> t = make_avx2<float>();
  return t;
}
const KernelSet<double>& avx2_table_impl_f64() {
  static const KernelSet<double> t = make_avx2<double>();
  return t;
}

}  // namespace voxsep::kern
