#include "voxsep/core/fft.h"

#include <cmath>
#include <map>
#include <memory>
#include <mutex>

#include "voxsep/common.h"

namespace voxsep::fft {

bool is_pow2(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

namespace {

constexpr double kTwoPi = 6.283185307179586476925286766559;

// Twiddles are computed in double and narrowed once, so float transforms do
// not accumulate table error.
template <typename T>
struct Plan {
  std::vector<std::size_t> bitrev;
  std::vector<std::complex<T>> tw;      // e^{-i 2 pi k / n}, k < n/2
  std::vector<std::complex<T>> pack;    // e^{-i 2 pi k / (2n)}, k <= n/2, for rfft of size 2n
};

template <typename T>
const Plan<T>& plan_for(std::size_t n) {
  static std::map<std::size_t, std::unique_ptr<Plan<T>>> cache;
  static std::mutex mu;
  std::lock_guard<std::mutex> lock(mu);
  auto it = cache.find(n);
  if (it != cache.end()) return *it->second;

  auto plan = std::make_unique<Plan<T>>();
  plan->bitrev.resize(n);
  std::size_t bits = 0;
  while ((std::size_t(1) << bits) < n) ++bits;
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t r = 0;
    for (std::size_t b = 0; b < bits; ++b)
      if (i & (std::size_t(1) << b)) r |= std::size_t(1) << (bits - 1 - b);
    plan->bitrev[i] = r;
  }
  plan->tw.resize(n / 2);
  for (std::size_t k = 0; k < n / 2; ++k) {
    const double ang = -kTwoPi * double(k) / double(n);
    plan->tw[k] = std::complex<T>(T(std::cos(ang)), T(std::sin(ang)));
  }
  plan->pack.resize(n + 1);
  for (std::size_t k = 0; k <= n; ++k) {
    const double ang = -kTwoPi * double(k) / double(2 * n);
    plan->pack[k] = std::complex<T>(T(std::cos(ang)), T(std::sin(ang)));
  }
  const Plan<T>& ref = *plan;
  cache.emplace(n, std::move(plan));
  return ref;
}

}  // namespace

template <typename T>
void fft(std::complex<T>* a, std::size_t n, bool inverse) {
  VX_CHECK(is_pow2(n), "fft size must be a power of two");
  if (n == 1) return;
  const Plan<T>& p = plan_for<T>(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t j = p.bitrev[i];
    if (i < j) std::swap(a[i], a[j]);
  }
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const std::size_t half = len >> 1;
    const std::size_t step = n / len;
    for (std::size_t base = 0; base < n; base += len) {
      for (std::size_t k = 0; k < half; ++k) {
        std::complex<T> w = p.tw[k * step];
        if (inverse) w = std::conj(w);
        const std::complex<T> u = a[base + k];
        const std::complex<T> v = std::complex<T>(
            a[base + k + half].real() * w.real() - a[base + k + half].imag() * w.imag(),
            a[base + k + half].real() * w.imag() + a[base + k + half].imag() * w.real());
        a[base + k] = u + v;
        a[base + k + half] = u - v;
      }
    }
  }
  if (inverse) {
    const T s = T(1) / T(n);
    for (std::size_t i = 0; i < n; ++i) a[i] *= s;
  }
}

template <typename T>
void rfft(const T* x, std::size_t n, std::complex<T>* X) {
  VX_CHECK(is_pow2(n) && n >= 2, "rfft size must be a power of two >= 2");
  const std::size_t h = n / 2;
  std::vector<std::complex<T>> z(h);
  for (std::size_t i = 0; i < h; ++i) z[i] = std::complex<T>(x[2 * i], x[2 * i + 1]);
  fft(z.data(), h, false);
  const Plan<T>& p = plan_for<T>(h);
  const T half = T(0.5);
  for (std::size_t k = 0; k <= h; ++k) {
    const std::complex<T> zk = k == h ? z[0] : z[k];
    const std::complex<T> zc = std::conj(k == 0 ? z[0] : z[h - k]);
    const std::complex<T> even = (zk + zc) * half;
    const std::complex<T> odd = (zk - zc) * half;
    // X_k = even + e^{-i 2 pi k / n} * (odd / i)
    const std::complex<T> rot(odd.imag(), -odd.real());
    const std::complex<T> w = p.pack[k];
    X[k] = even + std::complex<T>(rot.real() * w.real() - rot.imag() * w.imag(),
                                  rot.real() * w.imag() + rot.imag() * w.real());
  }
}

template <typename T>
void irfft(const std::complex<T>* X, std::size_t n, T* x) {
  VX_CHECK(is_pow2(n) && n >= 2, "irfft size must be a power of two >= 2");
  const std::size_t h = n / 2;
  const Plan<T>& p = plan_for<T>(h);
  std::vector<std::complex<T>> z(h);
  const T half = T(0.5);
  for (std::size_t k = 0; k < h; ++k) {
    const std::complex<T> xk = k == 0 ? std::complex<T>(X[0].real(), T(0)) : X[k];
    std::complex<T> xc = std::conj(k == 0 ? std::complex<T>(X[h].real(), T(0)) : X[h - k]);
    const std::complex<T> even = (xk + xc) * half;
    std::complex<T> odd = (xk - xc) * half;
    // Undo the pack rotation: odd' = i * e^{+i 2 pi k / n} * odd
    const std::complex<T> w = std::conj(p.pack[k]);
    const std::complex<T> rot(odd.real() * w.real() - odd.imag() * w.imag(),
                              odd.real() * w.imag() + odd.imag() * w.real());
    z[k] = even + std::complex<T>(-rot.imag(), rot.real());
  }
  fft(z.data(), h, true);
  for (std::size_t i = 0; i < h; ++i) {
    x[2 * i] = z[i].real();
    x[2 * i + 1] = z[i].imag();
  }
}

template <typename T>
void irfft_adjoint(const T* g, std::size_t n, std::complex<T>* out) {
  rfft(g, n, out);
  const T inv = T(1) / T(n);
  const std::size_t h = n / 2;
  for (std::size_t k = 0; k <= h; ++k) {
    const T c = (k == 0 || k == h) ? inv : T(2) * inv;
    out[k] *= c;
  }
}

template void fft<float>(std::complex<float>*, std::size_t, bool);
template void fft<double>(std::complex<double>*, std::size_t, bool);
template void rfft<float>(const float*, std::size_t, std::complex<float>*);
template void rfft<double>(const double*, std::size_t, std::complex<double>*);
template void irfft<float>(const std::complex<float>*, std::size_t, float*);
template void irfft<double>(const std::complex<double>*, std::size_t, double*);
template void irfft_adjoint<float>(const float*, std::size_t, std::complex<float>*);
template void irfft_adjoint<double>(const double*, std::size_t, std::complex<double>*);

}  // namespace voxsep::fft
