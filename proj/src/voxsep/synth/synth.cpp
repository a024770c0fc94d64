#include "voxsep/synth/synth.h"

#include <algorithm>
#include <cmath>
#include <complex>
#include <memory>

#include "voxsep/common.h"
#include "voxsep/core/fft.h"
#include "voxsep/core/ops.h"
#include "voxsep/core/rng.h"
#include "voxsep/kernels/kernels.h"

namespace voxsep::synth {

namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr double kTwoPi = 2.0 * kPi;

template <typename T>
using Node = autodiff::Node<T>;

// Control-lerp coordinates for sample t: frames l and l2 with weight w on l2.
struct Seg {
  std::int64_t l, l2;
  double w;
};

Seg seg_at(std::int64_t t, std::int64_t hop, std::int64_t L) {
  std::int64_t l = std::min(t / hop, L - 1);
  std::int64_t l2 = std::min(l + 1, L - 1);
  const double w = l2 > l ? static_cast<double>(t - l * hop) / static_cast<double>(hop) : 0.0;
  return {l, l2, w};
}

}  // namespace

template <typename T>
Tensor<T> nyquist_mask(const Tensor<T>& f0, std::int64_t n_harmonics, double cutoff_hz) {
  VX_CHECK(f0.rank() == 1, "nyquist_mask: need [L]");
  const std::int64_t L = f0.dim(0);
  Tensor<T> mask({L, n_harmonics});
  for (std::int64_t l = 0; l < L; ++l)
    for (std::int64_t k = 0; k < n_harmonics; ++k)
      mask.at(l, k) = static_cast<double>(k + 1) * f0[l] < cutoff_hz ? T(1) : T(0);
  return mask;
}

template <typename T>
Tensor<T> voiced_mask(const Tensor<T>& f0) {
  VX_CHECK(f0.rank() == 1, "voiced_mask: need [L]");
  Tensor<T> m({f0.dim(0)});
  for (std::int64_t l = 0; l < f0.dim(0); ++l) m[l] = f0[l] > T(0) ? T(1) : T(0);
  return m;
}

template <typename T>
autodiff::Value<T> oscillator_bank(autodiff::Value<T> amps, autodiff::Value<T> env,
                                   const Tensor<T>& f0, std::int64_t hop, int sample_rate,
                                   std::int64_t out_len) {
  VX_CHECK(amps.data().rank() == 2, "oscillator_bank: amps must be [L, K]");
  const std::int64_t L = amps.data().dim(0), K = amps.data().dim(1);
  VX_CHECK(env.data().rank() == 1 && env.data().dim(0) == L, "oscillator_bank: env must be [L]");
  VX_CHECK(f0.rank() == 1 && f0.dim(0) == L, "oscillator_bank: f0 must be [L]");
  VX_CHECK(hop > 0 && sample_rate > 0 && out_len > 0, "oscillator_bank: bad sizes");
  const auto& Kn = kern::active<T>();

  auto sinbuf = std::make_shared<std::vector<T>>(static_cast<std::size_t>(out_len * K));
  auto envbuf = std::make_shared<std::vector<T>>(static_cast<std::size_t>(out_len));
  {
    std::vector<T> phases(static_cast<std::size_t>(out_len * K));
    std::vector<double> acc(static_cast<std::size_t>(K), 0.0);
    const T* f = f0.data();
    const T* ev = env.data().data();
    for (std::int64_t t = 0; t < out_len; ++t) {
      const Seg s = seg_at(t, hop, L);
      T* prow = phases.data() + t * K;
      for (std::int64_t k = 0; k < K; ++k) prow[k] = static_cast<T>(acc[static_cast<std::size_t>(k)]);
      const double fl = static_cast<double>(f[s.l]), fr = static_cast<double>(f[s.l2]);
      double fi;
      if (fl > 0.0 && fr > 0.0)
        fi = (1.0 - s.w) * fl + s.w * fr;
      else if (fl > 0.0)
        fi = fl;  // hold the voiced end of the segment
      else if (fr > 0.0)
        fi = fr;
      else
        fi = 0.0;
      const double dphi = kTwoPi * fi / sample_rate;
      for (std::int64_t k = 0; k < K; ++k) {
        double a = acc[static_cast<std::size_t>(k)] + static_cast<double>(k + 1) * dphi;
        while (a > kPi) a -= kTwoPi;
        acc[static_cast<std::size_t>(k)] = a;
      }
      (*envbuf)[static_cast<std::size_t>(t)] =
          static_cast<T>((1.0 - s.w) * static_cast<double>(ev[s.l]) + s.w * static_cast<double>(ev[s.l2]));
    }
    Kn.vsin(phases.data(), sinbuf->data(), static_cast<std::size_t>(out_len * K));
  }

  Tensor<T> out({out_len});
  {
    std::vector<T> at(static_cast<std::size_t>(K));
    const T* ad = amps.data().data();
    for (std::int64_t t = 0; t < out_len; ++t) {
      const Seg s = seg_at(t, hop, L);
      Kn.scale(ad + s.l * K, static_cast<T>(1.0 - s.w), at.data(), static_cast<std::size_t>(K));
      if (s.w > 0.0) Kn.axpy(static_cast<T>(s.w), ad + s.l2 * K, at.data(), static_cast<std::size_t>(K));
      out[t] = (*envbuf)[static_cast<std::size_t>(t)] *
               Kn.dot(at.data(), sinbuf->data() + t * K, static_cast<std::size_t>(K));
    }
  }

  return amps.tape()->make(
      std::move(out), {amps.node(), env.node()}, [sinbuf, envbuf, hop, L, K](Node<T>& n) {
        const auto& Kr = kern::active<T>();
        const bool na = n.parents[0]->requires_grad, ne = n.parents[1]->requires_grad;
        const T* ad = n.parents[0]->data.data();
        T* da = na ? n.parents[0]->grad.data() : nullptr;
        T* de = ne ? n.parents[1]->grad.data() : nullptr;
        const std::int64_t out_len = n.data.numel();
        std::vector<T> at(static_cast<std::size_t>(K));
        for (std::int64_t t = 0; t < out_len; ++t) {
          const T gt = n.grad[t];
          if (gt == T(0)) continue;
          const Seg s = seg_at(t, hop, L);
          const T* srow = sinbuf->data() + t * K;
          if (ne) {
            Kr.scale(ad + s.l * K, static_cast<T>(1.0 - s.w), at.data(), static_cast<std::size_t>(K));
            if (s.w > 0.0)
              Kr.axpy(static_cast<T>(s.w), ad + s.l2 * K, at.data(), static_cast<std::size_t>(K));
            const T h = Kr.dot(at.data(), srow, static_cast<std::size_t>(K));
            de[s.l] += gt * static_cast<T>(1.0 - s.w) * h;
            if (s.l2 > s.l && s.w > 0.0) de[s.l2] += gt * static_cast<T>(s.w) * h;
          }
          if (na) {
            const T c = gt * (*envbuf)[static_cast<std::size_t>(t)];
            Kr.axpy(c * static_cast<T>(1.0 - s.w), srow, da + s.l * K, static_cast<std::size_t>(K));
            if (s.l2 > s.l && s.w > 0.0)
              Kr.axpy(c * static_cast<T>(s.w), srow, da + s.l2 * K, static_cast<std::size_t>(K));
          }
        }
      });
}

template <typename T>
NoiseFrames<T> make_noise_frames(std::uint64_t seed, std::uint64_t stream, std::int64_t n,
                                 std::int64_t win, std::int64_t hop) {
  VX_CHECK(n > 0 && win > 0 && hop > 0, "make_noise_frames: bad sizes");
  Rng rng = Rng::derive(seed, {stream, 0x4e4f4953ULL});
  std::vector<T> x(static_cast<std::size_t>(n));
  rng.fill_uniform(x.data(), x.size(), T(-1), T(1));
  NoiseFrames<T> nf;
  nf.spec = dsp::stft_complex(x.data(), n, win, hop);
  nf.out_len = n;
  nf.ola_den.assign(static_cast<std::size_t>(n), T(0));
  const Tensor<T> w = dsp::hann_window<T>(win);
  const std::int64_t half = win / 2;
  for (std::int64_t l = 0; l < nf.spec.L; ++l) {
    const std::int64_t start = l * hop - half;
    const std::int64_t i0 = start < 0 ? -start : 0;
    const std::int64_t i1 = std::min(win, n - start);
    for (std::int64_t i = i0; i < i1; ++i) nf.ola_den[static_cast<std::size_t>(start + i)] += w[i] * w[i];
  }
  for (std::int64_t t = 0; t < n; ++t)
    VX_CHECK(nf.ola_den[static_cast<std::size_t>(t)] > T(1e-6),
             "make_noise_frames: window/hop pair does not cover the signal");
  return nf;
}

template <typename T>
autodiff::Value<T> noise_filter(autodiff::Value<T> bands, const NoiseFrames<T>& nf) {
  VX_CHECK(bands.data().rank() == 2, "noise_filter: bands must be [L, B]");
  const std::int64_t L = bands.data().dim(0), B = bands.data().dim(1);
  VX_CHECK(B >= 2, "noise_filter: need at least two bands");
  VX_CHECK(L == nf.spec.L, "noise_filter: frame count does not match the noise analysis");
  const std::int64_t Kb = nf.spec.bins(), win = nf.spec.win, hop = nf.spec.hop;
  const std::int64_t sp = (Kb - 1) / (B - 1);
  VX_CHECK(sp >= 1 && sp * (B - 1) == Kb - 1, "noise_filter: bands must divide the spectrum evenly");
  const std::int64_t out_len = nf.out_len, half = win / 2;
  const Tensor<T> w = dsp::hann_window<T>(win);

  Tensor<T> out({out_len});
  {
    std::vector<T> hfull(static_cast<std::size_t>(Kb));
    std::vector<std::complex<T>> y(static_cast<std::size_t>(Kb));
    std::vector<T> frame(static_cast<std::size_t>(win));
    for (std::int64_t l = 0; l < L; ++l) {
      const T* brow = bands.data().data() + l * B;
      for (std::int64_t k = 0; k < Kb; ++k) {
        const std::int64_t j = k / sp;
        if (j + 1 < B) {
          const T u = static_cast<T>(k - j * sp) / static_cast<T>(sp);
          hfull[static_cast<std::size_t>(k)] = (T(1) - u) * brow[j] + u * brow[j + 1];
        } else {
          hfull[static_cast<std::size_t>(k)] = brow[B - 1];
        }
      }
      const std::complex<T>* nrow = nf.spec.row(l);
      for (std::int64_t k = 0; k < Kb; ++k)
        y[static_cast<std::size_t>(k)] = nrow[k] * hfull[static_cast<std::size_t>(k)];
      fft::irfft(y.data(), win, frame.data());
      const std::int64_t start = l * hop - half;
      const std::int64_t i0 = start < 0 ? -start : 0;
      const std::int64_t i1 = std::min(win, out_len - start);
      for (std::int64_t i = i0; i < i1; ++i) out[start + i] += w[i] * frame[static_cast<std::size_t>(i)];
    }
    for (std::int64_t t = 0; t < out_len; ++t) out[t] /= nf.ola_den[static_cast<std::size_t>(t)];
  }

  // The caller owns nf and must keep it alive through backward; training
  // caches noise analyses per excerpt for exactly this reason.
  const NoiseFrames<T>* nfp = &nf;
  return bands.tape()->make(
      std::move(out), {bands.node()}, [nfp, L, B, Kb, win, hop, sp, half, w](Node<T>& n) {
        T* db = n.parents[0]->grad.data();
        const std::int64_t out_len = n.data.numel();
        std::vector<T> q(static_cast<std::size_t>(win));
        std::vector<std::complex<T>> a(static_cast<std::size_t>(Kb));
        for (std::int64_t l = 0; l < L; ++l) {
          const std::int64_t start = l * hop - half;
          for (std::int64_t i = 0; i < win; ++i) {
            const std::int64_t t = start + i;
            q[static_cast<std::size_t>(i)] =
                (t >= 0 && t < out_len)
                    ? w[i] * n.grad[t] / nfp->ola_den[static_cast<std::size_t>(t)]
                    : T(0);
          }
          fft::irfft_adjoint(q.data(), win, a.data());
          const std::complex<T>* nrow = nfp->spec.row(l);
          for (std::int64_t k = 0; k < Kb; ++k) {
            const std::complex<T> prod = std::conj(nrow[k]) * a[static_cast<std::size_t>(k)];
            const T gh = prod.real();
            const std::int64_t j = k / sp;
            if (j + 1 < B) {
              const T u = static_cast<T>(k - j * sp) / static_cast<T>(sp);
              db[l * B + j] += (T(1) - u) * gh;
              db[l * B + j + 1] += u * gh;
            } else {
              db[l * B + B - 1] += gh;
            }
          }
        }
      });
}

SoftMaskResult soft_mask_separate(const std::vector<Tensor<float>>& estimates,
                                  const Tensor<float>& mixture, std::int64_t win, std::int64_t hop) {
  const std::size_t J = estimates.size();
  VX_CHECK(J > 0, "soft_mask_separate: no estimates");
  const std::int64_t n = mixture.numel();
  for (const auto& e : estimates) VX_CHECK(e.numel() == n, "soft_mask_separate: length mismatch");
  constexpr double kEps = 1e-8;

  std::vector<double> buf(static_cast<std::size_t>(n));
  for (std::int64_t i = 0; i < n; ++i) buf[static_cast<std::size_t>(i)] = mixture[i];
  const auto xspec = dsp::stft_complex(buf.data(), n, win, hop);

  std::vector<dsp::ComplexSpec<double>> specs;
  specs.reserve(J);
  for (const auto& e : estimates) {
    for (std::int64_t i = 0; i < n; ++i) buf[static_cast<std::size_t>(i)] = e[i];
    specs.push_back(dsp::stft_complex(buf.data(), n, win, hop));
  }

  const std::int64_t bins = xspec.bins() * xspec.L;
  SoftMaskResult res;
  std::vector<dsp::ComplexSpec<double>> outsp(J);
  for (std::size_t j = 0; j < J; ++j) {
    outsp[j].L = xspec.L;
    outsp[j].win = win;
    outsp[j].hop = hop;
    outsp[j].v.resize(static_cast<std::size_t>(bins));
  }
  for (std::int64_t i = 0; i < bins; ++i) {
    double denom = 0.0;
    for (std::size_t j = 0; j < J; ++j) denom += std::norm(specs[j].v[static_cast<std::size_t>(i)]) + kEps;
    double msum = 0.0;
    for (std::size_t j = 0; j < J; ++j) {
      const double m = (std::norm(specs[j].v[static_cast<std::size_t>(i)]) + kEps) / denom;
      msum += m;
      outsp[j].v[static_cast<std::size_t>(i)] = xspec.v[static_cast<std::size_t>(i)] * m;
    }
    res.max_mask_dev = std::max(res.max_mask_dev, std::abs(msum - 1.0));
  }
  for (std::size_t j = 0; j < J; ++j) {
    const Tensor<double> y = dsp::istft(outsp[j], n);
    res.stems.push_back(y.cast<float>());
  }
  return res;
}

std::vector<gradcheck::Fixture> gradcheck_fixtures() {
  using gradcheck::DTape;
  using gradcheck::DValue;
  using gradcheck::Fixture;
  std::vector<Fixture> fs;

  struct OscCase {
    std::int64_t L, K, hop, out_len;
    int sr;
    std::vector<double> f0;
  };
  const std::vector<OscCase> oc = {
      {16, 8, 256, 4000, 16000, {}},  // quarter-second excerpt, f0 filled below
      {6, 3, 200, 1200, 8000, {220, 230, 240, 0, 250, 255}},
      {4, 5, 64, 256, 4000, {220, 0, 180, 0}},
      {1, 4, 64, 128, 4000, {330}},
      {8, 2, 50, 400, 4000, {0, 300, 300, 0, 250, 0, 0, 200}},
  };
  for (std::size_t i = 0; i < oc.size(); ++i) {
    OscCase c = oc[i];
    if (c.f0.empty()) {
      c.f0.resize(static_cast<std::size_t>(c.L));
      for (std::int64_t l = 0; l < c.L; ++l)
        c.f0[static_cast<std::size_t>(l)] = 200.0 + 10.0 * static_cast<double>(l % 5);
    }
    const Tensor<double> f0 = Tensor<double>::from(c.f0, {c.L});
    fs.push_back(
        {"oscillator_bank/" + std::to_string(i),
         {gradcheck::rand_uniform({c.L, c.K}, 0.1, 1.0, 700 + i),
          gradcheck::rand_uniform({c.L}, 0.2, 1.0, 720 + i)},
         [f0, c, i](DTape& t, const std::vector<DValue>& l) {
           return gradcheck::probe_reduce(
               t, oscillator_bank(l[0], l[1], f0, c.hop, c.sr, c.out_len), 50 + i);
         }});
  }

  struct NfCase {
    std::int64_t win, B, hop, n;
  };
  const std::vector<NfCase> nc = {
      {32, 5, 16, 40}, {16, 3, 8, 28}, {64, 9, 32, 33}, {32, 17, 16, 41}, {16, 5, 4, 17}};
  for (std::size_t i = 0; i < nc.size(); ++i) {
    const NfCase c = nc[i];
    auto nf = std::make_shared<NoiseFrames<double>>(
        make_noise_frames<double>(1234, 400 + i, c.n, c.win, c.hop));
    fs.push_back({"noise_filter/" + std::to_string(i),
                  {gradcheck::rand_uniform({nf->spec.L, c.B}, 0.1, 1.1, 740 + i)},
                  [nf, i](DTape& t, const std::vector<DValue>& l) {
                    return gradcheck::probe_reduce(t, noise_filter(l[0], *nf), 60 + i);
                  }});
  }
  return fs;
}

#define VOXSEP_INSTANTIATE_SYNTH(T)                                                            \
  template Tensor<T> nyquist_mask<T>(const Tensor<T>&, std::int64_t, double);                  \
  template Tensor<T> voiced_mask<T>(const Tensor<T>&);                                         \
  template autodiff::Value<T> oscillator_bank<T>(autodiff::Value<T>, autodiff::Value<T>,       \
                                                 const Tensor<T>&, std::int64_t, int,          \
                                                 std::int64_t);                                \
  template NoiseFrames<T> make_noise_frames<T>(std::uint64_t, std::uint64_t, std::int64_t,     \
                                               std::int64_t, std::int64_t);                    \
  template autodiff::Value<T> noise_filter<T>(autodiff::Value<T>, const NoiseFrames<T>&);

VOXSEP_INSTANTIATE_SYNTH(float)
VOXSEP_INSTANTIATE_SYNTH(double)

#undef VOXSEP_INSTANTIATE_SYNTH

}  // namespace voxsep::synth
