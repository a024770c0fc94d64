#include "voxsep/losses/losses.h"

#include <algorithm>
#include <cstdio>
#include <utility>

#include "voxsep/common.h"
#include "voxsep/core/fft.h"
#include "voxsep/core/ops.h"
#include "voxsep/dsp/stft.h"
#include "voxsep/dsp/stft_core.h"
#include "voxsep/kernels/kernels.h"
#include "voxsep/salience/salience.h"

namespace voxsep::losses {

namespace {

void check_scales(const SpectralLossConfig& cfg, std::int64_t n) {
  VX_CHECK(!cfg.scales.empty(), "spectral loss: scale set is empty");
  for (std::int64_t s : cfg.scales) {
    VX_CHECK(s >= 4 && fft::is_pow2(s), "spectral loss: scales must be powers of two >= 4");
    VX_CHECK(n >= s, "spectral loss: signal shorter than the largest scale");
  }
}

}  // namespace

template <typename T>
TargetSpectra<T> prepare_target(const T* x, std::int64_t n, const SpectralLossConfig& cfg) {
  check_scales(cfg, n);
  const auto& K = kern::active<T>();
  TargetSpectra<T> t;
  t.n = n;
  for (std::int64_t s : cfg.scales) {
    Tensor<T> mag = dsp::stft_mag_tensor(x, n, s, s / 4);
    Tensor<T> lg(mag.shape());
    K.vlog_eps(mag.data(), static_cast<T>(cfg.log_eps), lg.data(),
               static_cast<std::size_t>(mag.numel()));
    t.mags.push_back(std::move(mag));
    t.log_mags.push_back(std::move(lg));
  }
  return t;
}

template <typename T>
autodiff::Value<T> spectral_reconstruction(autodiff::Value<T> x_hat, const TargetSpectra<T>& target,
                                           const SpectralLossConfig& cfg) {
  VX_CHECK(x_hat.shape().size() == 1, "spectral loss: estimate must be rank 1");
  VX_CHECK(x_hat.numel() == target.n, "spectral loss: estimate/target length mismatch");
  VX_CHECK(target.mags.size() == cfg.scales.size(),
           "spectral loss: target prepared with a different scale set");
  auto* tape = x_hat.tape();
  std::vector<autodiff::Value<T>> terms;
  terms.reserve(2 * cfg.scales.size());
  for (std::size_t i = 0; i < cfg.scales.size(); ++i) {
    const std::int64_t s = cfg.scales[i];
    // Same window/framing/FFT kernels as prepare_target, so an estimate that
    // equals the target signal yields a bitwise-zero magnitude difference.
    auto mag = ops::stft_mag(x_hat, s, s / 4, dsp::hann_window<T>(s));
    terms.push_back(ops::l1_diff(mag, tape->constant(target.mags[i])));
    auto lg = ops::log_eps(mag, static_cast<T>(cfg.log_eps));
    terms.push_back(ops::l1_diff(lg, tape->constant(target.log_mags[i])));
  }
  return ops::add_n(terms);
}

template <typename T>
autodiff::Value<T> mix_consistency(const std::vector<autodiff::Value<T>>& assigned,
                                   const Tensor<T>& mixture_map) {
  VX_CHECK(!assigned.empty(), "mix consistency: no assigned maps");
  auto total = ops::add_n(assigned);
  VX_CHECK(total.data().same_shape(mixture_map), "mix consistency: map shape mismatch");
  return ops::mse(total, total.tape()->constant(mixture_map));
}

template <typename T>
autodiff::Value<T> mix_consistency(const std::vector<autodiff::Value<T>>& assigned,
                                   autodiff::Value<T> mixture_map) {
  VX_CHECK(!assigned.empty(), "mix consistency: no assigned maps");
  auto total = ops::add_n(assigned);
  VX_CHECK(total.data().same_shape(mixture_map.data()), "mix consistency: map shape mismatch");
  return ops::mse(total, mixture_map);
}

template <typename T>
autodiff::Value<T> range_penalty(const std::vector<autodiff::Value<T>>& assigned,
                                 const std::vector<Tensor<T>>& masks) {
  VX_CHECK(!assigned.empty() && assigned.size() == masks.size(),
           "range penalty: map/mask count mismatch");
  std::vector<autodiff::Value<T>> terms;
  terms.reserve(assigned.size());
  for (std::size_t j = 0; j < assigned.size(); ++j)
    terms.push_back(ops::mse(assigned[j], ops::mul_cols(assigned[j], masks[j])));
  return ops::add_n(terms);
}

template <typename T>
autodiff::Value<T> binary_pull(const std::vector<autodiff::Value<T>>& assigned, T threshold) {
  VX_CHECK(!assigned.empty(), "binary pull: no assigned maps");
  std::vector<autodiff::Value<T>> terms;
  terms.reserve(assigned.size());
  for (const auto& s : assigned) {
    Tensor<T> hard = salience::binarize(s.data(), threshold);
    terms.push_back(ops::mse(s, s.tape()->constant(std::move(hard))));
  }
  return ops::add_n(terms);
}

LossWeights calibrate(double l_rec, double l1, double l2, double l3) {
  auto ratio = [&](double term, const char* name) {
    if (term == 0.0) {
      std::fprintf(stderr,
                   "warning: loss term %s is zero on the calibration batch; "
                   "its weight falls back to 1.0\n",
                   name);
      return 1.0;
    }
    return std::clamp(l_rec / term, 1e-9, 1e9);
  };
  LossWeights w;
  w.alpha = ratio(l1, "l1");
  w.beta = ratio(l2, "l2");
  w.gamma = ratio(l3, "l3");
  return w;
}

namespace {

using gradcheck::DTape;
using gradcheck::DValue;
using gradcheck::Fixture;

Fixture rec_fixture(std::string name, std::int64_t n, std::vector<std::int64_t> scales,
                    std::uint64_t seed) {
  SpectralLossConfig cfg;
  cfg.scales = std::move(scales);
  // Independent random target: magnitude differences sit away from the
  // absolute-value kink for these seeds.
  Tensor<double> ref = gradcheck::rand_signed({n}, 0.5, 1.5, seed ^ 0x5245ULL);
  auto target = prepare_target<double>(ref.data(), n, cfg);
  Fixture f;
  f.name = std::move(name);
  f.inputs = {gradcheck::rand_signed({n}, 0.2, 1.2, seed)};
  f.build = [cfg, target](DTape&, const std::vector<DValue>& l) {
    return spectral_reconstruction<double>(l[0], target, cfg);
  };
  return f;
}

Fixture mix_fixture(std::string name, std::int64_t J, std::int64_t L, std::int64_t M,
                    std::uint64_t seed) {
  Fixture f;
  f.name = std::move(name);
  for (std::int64_t j = 0; j < J; ++j)
    f.inputs.push_back(gradcheck::rand_uniform({L, M}, 0.0, 1.0, seed + static_cast<std::uint64_t>(j)));
  Tensor<double> mix = gradcheck::rand_uniform({L, M}, 0.0, 1.0, seed ^ 0x4d49ULL);
  f.build = [mix](DTape&, const std::vector<DValue>& l) { return mix_consistency<double>(l, mix); };
  return f;
}

Fixture range_fixture(std::string name, std::int64_t J, std::int64_t L, std::int64_t M,
                      std::uint64_t seed) {
  Fixture f;
  f.name = std::move(name);
  std::vector<Tensor<double>> masks;
  for (std::int64_t j = 0; j < J; ++j) {
    f.inputs.push_back(gradcheck::rand_uniform({L, M}, 0.0, 1.0, seed + static_cast<std::uint64_t>(j)));
    Tensor<double> mask({M});
    // Staggered bands so each voice keeps a different in-range window.
    const std::int64_t lo = (j * M) / (2 * J), hi = lo + M / 2;
    for (std::int64_t m = lo; m < std::min(hi, M); ++m) mask.data()[m] = 1.0;
    masks.push_back(std::move(mask));
  }
  f.build = [masks](DTape&, const std::vector<DValue>& l) { return range_penalty<double>(l, masks); };
  return f;
}

Fixture binary_fixture(std::string name, std::int64_t J, std::int64_t L, std::int64_t M, double lo,
                       double hi, std::uint64_t seed) {
  Fixture f;
  f.name = std::move(name);
  for (std::int64_t j = 0; j < J; ++j)
    f.inputs.push_back(gradcheck::rand_uniform({L, M}, lo, hi, seed + static_cast<std::uint64_t>(j)));
  // The hard map is constant under the finite-difference step as long as row
  // maxima stay clear of ties and of the 0.3 threshold, which these input
  // ranges guarantee.
  f.build = [](DTape&, const std::vector<DValue>& l) { return binary_pull<double>(l, 0.3); };
  return f;
}

}  // namespace

std::vector<gradcheck::Fixture> gradcheck_fixtures() {
  std::vector<Fixture> fs;
  fs.push_back(rec_fixture("spectral_reconstruction/256+128+64 n=1024", 1024, {256, 128, 64}, 11));
  fs.push_back(rec_fixture("spectral_reconstruction/64+32 n=150", 150, {64, 32}, 12));
  fs.push_back(rec_fixture("spectral_reconstruction/32 n=96", 96, {32}, 13));
  fs.push_back(rec_fixture("spectral_reconstruction/128+64 n=300", 300, {128, 64}, 14));
  fs.push_back(rec_fixture("spectral_reconstruction/64 n=64", 64, {64}, 15));

  fs.push_back(mix_fixture("mix_consistency/J3 L4 M10", 3, 4, 10, 21));
  fs.push_back(mix_fixture("mix_consistency/J1 L5 M7", 1, 5, 7, 22));
  fs.push_back(mix_fixture("mix_consistency/J4 L2 M8", 4, 2, 8, 23));
  fs.push_back(mix_fixture("mix_consistency/J2 L6 M5", 2, 6, 5, 24));
  fs.push_back(mix_fixture("mix_consistency/J2 L1 M12", 2, 1, 12, 25));

  fs.push_back(range_fixture("range_penalty/J2 L4 M10", 2, 4, 10, 31));
  fs.push_back(range_fixture("range_penalty/J4 L3 M12", 4, 3, 12, 32));
  fs.push_back(range_fixture("range_penalty/J1 L6 M8", 1, 6, 8, 33));
  fs.push_back(range_fixture("range_penalty/J3 L2 M9", 3, 2, 9, 34));
  fs.push_back(range_fixture("range_penalty/J2 L5 M6", 2, 5, 6, 35));

  fs.push_back(binary_fixture("binary_pull/J2 L3 M8 voiced", 2, 3, 8, 0.35, 0.95, 41));
  fs.push_back(binary_fixture("binary_pull/J1 L4 M9 voiced", 1, 4, 9, 0.35, 0.95, 42));
  fs.push_back(binary_fixture("binary_pull/J3 L2 M6 voiced", 3, 2, 6, 0.35, 0.95, 43));
  fs.push_back(binary_fixture("binary_pull/J2 L3 M8 unvoiced", 2, 3, 8, 0.05, 0.25, 44));
  fs.push_back(binary_fixture("binary_pull/J2 L4 M7 mixed", 2, 4, 7, 0.20, 0.80, 45));
  return fs;
}

#define VOXSEP_INSTANTIATE_LOSSES(T)                                                              \
  template TargetSpectra<T> prepare_target<T>(const T*, std::int64_t, const SpectralLossConfig&); \
  template autodiff::Value<T> spectral_reconstruction<T>(autodiff::Value<T>,                      \
                                                         const TargetSpectra<T>&,                 \
                                                         const SpectralLossConfig&);              \
  template autodiff::Value<T> mix_consistency<T>(const std::vector<autodiff::Value<T>>&,          \
                                                 const Tensor<T>&);                               \
  template autodiff::Value<T> mix_consistency<T>(const std::vector<autodiff::Value<T>>&,          \
                                                 autodiff::Value<T>);                             \
  template autodiff::Value<T> range_penalty<T>(const std::vector<autodiff::Value<T>>&,            \
                                               const std::vector<Tensor<T>>&);                    \
  template autodiff::Value<T> binary_pull<T>(const std::vector<autodiff::Value<T>>&, T);

VOXSEP_INSTANTIATE_LOSSES(float)
VOXSEP_INSTANTIATE_LOSSES(double)

#undef VOXSEP_INSTANTIATE_LOSSES

}  // namespace voxsep::losses
