#include "voxsep/metrics/metrics.h"

#include <algorithm>
#include <cmath>

#include "voxsep/common.h"

namespace voxsep::metrics {

namespace {

template <typename S>
double si_sdr_impl(const S* s, const S* s_hat, std::int64_t n) {
  VX_CHECK(n > 0, "si_sdr: empty signals");
  double dot = 0.0, ref_energy = 0.0;
  for (std::int64_t i = 0; i < n; ++i) {
    const double r = s[i];
    dot += r * static_cast<double>(s_hat[i]);
    ref_energy += r * r;
  }
  VX_CHECK(ref_energy > 0.0, "si_sdr: reference is all zero");
  const double eta = dot / ref_energy;

  double target_energy = 0.0, residual_energy = 0.0;
  for (std::int64_t i = 0; i < n; ++i) {
    const double t = eta * static_cast<double>(s[i]);
    const double e = t - static_cast<double>(s_hat[i]);
    target_energy += t * t;
    residual_energy += e * e;
  }
  if (residual_energy < 1e-12 * target_energy) return 100.0;
  return 10.0 * std::log10(target_energy / residual_energy);
}

}  // namespace

double si_sdr(const float* s, const float* s_hat, std::int64_t n) { return si_sdr_impl(s, s_hat, n); }

double si_sdr(const double* s, const double* s_hat, std::int64_t n) {
  return si_sdr_impl(s, s_hat, n);
}

double si_sdr(const Tensor<float>& s, const Tensor<float>& s_hat) {
  VX_CHECK(s.numel() == s_hat.numel(), "si_sdr: length mismatch");
  return si_sdr(s.data(), s_hat.data(), s.numel());
}

PitchScores pitch_accuracy(const std::vector<double>& ref, const std::vector<double>& est) {
  VX_CHECK(ref.size() == est.size(), "pitch_accuracy: frame counts differ");
  std::int64_t voiced = 0, rpa_hits = 0, rca_hits = 0, oa_hits = 0;
  for (std::size_t l = 0; l < ref.size(); ++l) {
    const bool rv = ref[l] > 0.0, ev = est[l] > 0.0;
    if (!rv) {
      if (!ev) ++oa_hits;
      continue;
    }
    ++voiced;
    if (!ev) continue;
    const double cents = 1200.0 * std::log2(est[l] / ref[l]);
    if (std::abs(cents) <= 50.0) {
      ++rpa_hits;
      ++oa_hits;
    }
    // remainder() lands in [-600, 600], folding away octave errors.
    if (std::abs(std::remainder(cents, 1200.0)) <= 50.0) ++rca_hits;
  }
  PitchScores p;
  const auto frac = [](std::int64_t hits, std::int64_t total) {
    return total == 0 ? 1.0 : static_cast<double>(hits) / static_cast<double>(total);
  };
  p.rpa = frac(rpa_hits, voiced);
  p.rca = frac(rca_hits, voiced);
  p.oa = frac(oa_hits, static_cast<std::int64_t>(ref.size()));
  return p;
}

double mean(const std::vector<double>& v) {
  VX_CHECK(!v.empty(), "mean: empty pool");
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

double median(const std::vector<double>& v) {
  VX_CHECK(!v.empty(), "median: empty pool");
  std::vector<double> c = v;
  std::sort(c.begin(), c.end());
  const std::size_t n = c.size();
  if (n % 2 == 1) return c[n / 2];
  return 0.5 * (c[n / 2 - 1] + c[n / 2]);
}

std::vector<double> MetricReport::column(double PairScores::*field) const {
  std::vector<double> out;
  out.reserve(rows.size());
  for (const auto& r : rows) out.push_back(r.*field);
  return out;
}

std::vector<double> MetricReport::pitch_column(double PitchScores::*field) const {
  std::vector<double> out;
  out.reserve(rows.size());
  for (const auto& r : rows) out.push_back(r.pitch.*field);
  return out;
}

}  // namespace voxsep::metrics
