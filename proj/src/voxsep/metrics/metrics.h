#pragma once

// Evaluation metrics, all in double precision: scale-invariant SDR for
// separation quality and frame-wise pitch accuracies (raw, chroma, overall)
// for the extracted contours.

#include <cstdint>
#include <string>
#include <vector>

#include "voxsep/core/tensor.h"

namespace voxsep::metrics {

// eta = <s, s_hat> / ||s||^2; returns 10*log10(||eta s||^2 / ||eta s - s_hat||^2),
// clamped to 100 dB when the residual energy drops below 1e-12 * ||eta s||^2.
// An all-zero reference is an error.
double si_sdr(const float* s, const float* s_hat, std::int64_t n);
double si_sdr(const double* s, const double* s_hat, std::int64_t n);
double si_sdr(const Tensor<float>& s, const Tensor<float>& s_hat);

struct PitchScores {
  double oa = 0.0;   // all frames; unvoiced reference counts iff estimate is unvoiced
  double rpa = 0.0;  // voiced reference frames within 50 cents
  double rca = 0.0;  // same, cent error folded mod 1200 into [-600, 600]
};

// Frames are voiced iff f0 > 0. Vacuously true fractions (no frames in the
// denominator pool) report 1.0.
PitchScores pitch_accuracy(const std::vector<double>& ref, const std::vector<double>& est);

double mean(const std::vector<double>& v);
double median(const std::vector<double>& v);  // even count: midpoint of the middle pair

// One row per (excerpt, voice) pair; aggregates pool all rows.
struct PairScores {
  std::string excerpt_id;
  int voice = 0;
  double si_sdr_db = 0.0;
  PitchScores pitch;
};

struct MetricReport {
  std::vector<PairScores> rows;

  std::vector<double> column(double PairScores::*field) const;
  std::vector<double> pitch_column(double PitchScores::*field) const;
};

}  // namespace voxsep::metrics
