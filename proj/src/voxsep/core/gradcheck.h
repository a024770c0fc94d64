#pragma once

// Finite-difference gradient checking in double precision. A fixture owns
// leaf tensors and a builder that assembles a scalar root on a fresh tape;
// the harness compares tape gradients against central differences.

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "voxsep/core/autodiff.h"
#include "voxsep/core/tensor.h"

namespace voxsep::gradcheck {

using DTape = autodiff::Tape<double>;
using DValue = autodiff::Value<double>;

struct Fixture {
  std::string name;
  std::vector<Tensor<double>> inputs;
  std::function<DValue(DTape&, const std::vector<DValue>&)> build;
};

struct Result {
  std::string name;
  double max_rel_err = 0.0;
  bool pass = false;
};

// Central differences with the given step; rel err uses a floored
// denominator so true-zero gradients compare cleanly.
Result run_fixture(const Fixture& f, double step = 1e-5, double tol = 1e-4);

// Runs a list, printing "ok|FAIL <name> rel_err=..." per fixture when
// verbose. Returns true when everything passed.
bool run_and_report(const std::vector<Fixture>& fixtures, bool verbose, double step = 1e-5,
                    double tol = 1e-4);

// Fixtures for the generic op library (>= 5 per op, small inputs).
std::vector<Fixture> core_fixtures();

// Sanity fixture with a deliberately wrong adjoint; run_fixture must fail it.
Fixture broken_backward_fixture();

// Shared input generators for fixture providers in other modules.
Tensor<double> rand_uniform(const std::vector<std::int64_t>& shape, double lo, double hi,
                            std::uint64_t seed);
// Magnitudes in [lo, hi] with random signs: keeps |x| away from kinks at 0.
Tensor<double> rand_signed(const std::vector<std::int64_t>& shape, double lo, double hi,
                           std::uint64_t seed);
// Reduce a tensor value to a scalar via a random constant probe; gives every
// output entry a distinct weight so adjoint errors cannot cancel.
DValue probe_reduce(DTape& tape, DValue y, std::uint64_t seed);

}  // namespace voxsep::gradcheck
