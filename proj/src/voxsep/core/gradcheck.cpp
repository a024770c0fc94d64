#include "voxsep/core/gradcheck.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <utility>

#include "voxsep/common.h"
#include "voxsep/core/ops.h"
#include "voxsep/core/rng.h"
#include "voxsep/dsp/stft_core.h"
#include "voxsep/kernels/kernels.h"

namespace voxsep::gradcheck {

Tensor<double> rand_uniform(const std::vector<std::int64_t>& shape, double lo, double hi,
                            std::uint64_t seed) {
  Tensor<double> t(shape);
  Rng rng = Rng::derive(0x6f2c9d11u, {seed});
  rng.fill_uniform(t.data(), static_cast<std::size_t>(t.numel()), lo, hi);
  return t;
}

Tensor<double> rand_signed(const std::vector<std::int64_t>& shape, double lo, double hi,
                           std::uint64_t seed) {
  Tensor<double> t(shape);
  Rng rng = Rng::derive(0x51e8a330u, {seed});
  for (std::int64_t i = 0; i < t.numel(); ++i) {
    const double mag = rng.uniform(lo, hi);
    t.data()[i] = rng.uniform() < 0.5 ? -mag : mag;
  }
  return t;
}

DValue probe_reduce(DTape& tape, DValue y, std::uint64_t seed) {
  Tensor<double> probe = rand_signed(y.shape(), 0.5, 1.5, seed ^ 0xabcdef12u);
  return ops::sum(ops::mul_const(y, probe));
}

Result run_fixture(const Fixture& f, double step, double tol) {
  DTape tape;
  std::vector<DValue> leaves;
  leaves.reserve(f.inputs.size());
  for (const auto& in : f.inputs) leaves.push_back(tape.leaf(in, true));
  DValue root = f.build(tape, leaves);
  VX_CHECK(root.numel() == 1, "gradcheck fixture must build a scalar");
  tape.backward(root);
  std::vector<Tensor<double>> analytic;
  analytic.reserve(leaves.size());
  for (const auto& lv : leaves) analytic.push_back(lv.grad());

  auto eval = [&f](const std::vector<Tensor<double>>& ins) {
    DTape t;
    std::vector<DValue> ls;
    ls.reserve(ins.size());
    for (const auto& in : ins) ls.push_back(t.leaf(in, false));
    return f.build(t, ls).data().data()[0];
  };

  std::vector<Tensor<double>> ins = f.inputs;
  double max_rel = 0.0;
  for (std::size_t i = 0; i < ins.size(); ++i) {
    for (std::int64_t j = 0; j < ins[i].numel(); ++j) {
      const double keep = ins[i][j];
      ins[i][j] = keep + step;
      const double fp = eval(ins);
      ins[i][j] = keep - step;
      const double fm = eval(ins);
      ins[i][j] = keep;
      const double fd = (fp - fm) / (2.0 * step);
      const double an = analytic[i][j];
      const double denom = std::max({std::abs(an), std::abs(fd), 1e-6});
      max_rel = std::max(max_rel, std::abs(an - fd) / denom);
    }
  }
  return {f.name, max_rel, max_rel < tol};
}

bool run_and_report(const std::vector<Fixture>& fixtures, bool verbose, double step, double tol) {
  bool all = true;
  for (const auto& f : fixtures) {
    const Result r = run_fixture(f, step, tol);
    if (verbose || !r.pass)
      std::printf("%s %s rel_err=%.3e\n", r.pass ? "ok  " : "FAIL", r.name.c_str(), r.max_rel_err);
    all = all && r.pass;
  }
  return all;
}

namespace {

using ops::Value;

std::string fx_name(const char* op, int i) {
  return std::string(op) + "/" + std::to_string(i);
}

}  // namespace

std::vector<Fixture> core_fixtures() {
  std::vector<Fixture> fs;
  auto addf = [&fs](std::string name, std::vector<Tensor<double>> ins,
                    std::function<DValue(DTape&, const std::vector<DValue>&)> build) {
    fs.push_back({std::move(name), std::move(ins), std::move(build)});
  };

  const std::vector<std::vector<std::int64_t>> shapes = {{3}, {7}, {4, 5}, {2, 3, 4}, {64}};

  for (int i = 0; i < 5; ++i) {
    const auto& sh = shapes[static_cast<std::size_t>(i)];
    const std::uint64_t s = static_cast<std::uint64_t>(i);

    addf(fx_name("add", i), {rand_uniform(sh, -1, 1, s), rand_uniform(sh, -1, 1, s + 10)},
         [s](DTape& t, const std::vector<DValue>& l) {
           return probe_reduce(t, ops::add(l[0], l[1]), s);
         });
    addf(fx_name("sub", i), {rand_uniform(sh, -1, 1, s + 20), rand_uniform(sh, -1, 1, s + 30)},
         [s](DTape& t, const std::vector<DValue>& l) {
           return probe_reduce(t, ops::sub(l[0], l[1]), s + 1);
         });
    addf(fx_name("mul", i), {rand_uniform(sh, -1, 1, s + 40), rand_uniform(sh, -1, 1, s + 50)},
         [s](DTape& t, const std::vector<DValue>& l) {
           return probe_reduce(t, ops::mul(l[0], l[1]), s + 2);
         });
    addf(fx_name("div", i), {rand_uniform(sh, -1, 1, s + 60), rand_signed(sh, 0.5, 1.5, s + 70)},
         [s](DTape& t, const std::vector<DValue>& l) {
           return probe_reduce(t, ops::div(l[0], l[1]), s + 3);
         });
    const double sc[5] = {-2.5, 0.75, 3.0, -0.01, 1.0};
    addf(fx_name("scale", i), {rand_uniform(sh, -1, 1, s + 80)},
         [s, c = sc[i]](DTape& t, const std::vector<DValue>& l) {
           return probe_reduce(t, ops::scale(l[0], c), s + 4);
         });
    addf(fx_name("add_n", i),
         {rand_uniform(sh, -1, 1, s + 90), rand_uniform(sh, -1, 1, s + 91),
          rand_uniform(sh, -1, 1, s + 92)},
         [s](DTape& t, const std::vector<DValue>& l) {
           return probe_reduce(t, ops::add_n<double>({l[0], l[1], l[2]}), s + 5);
         });
    addf(fx_name("mul_const", i), {rand_uniform(sh, -1, 1, s + 95)},
         [s, c = rand_signed(sh, 0.3, 2.0, s + 96)](DTape& t, const std::vector<DValue>& l) {
           return probe_reduce(t, ops::mul_const(l[0], c), s + 6);
         });

    addf(fx_name("sigmoid", i), {rand_uniform(sh, -2, 2, s + 100)},
         [s](DTape& t, const std::vector<DValue>& l) {
           return probe_reduce(t, ops::sigmoid(l[0]), s + 7);
         });
    addf(fx_name("exp", i), {rand_uniform(sh, -2, 2, s + 110)},
         [s](DTape& t, const std::vector<DValue>& l) {
           return probe_reduce(t, ops::exp(l[0]), s + 8);
         });
    const double epss[5] = {1e-7, 1e-3, 1.0, 0.5, 1e-7};
    addf(fx_name("log_eps", i), {rand_uniform(sh, 0.1, 1.1, s + 120)},
         [s, e = epss[i]](DTape& t, const std::vector<DValue>& l) {
           return probe_reduce(t, ops::log_eps(l[0], e), s + 9);
         });
    addf(fx_name("abs", i), {rand_signed(sh, 0.2, 1.2, s + 130)},
         [s](DTape& t, const std::vector<DValue>& l) {
           return probe_reduce(t, ops::abs(l[0]), s + 10);
         });
    const double slopes[5] = {0.1, 0.2, 0.01, 0.5, 0.1};
    addf(fx_name("leaky_relu", i), {rand_signed(sh, 0.2, 1.2, s + 140)},
         [s, sl = slopes[i]](DTape& t, const std::vector<DValue>& l) {
           return probe_reduce(t, ops::leaky_relu(l[0], sl), s + 11);
         });
    addf(fx_name("exp_sigmoid", i), {rand_uniform(sh, -3, 3, s + 150)},
         [s](DTape& t, const std::vector<DValue>& l) {
           return probe_reduce(t, ops::exp_sigmoid(l[0]), s + 12);
         });

    addf(fx_name("sum", i), {rand_uniform(sh, -1, 1, s + 160)},
         [](DTape&, const std::vector<DValue>& l) { return ops::sum(l[0]); });
    addf(fx_name("mean", i), {rand_uniform(sh, -1, 1, s + 170)},
         [](DTape&, const std::vector<DValue>& l) { return ops::mean(l[0]); });
    addf(fx_name("mse", i), {rand_uniform(sh, -1, 1, s + 180), rand_uniform(sh, -1, 1, s + 190)},
         [](DTape&, const std::vector<DValue>& l) { return ops::mse(l[0], l[1]); });
    addf(fx_name("l1_norm", i), {rand_signed(sh, 0.2, 1.2, s + 200)},
         [](DTape&, const std::vector<DValue>& l) { return ops::l1_norm(l[0]); });
    {
      Tensor<double> a = rand_uniform(sh, -1, 1, s + 210);
      Tensor<double> off = rand_signed(sh, 0.2, 0.5, s + 220);
      Tensor<double> b(sh);
      kern::active<double>().add(a.data(), off.data(), b.data(), static_cast<std::size_t>(a.numel()));
      addf(fx_name("l1_diff", i), {a, b},
           [](DTape&, const std::vector<DValue>& l) { return ops::l1_diff(l[0], l[1]); });
    }
  }

  // matmul / linear
  const std::int64_t mm[5][3] = {{2, 3, 4}, {4, 2, 5}, {3, 3, 3}, {1, 4, 2}, {5, 2, 3}};
  for (int i = 0; i < 5; ++i) {
    const std::int64_t m = mm[i][0], k = mm[i][1], nn = mm[i][2];
    const std::uint64_t s = static_cast<std::uint64_t>(i);
    addf(fx_name("matmul", i),
         {rand_uniform({m, k}, -1, 1, s + 300), rand_uniform({k, nn}, -1, 1, s + 310)},
         [s](DTape& t, const std::vector<DValue>& l) {
           return probe_reduce(t, ops::matmul(l[0], l[1]), s + 13);
         });
  }
  const std::int64_t lin[5][3] = {{3, 4, 5}, {1, 6, 2}, {4, 2, 3}, {2, 8, 4}, {5, 3, 1}};
  for (int i = 0; i < 5; ++i) {
    const std::int64_t m = lin[i][0], k = lin[i][1], o = lin[i][2];
    const std::uint64_t s = static_cast<std::uint64_t>(i);
    addf(fx_name("linear", i),
         {rand_uniform({m, k}, -1, 1, s + 320), rand_uniform({o, k}, -1, 1, s + 330),
          rand_uniform({o}, -1, 1, s + 340)},
         [s](DTape& t, const std::vector<DValue>& l) {
           return probe_reduce(t, ops::linear(l[0], l[1], l[2]), s + 14);
         });
  }

  // conv1d / conv2d
  const std::int64_t c1[5][4] = {{1, 8, 2, 3}, {2, 6, 3, 5}, {3, 5, 1, 3}, {2, 7, 2, 1}, {1, 10, 1, 7}};
  for (int i = 0; i < 5; ++i) {
    const std::int64_t ci = c1[i][0], L = c1[i][1], co = c1[i][2], kk = c1[i][3];
    const std::uint64_t s = static_cast<std::uint64_t>(i);
    addf(fx_name("conv1d", i),
         {rand_uniform({ci, L}, -1, 1, s + 350), rand_uniform({co, ci, kk}, -1, 1, s + 360),
          rand_uniform({co}, -1, 1, s + 370)},
         [s](DTape& t, const std::vector<DValue>& l) {
           return probe_reduce(t, ops::conv1d(l[0], l[1], l[2]), s + 15);
         });
  }
  const std::int64_t c2[5][6] = {{1, 4, 5, 2, 3, 3},
                                 {2, 3, 4, 2, 3, 5},
                                 {3, 3, 3, 1, 3, 3},
                                 {1, 5, 5, 1, 5, 5},
                                 {2, 4, 4, 2, 1, 3}};
  for (int i = 0; i < 5; ++i) {
    const std::int64_t ci = c2[i][0], H = c2[i][1], W = c2[i][2], co = c2[i][3], kh = c2[i][4],
                       kw = c2[i][5];
    const std::uint64_t s = static_cast<std::uint64_t>(i);
    addf(fx_name("conv2d", i),
         {rand_uniform({ci, H, W}, -1, 1, s + 380), rand_uniform({co, ci, kh, kw}, -1, 1, s + 390),
          rand_uniform({co}, -1, 1, s + 400)},
         [s](DTape& t, const std::vector<DValue>& l) {
           return probe_reduce(t, ops::conv2d(l[0], l[1], l[2]), s + 16);
         });
  }

  // shape / indexing
  for (int i = 0; i < 5; ++i) {
    const std::uint64_t s = static_cast<std::uint64_t>(i);
    addf(fx_name("reshape", i), {rand_uniform({4, 6}, -1, 1, s + 410)},
         [s](DTape& t, const std::vector<DValue>& l) {
           return probe_reduce(t, ops::reshape(l[0], {2, 12}), s + 17);
         });
    const std::int64_t ranges[5][2] = {{0, 2}, {1, 4}, {2, 5}, {0, 5}, {3, 4}};
    addf(fx_name("slice_rows", i), {rand_uniform({5, 4}, -1, 1, s + 420)},
         [s, r0 = ranges[i][0], r1 = ranges[i][1]](DTape& t, const std::vector<DValue>& l) {
           return probe_reduce(t, ops::slice_rows(l[0], r0, r1), s + 18);
         });
    addf(fx_name("concat_cols", i),
         {rand_uniform({3, 2}, -1, 1, s + 430), rand_uniform({3, 4}, -1, 1, s + 440),
          rand_uniform({3, 1}, -1, 1, s + 450)},
         [s](DTape& t, const std::vector<DValue>& l) {
           return probe_reduce(t, ops::concat_cols<double>({l[0], l[1], l[2]}), s + 19);
         });
    // repeated indices exercise scatter-add in the backward
    const std::vector<std::int64_t> idx = {0, 2, 2, 4, 1};
    if (i % 2 == 0) {
      addf(fx_name("gather_rows", i), {rand_uniform({5, 3}, -1, 1, s + 460)},
           [s, idx](DTape& t, const std::vector<DValue>& l) {
             return probe_reduce(t, ops::gather_rows(l[0], idx), s + 20);
           });
    } else {
      addf(fx_name("gather_rows", i), {rand_uniform({6}, -1, 1, s + 470)},
           [s](DTape& t, const std::vector<DValue>& l) {
             return probe_reduce(t, ops::gather_rows(l[0], {5, 0, 3, 3}), s + 20);
           });
    }
    addf(fx_name("mul_cols", i), {rand_uniform({4, 5}, -1, 1, s + 480)},
         [s, r = rand_signed({5}, 0.3, 1.5, s + 490)](DTape& t, const std::vector<DValue>& l) {
           return probe_reduce(t, ops::mul_cols(l[0], r), s + 21);
         });
    addf(fx_name("scale_rows", i),
         {rand_uniform({4, 5}, -1, 1, s + 500), rand_signed({4}, 0.3, 1.5, s + 510)},
         [s](DTape& t, const std::vector<DValue>& l) {
           return probe_reduce(t, ops::scale_rows(l[0], l[1]), s + 22);
         });
    addf(fx_name("normalize_rows", i), {rand_uniform({4, 5}, 0.2, 1.2, s + 520)},
         [s](DTape& t, const std::vector<DValue>& l) {
           return probe_reduce(t, ops::normalize_rows(l[0]), s + 23);
         });
    addf(fx_name("rows_dot", i), {rand_uniform({4, 6}, -1, 1, s + 530)},
         [s, f = rand_signed({6}, 0.3, 1.5, s + 540)](DTape& t, const std::vector<DValue>& l) {
           return probe_reduce(t, ops::rows_dot(l[0], f), s + 24);
         });
  }

  // signal ops
  const std::int64_t fr[5][3] = {{20, 8, 4}, {15, 4, 2}, {33, 16, 8}, {10, 8, 2}, {9, 4, 4}};
  for (int i = 0; i < 5; ++i) {
    const std::uint64_t s = static_cast<std::uint64_t>(i);
    addf(fx_name("frame", i), {rand_uniform({fr[i][0]}, -1, 1, s + 550)},
         [s, w = fr[i][1], h = fr[i][2]](DTape& t, const std::vector<DValue>& l) {
           return probe_reduce(t, ops::frame(l[0], w, h), s + 25);
         });
  }
  const std::int64_t ol[5][4] = {{3, 8, 4, 12}, {5, 4, 2, 10}, {2, 16, 8, 8}, {4, 8, 8, 32}, {3, 4, 2, 7}};
  for (int i = 0; i < 5; ++i) {
    const std::uint64_t s = static_cast<std::uint64_t>(i);
    addf(fx_name("overlap_add", i), {rand_uniform({ol[i][0], ol[i][1]}, -1, 1, s + 560)},
         [s, h = ol[i][2], n = ol[i][3]](DTape& t, const std::vector<DValue>& l) {
           return probe_reduce(t, ops::overlap_add(l[0], h, n), s + 26);
         });
  }
  const std::int64_t rm[5][2] = {{2, 16}, {3, 8}, {1, 32}, {4, 8}, {2, 4}};
  for (int i = 0; i < 5; ++i) {
    const std::uint64_t s = static_cast<std::uint64_t>(i);
    addf(fx_name("rfft_magnitude", i), {rand_signed({rm[i][0], rm[i][1]}, 0.3, 1.3, s + 570)},
         [s](DTape& t, const std::vector<DValue>& l) {
           return probe_reduce(t, ops::rfft_magnitude(l[0]), s + 27);
         });
  }
  // The straight-through estimator defines its adjoint as the identity; a
  // fixture whose forward rebuilds the hard tensor from the current leaf data
  // makes that definition coincide with a true derivative, so FD checks the
  // backward path exactly.
  for (int i = 0; i < 5; ++i) {
    const std::uint64_t s = static_cast<std::uint64_t>(i);
    const auto& sh = shapes[static_cast<std::size_t>(i)];
    addf(fx_name("straight_through", i), {rand_uniform(sh, -1, 1, s + 580)},
         [s](DTape& t, const std::vector<DValue>& l) {
           return probe_reduce(t, ops::straight_through(l[0], l[0].data()), s + 28);
         });
  }
  const std::int64_t sm[5][3] = {{33, 16, 4}, {20, 8, 4}, {16, 8, 2}, {40, 16, 8}, {12, 4, 2}};
  for (int i = 0; i < 5; ++i) {
    const std::uint64_t s = static_cast<std::uint64_t>(i);
    addf(fx_name("stft_mag", i), {rand_signed({sm[i][0]}, 0.3, 1.3, s + 590)},
         [s, w = sm[i][1], h = sm[i][2]](DTape& t, const std::vector<DValue>& l) {
           return probe_reduce(t, ops::stft_mag(l[0], w, h, dsp::hann_window<double>(w)), s + 29);
         });
  }

  return fs;
}

Fixture broken_backward_fixture() {
  Fixture f;
  f.name = "broken_backward/self_test";
  f.inputs = {rand_uniform({6}, -1, 1, 991)};
  f.build = [](DTape& t, const std::vector<DValue>& l) {
    DValue x = l[0];
    Tensor<double> out(x.shape());
    kern::active<double>().scale(x.data().data(), 2.0, out.data(),
                                 static_cast<std::size_t>(x.numel()));
    // forward is 2x but the adjoint below claims 3x
    DValue y = t.make(std::move(out), {x.node()}, [](autodiff::Node<double>& n) {
      kern::active<double>().axpy(3.0, n.grad.data(), n.parents[0]->grad.data(),
                                  static_cast<std::size_t>(n.data.numel()));
    });
    return probe_reduce(t, y, 17);
  };
  return f;
}

}  // namespace voxsep::gradcheck
