#include "voxsep/core/ops.h"

#include <cmath>
#include <cstring>
#include <memory>
#include <utility>

#include "voxsep/common.h"
#include "voxsep/core/fft.h"
#include "voxsep/dsp/stft_core.h"
#include "voxsep/kernels/kernels.h"

namespace voxsep::ops {

namespace {

template <typename T>
using Node = autodiff::Node<T>;

template <typename T>
const kern::KernelSet<T>& K() {
  return kern::active<T>();
}

template <typename T>
bool needs(const Node<T>* p) {
  return p->requires_grad;
}

// y += x
template <typename T>
void acc(const T* x, T* y, std::int64_t n) {
  if (n > 0) K<T>().axpy(T(1), x, y, static_cast<std::size_t>(n));
}

}  // namespace

template <typename T>
Tensor<T> transpose2d(const Tensor<T>& a) {
  VX_CHECK(a.rank() == 2, "transpose2d: rank 2 required");
  const std::int64_t r = a.dim(0), c = a.dim(1);
  Tensor<T> out({c, r});
  for (std::int64_t i = 0; i < r; ++i)
    for (std::int64_t j = 0; j < c; ++j) out.data()[j * r + i] = a.data()[i * c + j];
  return out;
}

// ---- arithmetic ----

template <typename T>
Value<T> add(Value<T> a, Value<T> b) {
  VX_CHECK(a.data().same_shape(b.data()), "add: shape mismatch");
  Tensor<T> out(a.shape());
  K<T>().add(a.data().data(), b.data().data(), out.data(), static_cast<std::size_t>(out.numel()));
  return a.tape()->make(std::move(out), {a.node(), b.node()}, [](Node<T>& n) {
    const std::int64_t m = n.data.numel();
    if (needs(n.parents[0])) acc(n.grad.data(), n.parents[0]->grad.data(), m);
    if (needs(n.parents[1])) acc(n.grad.data(), n.parents[1]->grad.data(), m);
  });
}

template <typename T>
Value<T> sub(Value<T> a, Value<T> b) {
  VX_CHECK(a.data().same_shape(b.data()), "sub: shape mismatch");
  Tensor<T> out(a.shape());
  K<T>().sub(a.data().data(), b.data().data(), out.data(), static_cast<std::size_t>(out.numel()));
  return a.tape()->make(std::move(out), {a.node(), b.node()}, [](Node<T>& n) {
    const std::size_t m = static_cast<std::size_t>(n.data.numel());
    if (needs(n.parents[0])) K<T>().axpy(T(1), n.grad.data(), n.parents[0]->grad.data(), m);
    if (needs(n.parents[1])) K<T>().axpy(T(-1), n.grad.data(), n.parents[1]->grad.data(), m);
  });
}

template <typename T>
Value<T> mul(Value<T> a, Value<T> b) {
  VX_CHECK(a.data().same_shape(b.data()), "mul: shape mismatch");
  Tensor<T> out(a.shape());
  K<T>().mul(a.data().data(), b.data().data(), out.data(), static_cast<std::size_t>(out.numel()));
  return a.tape()->make(std::move(out), {a.node(), b.node()}, [](Node<T>& n) {
    const std::size_t m = static_cast<std::size_t>(n.data.numel());
    if (needs(n.parents[0])) K<T>().mul_acc(n.grad.data(), n.parents[1]->data.data(), n.parents[0]->grad.data(), m);
    if (needs(n.parents[1])) K<T>().mul_acc(n.grad.data(), n.parents[0]->data.data(), n.parents[1]->grad.data(), m);
  });
}

template <typename T>
Value<T> div(Value<T> a, Value<T> b) {
  VX_CHECK(a.data().same_shape(b.data()), "div: shape mismatch");
  Tensor<T> out(a.shape());
  K<T>().div(a.data().data(), b.data().data(), out.data(), static_cast<std::size_t>(out.numel()));
  return a.tape()->make(std::move(out), {a.node(), b.node()}, [](Node<T>& n) {
    const std::size_t m = static_cast<std::size_t>(n.data.numel());
    std::vector<T> t(m);
    if (needs(n.parents[0])) {
      K<T>().div(n.grad.data(), n.parents[1]->data.data(), t.data(), m);  // g / b
      K<T>().axpy(T(1), t.data(), n.parents[0]->grad.data(), m);
    }
    if (needs(n.parents[1])) {
      K<T>().mul(n.grad.data(), n.data.data(), t.data(), m);              // g * y
      K<T>().div(t.data(), n.parents[1]->data.data(), t.data(), m);       // g * y / b
      K<T>().axpy(T(-1), t.data(), n.parents[1]->grad.data(), m);
    }
  });
}

template <typename T>
Value<T> scale(Value<T> a, T c) {
  Tensor<T> out(a.shape());
  K<T>().scale(a.data().data(), c, out.data(), static_cast<std::size_t>(out.numel()));
  return a.tape()->make(std::move(out), {a.node()}, [c](Node<T>& n) {
    K<T>().axpy(c, n.grad.data(), n.parents[0]->grad.data(), static_cast<std::size_t>(n.data.numel()));
  });
}

template <typename T>
Value<T> add_n(const std::vector<Value<T>>& xs) {
  VX_CHECK(!xs.empty(), "add_n: empty input list");
  Tensor<T> out = xs[0].data();
  std::vector<Node<T>*> parents = {xs[0].node()};
  for (std::size_t i = 1; i < xs.size(); ++i) {
    VX_CHECK(xs[i].data().same_shape(out), "add_n: shape mismatch");
    K<T>().add(out.data(), xs[i].data().data(), out.data(), static_cast<std::size_t>(out.numel()));
    parents.push_back(xs[i].node());
  }
  return xs[0].tape()->make(std::move(out), std::move(parents), [](Node<T>& n) {
    for (Node<T>* p : n.parents)
      if (needs(p)) acc(n.grad.data(), p->grad.data(), n.data.numel());
  });
}

template <typename T>
Value<T> mul_const(Value<T> a, const Tensor<T>& c) {
  VX_CHECK(a.data().same_shape(c), "mul_const: shape mismatch");
  Tensor<T> out(a.shape());
  K<T>().mul(a.data().data(), c.data(), out.data(), static_cast<std::size_t>(out.numel()));
  return a.tape()->make(std::move(out), {a.node()}, [c](Node<T>& n) {
    K<T>().mul_acc(n.grad.data(), c.data(), n.parents[0]->grad.data(), static_cast<std::size_t>(n.data.numel()));
  });
}

// ---- maps ----

template <typename T>
Value<T> sigmoid(Value<T> a) {
  Tensor<T> out(a.shape());
  K<T>().vsigmoid(a.data().data(), out.data(), static_cast<std::size_t>(out.numel()));
  return a.tape()->make(std::move(out), {a.node()}, [](Node<T>& n) {
    const std::int64_t m = n.data.numel();
    const T* g = n.grad.data();
    const T* y = n.data.data();
    T* d = n.parents[0]->grad.data();
    for (std::int64_t i = 0; i < m; ++i) d[i] += g[i] * y[i] * (T(1) - y[i]);
  });
}

template <typename T>
Value<T> exp(Value<T> a) {
  Tensor<T> out(a.shape());
  K<T>().vexp(a.data().data(), out.data(), static_cast<std::size_t>(out.numel()));
  return a.tape()->make(std::move(out), {a.node()}, [](Node<T>& n) {
    K<T>().mul_acc(n.grad.data(), n.data.data(), n.parents[0]->grad.data(), static_cast<std::size_t>(n.data.numel()));
  });
}

template <typename T>
Value<T> log_eps(Value<T> a, T eps) {
  Tensor<T> out(a.shape());
  K<T>().vlog_eps(a.data().data(), eps, out.data(), static_cast<std::size_t>(out.numel()));
  return a.tape()->make(std::move(out), {a.node()}, [eps](Node<T>& n) {
    const std::int64_t m = n.data.numel();
    const T* g = n.grad.data();
    const T* x = n.parents[0]->data.data();
    T* d = n.parents[0]->grad.data();
    for (std::int64_t i = 0; i < m; ++i) d[i] += g[i] / (x[i] + eps);
  });
}

template <typename T>
Value<T> abs(Value<T> a) {
  Tensor<T> out(a.shape());
  K<T>().vabs(a.data().data(), out.data(), static_cast<std::size_t>(out.numel()));
  return a.tape()->make(std::move(out), {a.node()}, [](Node<T>& n) {
    const std::int64_t m = n.data.numel();
    const T* g = n.grad.data();
    const T* x = n.parents[0]->data.data();
    T* d = n.parents[0]->grad.data();
    for (std::int64_t i = 0; i < m; ++i) d[i] += x[i] > T(0) ? g[i] : (x[i] < T(0) ? -g[i] : T(0));
  });
}

template <typename T>
Value<T> leaky_relu(Value<T> a, T slope) {
  Tensor<T> out(a.shape());
  K<T>().leaky_relu(a.data().data(), slope, out.data(), static_cast<std::size_t>(out.numel()));
  return a.tape()->make(std::move(out), {a.node()}, [slope](Node<T>& n) {
    K<T>().leaky_relu_grad(n.parents[0]->data.data(), n.grad.data(), slope, n.parents[0]->grad.data(),
                           static_cast<std::size_t>(n.data.numel()));
  });
}

template <typename T>
Value<T> exp_sigmoid(Value<T> a) {
  // 2 * sigmoid(x)^ln(10) + 1e-7: positive, smooth, saturates near 2.
  static const T kPow = static_cast<T>(2.302585092994045684);
  static const T kOff = static_cast<T>(1e-7);
  const std::size_t m = static_cast<std::size_t>(a.numel());
  auto s = std::make_shared<std::vector<T>>(m);
  K<T>().vsigmoid(a.data().data(), s->data(), m);
  Tensor<T> out(a.shape());
  for (std::size_t i = 0; i < m; ++i)
    out.data()[i] = T(2) * std::exp(kPow * std::log((*s)[i])) + kOff;
  return a.tape()->make(std::move(out), {a.node()}, [s](Node<T>& n) {
    const std::int64_t m2 = n.data.numel();
    const T* g = n.grad.data();
    const T* y = n.data.data();
    T* d = n.parents[0]->grad.data();
    for (std::int64_t i = 0; i < m2; ++i)
      d[i] += g[i] * kPow * (y[i] - kOff) * (T(1) - (*s)[static_cast<std::size_t>(i)]);
  });
}

// ---- reductions ----

template <typename T>
Value<T> sum(Value<T> a) {
  VX_CHECK(a.numel() > 0, "sum: empty input");
  Tensor<T> out = Tensor<T>::scalar(K<T>().sum(a.data().data(), static_cast<std::size_t>(a.numel())));
  return a.tape()->make(std::move(out), {a.node()}, [](Node<T>& n) {
    const T g = n.grad.data()[0];
    T* d = n.parents[0]->grad.data();
    const std::int64_t m = n.parents[0]->data.numel();
    for (std::int64_t i = 0; i < m; ++i) d[i] += g;
  });
}

template <typename T>
Value<T> mean(Value<T> a) {
  VX_CHECK(a.numel() > 0, "mean: empty input");
  const T inv = T(1) / static_cast<T>(a.numel());
  Tensor<T> out = Tensor<T>::scalar(K<T>().sum(a.data().data(), static_cast<std::size_t>(a.numel())) * inv);
  return a.tape()->make(std::move(out), {a.node()}, [inv](Node<T>& n) {
    const T g = n.grad.data()[0] * inv;
    T* d = n.parents[0]->grad.data();
    const std::int64_t m = n.parents[0]->data.numel();
    for (std::int64_t i = 0; i < m; ++i) d[i] += g;
  });
}

template <typename T>
Value<T> mse(Value<T> a, Value<T> b) {
  VX_CHECK(a.data().same_shape(b.data()), "mse: shape mismatch");
  VX_CHECK(a.numel() > 0, "mse: empty input");
  const std::size_t m = static_cast<std::size_t>(a.numel());
  Tensor<T> out = Tensor<T>::scalar(K<T>().sq_diff_sum(a.data().data(), b.data().data(), m) / static_cast<T>(m));
  return a.tape()->make(std::move(out), {a.node(), b.node()}, [](Node<T>& n) {
    const std::int64_t m2 = n.parents[0]->data.numel();
    const T c = T(2) * n.grad.data()[0] / static_cast<T>(m2);
    const T* pa = n.parents[0]->data.data();
    const T* pb = n.parents[1]->data.data();
    const bool na = needs(n.parents[0]), nb = needs(n.parents[1]);
    T* da = na ? n.parents[0]->grad.data() : nullptr;
    T* db = nb ? n.parents[1]->grad.data() : nullptr;
    for (std::int64_t i = 0; i < m2; ++i) {
      const T d = c * (pa[i] - pb[i]);
      if (na) da[i] += d;
      if (nb) db[i] -= d;
    }
  });
}

template <typename T>
Value<T> l1_norm(Value<T> a) {
  VX_CHECK(a.numel() > 0, "l1_norm: empty input");
  Tensor<T> out = Tensor<T>::scalar(K<T>().abs_sum(a.data().data(), static_cast<std::size_t>(a.numel())));
  return a.tape()->make(std::move(out), {a.node()}, [](Node<T>& n) {
    const T g = n.grad.data()[0];
    const T* x = n.parents[0]->data.data();
    T* d = n.parents[0]->grad.data();
    const std::int64_t m = n.parents[0]->data.numel();
    for (std::int64_t i = 0; i < m; ++i) d[i] += x[i] > T(0) ? g : (x[i] < T(0) ? -g : T(0));
  });
}

template <typename T>
Value<T> l1_diff(Value<T> a, Value<T> b) {
  VX_CHECK(a.data().same_shape(b.data()), "l1_diff: shape mismatch");
  VX_CHECK(a.numel() > 0, "l1_diff: empty input");
  Tensor<T> out = Tensor<T>::scalar(
      K<T>().abs_diff_sum(a.data().data(), b.data().data(), static_cast<std::size_t>(a.numel())));
  return a.tape()->make(std::move(out), {a.node(), b.node()}, [](Node<T>& n) {
    const T g = n.grad.data()[0];
    const std::int64_t m = n.parents[0]->data.numel();
    const T* pa = n.parents[0]->data.data();
    const T* pb = n.parents[1]->data.data();
    const bool na = needs(n.parents[0]), nb = needs(n.parents[1]);
    T* da = na ? n.parents[0]->grad.data() : nullptr;
    T* db = nb ? n.parents[1]->grad.data() : nullptr;
    for (std::int64_t i = 0; i < m; ++i) {
      const T diff = pa[i] - pb[i];
      const T s = diff > T(0) ? g : (diff < T(0) ? -g : T(0));
      if (na) da[i] += s;
      if (nb) db[i] -= s;
    }
  });
}

// ---- linear algebra ----

template <typename T>
Value<T> matmul(Value<T> a, Value<T> b) {
  VX_CHECK(a.data().rank() == 2 && b.data().rank() == 2, "matmul: rank 2 required");
  VX_CHECK(a.data().dim(1) == b.data().dim(0), "matmul: inner dimensions differ");
  const std::size_t m = static_cast<std::size_t>(a.data().dim(0));
  const std::size_t k = static_cast<std::size_t>(a.data().dim(1));
  const std::size_t nn = static_cast<std::size_t>(b.data().dim(1));
  Tensor<T> out({a.data().dim(0), b.data().dim(1)});
  K<T>().gemm(m, nn, k, a.data().data(), b.data().data(), out.data(), false);
  return a.tape()->make(std::move(out), {a.node(), b.node()}, [m, k, nn](Node<T>& n) {
    if (needs(n.parents[0])) {
      Tensor<T> bt = transpose2d(n.parents[1]->data);  // [n, k]
      K<T>().gemm(m, k, nn, n.grad.data(), bt.data(), n.parents[0]->grad.data(), true);
    }
    if (needs(n.parents[1])) {
      Tensor<T> at = transpose2d(n.parents[0]->data);  // [k, m]
      K<T>().gemm(k, nn, m, at.data(), n.grad.data(), n.parents[1]->grad.data(), true);
    }
  });
}

template <typename T>
Value<T> linear(Value<T> x, Value<T> w, Value<T> b) {
  VX_CHECK(x.data().rank() == 2 && w.data().rank() == 2 && b.data().rank() == 1, "linear: bad ranks");
  VX_CHECK(x.data().dim(1) == w.data().dim(1), "linear: feature dimensions differ");
  VX_CHECK(b.data().dim(0) == w.data().dim(0), "linear: bias size differs from output");
  const std::size_t m = static_cast<std::size_t>(x.data().dim(0));
  const std::size_t kf = static_cast<std::size_t>(x.data().dim(1));
  const std::size_t o = static_cast<std::size_t>(w.data().dim(0));
  Tensor<T> wt = transpose2d(w.data());  // [k, out]
  Tensor<T> out({x.data().dim(0), w.data().dim(0)});
  K<T>().gemm(m, o, kf, x.data().data(), wt.data(), out.data(), false);
  for (std::size_t r = 0; r < m; ++r)
    K<T>().add(out.data() + r * o, b.data().data(), out.data() + r * o, o);
  return x.tape()->make(std::move(out), {x.node(), w.node(), b.node()}, [m, kf, o](Node<T>& n) {
    if (needs(n.parents[0]))
      K<T>().gemm(m, kf, o, n.grad.data(), n.parents[1]->data.data(), n.parents[0]->grad.data(), true);
    if (needs(n.parents[1])) {
      Tensor<T> gt = transpose2d(n.grad);  // [out, m]
      K<T>().gemm(o, kf, m, gt.data(), n.parents[0]->data.data(), n.parents[1]->grad.data(), true);
    }
    if (needs(n.parents[2])) {
      T* db = n.parents[2]->grad.data();
      for (std::size_t r = 0; r < m; ++r) K<T>().axpy(T(1), n.grad.data() + r * o, db, o);
    }
  });
}

template <typename T>
Value<T> conv1d(Value<T> x, Value<T> w, Value<T> b) {
  VX_CHECK(x.data().rank() == 2 && w.data().rank() == 3 && b.data().rank() == 1, "conv1d: bad ranks");
  const std::int64_t cin = x.data().dim(0), L = x.data().dim(1);
  const std::int64_t cout = w.data().dim(0), kk = w.data().dim(2);
  VX_CHECK(w.data().dim(1) == cin, "conv1d: channel mismatch");
  VX_CHECK(kk % 2 == 1, "conv1d: kernel length must be odd");
  VX_CHECK(b.data().dim(0) == cout, "conv1d: bias size mismatch");
  const std::int64_t p = kk / 2;
  Tensor<T> out({cout, L});
  for (std::int64_t co = 0; co < cout; ++co) {
    T* yrow = out.data() + co * L;
    const T bv = b.data().data()[co];
    for (std::int64_t l = 0; l < L; ++l) yrow[l] = bv;
    for (std::int64_t ci = 0; ci < cin; ++ci) {
      const T* xrow = x.data().data() + ci * L;
      const T* wrow = w.data().data() + (co * cin + ci) * kk;
      for (std::int64_t dk = 0; dk < kk; ++dk) {
        const std::int64_t c = dk - p;
        const std::int64_t l0 = c < 0 ? -c : 0;
        const std::int64_t l1 = c > 0 ? L - c : L;
        if (l1 > l0) K<T>().axpy(wrow[dk], xrow + l0 + c, yrow + l0, static_cast<std::size_t>(l1 - l0));
      }
    }
  }
  return x.tape()->make(std::move(out), {x.node(), w.node(), b.node()}, [cin, L, cout, kk, p](Node<T>& n) {
    const bool nx = needs(n.parents[0]), nw = needs(n.parents[1]), nb = needs(n.parents[2]);
    for (std::int64_t co = 0; co < cout; ++co) {
      const T* grow = n.grad.data() + co * L;
      if (nb) n.parents[2]->grad.data()[co] += K<T>().sum(grow, static_cast<std::size_t>(L));
      for (std::int64_t ci = 0; ci < cin; ++ci) {
        const T* xrow = n.parents[0]->data.data() + ci * L;
        const T* wrow = n.parents[1]->data.data() + (co * cin + ci) * kk;
        T* dxrow = nx ? n.parents[0]->grad.data() + ci * L : nullptr;
        T* dwrow = nw ? n.parents[1]->grad.data() + (co * cin + ci) * kk : nullptr;
        for (std::int64_t dk = 0; dk < kk; ++dk) {
          const std::int64_t c = dk - p;
          const std::int64_t l0 = c < 0 ? -c : 0;
          const std::int64_t l1 = c > 0 ? L - c : L;
          if (l1 <= l0) continue;
          const std::size_t len = static_cast<std::size_t>(l1 - l0);
          if (nx) K<T>().axpy(wrow[dk], grow + l0, dxrow + l0 + c, len);
          if (nw) dwrow[dk] += K<T>().dot(grow + l0, xrow + l0 + c, len);
        }
      }
    }
  });
}

template <typename T>
Value<T> conv2d(Value<T> x, Value<T> w, Value<T> b) {
  VX_CHECK(x.data().rank() == 3 && w.data().rank() == 4 && b.data().rank() == 1, "conv2d: bad ranks");
  const std::int64_t cin = x.data().dim(0), H = x.data().dim(1), W = x.data().dim(2);
  const std::int64_t cout = w.data().dim(0), kh = w.data().dim(2), kw = w.data().dim(3);
  VX_CHECK(w.data().dim(1) == cin, "conv2d: channel mismatch");
  VX_CHECK(kh % 2 == 1 && kw % 2 == 1, "conv2d: kernel dims must be odd");
  VX_CHECK(b.data().dim(0) == cout, "conv2d: bias size mismatch");
  const std::int64_t ph = kh / 2, pw = kw / 2, plane = H * W;
  Tensor<T> out({cout, H, W});
  for (std::int64_t co = 0; co < cout; ++co) {
    T* yp = out.data() + co * plane;
    const T bv = b.data().data()[co];
    for (std::int64_t i = 0; i < plane; ++i) yp[i] = bv;
    for (std::int64_t ci = 0; ci < cin; ++ci) {
      const T* xp = x.data().data() + ci * plane;
      const T* wk = w.data().data() + (co * cin + ci) * kh * kw;
      for (std::int64_t dy = 0; dy < kh; ++dy) {
        const std::int64_t r = dy - ph;
        const std::int64_t h0 = r < 0 ? -r : 0;
        const std::int64_t h1 = r > 0 ? H - r : H;
        for (std::int64_t dx = 0; dx < kw; ++dx) {
          const T wv = wk[dy * kw + dx];
          const std::int64_t c = dx - pw;
          const std::int64_t x0 = c < 0 ? -c : 0;
          const std::int64_t x1 = c > 0 ? W - c : W;
          if (x1 <= x0) continue;
          const std::size_t len = static_cast<std::size_t>(x1 - x0);
          for (std::int64_t h = h0; h < h1; ++h)
            K<T>().axpy(wv, xp + (h + r) * W + x0 + c, yp + h * W + x0, len);
        }
      }
    }
  }
  return x.tape()->make(std::move(out), {x.node(), w.node(), b.node()},
                        [cin, H, W, cout, kh, kw, ph, pw, plane](Node<T>& n) {
    const bool nx = needs(n.parents[0]), nw = needs(n.parents[1]), nb = needs(n.parents[2]);
    for (std::int64_t co = 0; co < cout; ++co) {
      const T* gp = n.grad.data() + co * plane;
      if (nb) n.parents[2]->grad.data()[co] += K<T>().sum(gp, static_cast<std::size_t>(plane));
      for (std::int64_t ci = 0; ci < cin; ++ci) {
        const T* xp = n.parents[0]->data.data() + ci * plane;
        T* dxp = nx ? n.parents[0]->grad.data() + ci * plane : nullptr;
        const T* wk = n.parents[1]->data.data() + (co * cin + ci) * kh * kw;
        T* dwk = nw ? n.parents[1]->grad.data() + (co * cin + ci) * kh * kw : nullptr;
        for (std::int64_t dy = 0; dy < kh; ++dy) {
          const std::int64_t r = dy - ph;
          const std::int64_t h0 = r < 0 ? -r : 0;
          const std::int64_t h1 = r > 0 ? H - r : H;
          for (std::int64_t dx = 0; dx < kw; ++dx) {
            const std::int64_t c = dx - pw;
            const std::int64_t x0 = c < 0 ? -c : 0;
            const std::int64_t x1 = c > 0 ? W - c : W;
            if (x1 <= x0) continue;
            const std::size_t len = static_cast<std::size_t>(x1 - x0);
            const T wv = wk[dy * kw + dx];
            T dw_acc = T(0);
            for (std::int64_t h = h0; h < h1; ++h) {
              if (nx) K<T>().axpy(wv, gp + h * W + x0, dxp + (h + r) * W + x0 + c, len);
              if (nw) dw_acc += K<T>().dot(gp + h * W + x0, xp + (h + r) * W + x0 + c, len);
            }
            if (nw) dwk[dy * kw + dx] += dw_acc;
          }
        }
      }
    }
  });
}

// ---- shape and indexing ----

template <typename T>
Value<T> reshape(Value<T> a, std::vector<std::int64_t> shape) {
  Tensor<T> out = a.data().reshaped(shape);
  return a.tape()->make(std::move(out), {a.node()}, [](Node<T>& n) {
    acc(n.grad.data(), n.parents[0]->grad.data(), n.data.numel());
  });
}

template <typename T>
Value<T> slice_rows(Value<T> a, std::int64_t r0, std::int64_t r1) {
  VX_CHECK(a.data().rank() >= 1, "slice_rows: rank >= 1 required");
  const std::int64_t R = a.data().dim(0);
  VX_CHECK(0 <= r0 && r0 < r1 && r1 <= R, "slice_rows: bad range");
  const std::int64_t rowsz = a.numel() / R;
  std::vector<std::int64_t> oshape = a.shape();
  oshape[0] = r1 - r0;
  Tensor<T> out(oshape);
  std::copy(a.data().data() + r0 * rowsz, a.data().data() + r1 * rowsz, out.data());
  return a.tape()->make(std::move(out), {a.node()}, [r0, rowsz](Node<T>& n) {
    acc(n.grad.data(), n.parents[0]->grad.data() + r0 * rowsz, n.data.numel());
  });
}

template <typename T>
Value<T> concat_cols(const std::vector<Value<T>>& parts) {
  VX_CHECK(!parts.empty(), "concat_cols: empty input list");
  const std::int64_t R = parts[0].data().dim(0);
  std::int64_t total = 0;
  std::vector<Node<T>*> parents;
  std::vector<std::int64_t> widths;
  for (const auto& p : parts) {
    VX_CHECK(p.data().rank() == 2, "concat_cols: rank 2 required");
    VX_CHECK(p.data().dim(0) == R, "concat_cols: row counts differ");
    widths.push_back(p.data().dim(1));
    total += p.data().dim(1);
    parents.push_back(p.node());
  }
  Tensor<T> out({R, total});
  std::int64_t off = 0;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    const std::int64_t w = widths[i];
    const T* src = parts[i].data().data();
    for (std::int64_t r = 0; r < R; ++r)
      std::copy(src + r * w, src + (r + 1) * w, out.data() + r * total + off);
    off += w;
  }
  return parts[0].tape()->make(std::move(out), std::move(parents), [R, total, widths](Node<T>& n) {
    std::int64_t off2 = 0;
    for (std::size_t i = 0; i < n.parents.size(); ++i) {
      const std::int64_t w = widths[i];
      if (needs(n.parents[i])) {
        T* d = n.parents[i]->grad.data();
        for (std::int64_t r = 0; r < R; ++r) acc(n.grad.data() + r * total + off2, d + r * w, w);
      }
      off2 += w;
    }
  });
}

template <typename T>
Value<T> gather_rows(Value<T> a, const std::vector<std::int64_t>& idx) {
  VX_CHECK(a.data().rank() == 1 || a.data().rank() == 2, "gather_rows: rank 1 or 2 required");
  const std::int64_t R = a.data().dim(0);
  const std::int64_t rowsz = a.numel() / R;
  for (std::int64_t i : idx) VX_CHECK(0 <= i && i < R, "gather_rows: index out of range");
  std::vector<std::int64_t> oshape = a.shape();
  oshape[0] = static_cast<std::int64_t>(idx.size());
  Tensor<T> out(oshape);
  for (std::size_t r = 0; r < idx.size(); ++r)
    std::copy(a.data().data() + idx[r] * rowsz, a.data().data() + (idx[r] + 1) * rowsz,
              out.data() + static_cast<std::int64_t>(r) * rowsz);
  return a.tape()->make(std::move(out), {a.node()}, [idx, rowsz](Node<T>& n) {
    T* d = n.parents[0]->grad.data();
    for (std::size_t r = 0; r < idx.size(); ++r)
      acc(n.grad.data() + static_cast<std::int64_t>(r) * rowsz, d + idx[r] * rowsz, rowsz);
  });
}

template <typename T>
Value<T> mul_cols(Value<T> a, const Tensor<T>& r) {
  VX_CHECK(a.data().rank() == 2 && r.rank() == 1, "mul_cols: need [R,C] and [C]");
  const std::int64_t R = a.data().dim(0), C = a.data().dim(1);
  VX_CHECK(r.dim(0) == C, "mul_cols: width mismatch");
  Tensor<T> out({R, C});
  for (std::int64_t i = 0; i < R; ++i)
    K<T>().mul(a.data().data() + i * C, r.data(), out.data() + i * C, static_cast<std::size_t>(C));
  return a.tape()->make(std::move(out), {a.node()}, [r, R, C](Node<T>& n) {
    T* d = n.parents[0]->grad.data();
    for (std::int64_t i = 0; i < R; ++i)
      K<T>().mul_acc(n.grad.data() + i * C, r.data(), d + i * C, static_cast<std::size_t>(C));
  });
}

template <typename T>
Value<T> scale_rows(Value<T> a, Value<T> c) {
  VX_CHECK(a.data().rank() == 2 && c.data().rank() == 1, "scale_rows: need [R,C] and [R]");
  const std::int64_t R = a.data().dim(0), C = a.data().dim(1);
  VX_CHECK(c.data().dim(0) == R, "scale_rows: row count mismatch");
  Tensor<T> out({R, C});
  for (std::int64_t i = 0; i < R; ++i)
    K<T>().scale(a.data().data() + i * C, c.data().data()[i], out.data() + i * C, static_cast<std::size_t>(C));
  return a.tape()->make(std::move(out), {a.node(), c.node()}, [R, C](Node<T>& n) {
    const T* cv = n.parents[1]->data.data();
    const T* av = n.parents[0]->data.data();
    for (std::int64_t i = 0; i < R; ++i) {
      const T* g = n.grad.data() + i * C;
      if (needs(n.parents[0]))
        K<T>().axpy(cv[i], g, n.parents[0]->grad.data() + i * C, static_cast<std::size_t>(C));
      if (needs(n.parents[1]))
        n.parents[1]->grad.data()[i] += K<T>().dot(g, av + i * C, static_cast<std::size_t>(C));
    }
  });
}

template <typename T>
Value<T> normalize_rows(Value<T> a) {
  VX_CHECK(a.data().rank() == 2, "normalize_rows: rank 2 required");
  const std::int64_t R = a.data().dim(0), C = a.data().dim(1);
  auto sums = std::make_shared<std::vector<T>>(static_cast<std::size_t>(R));
  Tensor<T> out({R, C});
  for (std::int64_t i = 0; i < R; ++i) {
    const T s = K<T>().sum(a.data().data() + i * C, static_cast<std::size_t>(C));
    VX_CHECK(s > T(0), "normalize_rows: row sum must be positive");
    (*sums)[static_cast<std::size_t>(i)] = s;
    K<T>().scale(a.data().data() + i * C, T(1) / s, out.data() + i * C, static_cast<std::size_t>(C));
  }
  return a.tape()->make(std::move(out), {a.node()}, [sums, R, C](Node<T>& n) {
    T* d = n.parents[0]->grad.data();
    for (std::int64_t i = 0; i < R; ++i) {
      const T* g = n.grad.data() + i * C;
      const T* y = n.data.data() + i * C;
      const T t = K<T>().dot(g, y, static_cast<std::size_t>(C));
      const T inv = T(1) / (*sums)[static_cast<std::size_t>(i)];
      T* drow = d + i * C;
      for (std::int64_t j = 0; j < C; ++j) drow[j] += (g[j] - t) * inv;
    }
  });
}

template <typename T>
Value<T> rows_dot(Value<T> a, const Tensor<T>& f) {
  VX_CHECK(a.data().rank() == 2 && f.rank() == 1, "rows_dot: need [R,C] and [C]");
  const std::int64_t R = a.data().dim(0), C = a.data().dim(1);
  VX_CHECK(f.dim(0) == C, "rows_dot: width mismatch");
  Tensor<T> out({R});
  for (std::int64_t i = 0; i < R; ++i)
    out.data()[i] = K<T>().dot(a.data().data() + i * C, f.data(), static_cast<std::size_t>(C));
  return a.tape()->make(std::move(out), {a.node()}, [f, R, C](Node<T>& n) {
    T* d = n.parents[0]->grad.data();
    for (std::int64_t i = 0; i < R; ++i)
      K<T>().axpy(n.grad.data()[i], f.data(), d + i * C, static_cast<std::size_t>(C));
  });
}

// ---- signal ----

template <typename T>
Value<T> frame(Value<T> x, std::int64_t win, std::int64_t hop) {
  VX_CHECK(x.data().rank() == 1, "frame: rank 1 required");
  const std::int64_t n = x.data().dim(0);
  Tensor<T> out = dsp::frame_signal(x.data().data(), n, win, hop);
  return x.tape()->make(std::move(out), {x.node()}, [n, win, hop](Node<T>& nd) {
    const std::int64_t L = nd.data.dim(0);
    const std::int64_t half = win / 2;
    T* d = nd.parents[0]->grad.data();
    for (std::int64_t l = 0; l < L; ++l) {
      const std::int64_t start = l * hop - half;
      const std::int64_t i0 = start < 0 ? -start : 0;
      const std::int64_t i1 = std::min(win, n - start);
      if (i1 > i0) acc(nd.grad.data() + l * win + i0, d + start + i0, i1 - i0);
    }
  });
}

template <typename T>
Value<T> overlap_add(Value<T> frames, std::int64_t hop, std::int64_t out_len) {
  VX_CHECK(frames.data().rank() == 2, "overlap_add: rank 2 required");
  VX_CHECK(out_len > 0 && hop > 0, "overlap_add: bad sizes");
  const std::int64_t L = frames.data().dim(0), win = frames.data().dim(1);
  const std::int64_t half = win / 2;
  Tensor<T> out({out_len});
  for (std::int64_t l = 0; l < L; ++l) {
    const std::int64_t start = l * hop - half;
    const std::int64_t i0 = start < 0 ? -start : 0;
    const std::int64_t i1 = std::min(win, out_len - start);
    if (i1 > i0) acc(frames.data().data() + l * win + i0, out.data() + start + i0, i1 - i0);
  }
  return frames.tape()->make(std::move(out), {frames.node()}, [hop, out_len, L, win, half](Node<T>& n) {
    T* d = n.parents[0]->grad.data();
    for (std::int64_t l = 0; l < L; ++l) {
      const std::int64_t start = l * hop - half;
      const std::int64_t i0 = start < 0 ? -start : 0;
      const std::int64_t i1 = std::min(win, out_len - start);
      if (i1 > i0) acc(n.grad.data() + start + i0, d + l * win + i0, i1 - i0);
    }
  });
}

template <typename T>
Value<T> rfft_magnitude(Value<T> frames) {
  auto spectra = std::make_shared<std::vector<std::complex<T>>>();
  Tensor<T> out = dsp::rfft_mag_rows(frames.data(), spectra.get());
  const std::int64_t win = frames.data().dim(1);
  return frames.tape()->make(std::move(out), {frames.node()}, [spectra, win](Node<T>& n) {
    // d|X|/dx = Re[conj(X)/|X| * dX/dx]; folded onto the half spectrum this is
    // N * irfft(v) with v_k = u_k / c_k, u_k = g_k X_k / max(|X_k|, tiny),
    // c_k = 1 at DC and Nyquist, 2 elsewhere.
    const std::int64_t L = n.data.dim(0), Kb = n.data.dim(1);
    const T tiny = static_cast<T>(1e-30);
    std::vector<std::complex<T>> v(static_cast<std::size_t>(Kb));
    std::vector<T> xg(static_cast<std::size_t>(win));
    T* d = n.parents[0]->grad.data();
    for (std::int64_t l = 0; l < L; ++l) {
      const T* g = n.grad.data() + l * Kb;
      const T* m = n.data.data() + l * Kb;
      const std::complex<T>* X = spectra->data() + l * Kb;
      for (std::int64_t k = 0; k < Kb; ++k) {
        const T denom = std::max(m[k], tiny);
        std::complex<T> u = X[k] * (g[k] / denom);
        if (k == 0 || k == Kb - 1)
          v[static_cast<std::size_t>(k)] = std::complex<T>(u.real(), T(0));
        else
          v[static_cast<std::size_t>(k)] = u * T(0.5);
      }
      fft::irfft(v.data(), win, xg.data());
      K<T>().axpy(static_cast<T>(win), xg.data(), d + l * win, static_cast<std::size_t>(win));
    }
  });
}

template <typename T>
Value<T> straight_through(Value<T> soft, Tensor<T> hard) {
  VX_CHECK(soft.data().same_shape(hard), "straight_through: shape mismatch");
  return soft.tape()->make(std::move(hard), {soft.node()}, [](Node<T>& n) {
    acc(n.grad.data(), n.parents[0]->grad.data(), n.data.numel());
  });
}

template <typename T>
Value<T> stft_mag(Value<T> x, std::int64_t win, std::int64_t hop, const Tensor<T>& window) {
  VX_CHECK(window.numel() == win, "stft_mag: window length mismatch");
  Value<T> fr = frame(x, win, hop);
  Value<T> wfr = mul_cols(fr, window);
  return rfft_magnitude(wfr);
}

// ---- explicit instantiations ----

#define VOXSEP_INSTANTIATE_OPS(T)                                                                  \
  template Tensor<T> transpose2d<T>(const Tensor<T>&);                                            \
  template Value<T> add<T>(Value<T>, Value<T>);                                                   \
  template Value<T> sub<T>(Value<T>, Value<T>);                                                   \
  template Value<T> mul<T>(Value<T>, Value<T>);                                                   \
  template Value<T> div<T>(Value<T>, Value<T>);                                                   \
  template Value<T> scale<T>(Value<T>, T);                                                        \
  template Value<T> add_n<T>(const std::vector<Value<T>>&);                                       \
  template Value<T> mul_const<T>(Value<T>, const Tensor<T>&);                                     \
  template Value<T> sigmoid<T>(Value<T>);                                                         \
  template Value<T> exp<T>(Value<T>);                                                             \
  template Value<T> log_eps<T>(Value<T>, T);                                                      \
  template Value<T> abs<T>(Value<T>);                                                             \
  template Value<T> leaky_relu<T>(Value<T>, T);                                                   \
  template Value<T> exp_sigmoid<T>(Value<T>);                                                     \
  template Value<T> sum<T>(Value<T>);                                                             \
  template Value<T> mean<T>(Value<T>);                                                            \
  template Value<T> mse<T>(Value<T>, Value<T>);                                                   \
  template Value<T> l1_norm<T>(Value<T>);                                                         \
  template Value<T> l1_diff<T>(Value<T>, Value<T>);                                               \
  template Value<T> matmul<T>(Value<T>, Value<T>);                                                \
  template Value<T> linear<T>(Value<T>, Value<T>, Value<T>);                                      \
  template Value<T> conv1d<T>(Value<T>, Value<T>, Value<T>);                                      \
  template Value<T> conv2d<T>(Value<T>, Value<T>, Value<T>);                                      \
  template Value<T> reshape<T>(Value<T>, std::vector<std::int64_t>);                              \
  template Value<T> slice_rows<T>(Value<T>, std::int64_t, std::int64_t);                          \
  template Value<T> concat_cols<T>(const std::vector<Value<T>>&);                                 \
  template Value<T> gather_rows<T>(Value<T>, const std::vector<std::int64_t>&);                   \
  template Value<T> mul_cols<T>(Value<T>, const Tensor<T>&);                                      \
  template Value<T> scale_rows<T>(Value<T>, Value<T>);                                            \
  template Value<T> normalize_rows<T>(Value<T>);                                                  \
  template Value<T> rows_dot<T>(Value<T>, const Tensor<T>&);                                      \
  template Value<T> frame<T>(Value<T>, std::int64_t, std::int64_t);                               \
  template Value<T> overlap_add<T>(Value<T>, std::int64_t, std::int64_t);                         \
  template Value<T> rfft_magnitude<T>(Value<T>);                                                  \
  template Value<T> straight_through<T>(Value<T>, Tensor<T>);                                     \
  template Value<T> stft_mag<T>(Value<T>, std::int64_t, std::int64_t, const Tensor<T>&);

VOXSEP_INSTANTIATE_OPS(float)
VOXSEP_INSTANTIATE_OPS(double)

#undef VOXSEP_INSTANTIATE_OPS

}  // namespace voxsep::ops
