#include "bnnr/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

namespace bnnr {
namespace {

[[noreturn]] void shape_mismatch(const std::string& op, const std::string& detail) {
  throw ShapeError(op + ": " + detail);
}

void require_same_shape(const std::string& op, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    shape_mismatch(op, "operand shapes " + shape_string(a.shape()) + " and " + shape_string(b.shape()) + " differ");
  }
}

template <typename F>
Tensor map(const Tensor& x, F f) {
  Tensor out(x.shape(), std::vector<double>(x.size()));
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = f(x[i]);
  return out;
}

struct ConvGeometry {
  std::size_t n, c, h, w, o, kh, kw, stride, pad, ho, wo;

  std::size_t patch() const { return c * kh * kw; }
  std::size_t pixels() const { return ho * wo; }
};

ConvGeometry conv_geometry(const Tensor& x, const Tensor& w, Conv2dAttrs attrs) {
  if (x.rank() != 4) shape_mismatch("conv2d", "input must be [N,C,H,W], got " + shape_string(x.shape()));
  if (w.rank() != 4) shape_mismatch("conv2d", "kernel must be [O,C,kh,kw], got " + shape_string(w.shape()));
  if (attrs.stride < 1) shape_mismatch("conv2d", "stride must be >= 1");
  ConvGeometry g{};
  g.n = x.dim(0);
  g.c = x.dim(1);
  g.h = x.dim(2);
  g.w = x.dim(3);
  g.o = w.dim(0);
  g.kh = w.dim(2);
  g.kw = w.dim(3);
  g.stride = attrs.stride;
  g.pad = attrs.padding;
  if (w.dim(1) != g.c) {
    shape_mismatch("conv2d", "input channels " + std::to_string(g.c) + " vs kernel channels " + std::to_string(w.dim(1)));
  }
  if (g.h + 2 * g.pad < g.kh || g.w + 2 * g.pad < g.kw) {
    shape_mismatch("conv2d", "kernel " + std::to_string(g.kh) + "x" + std::to_string(g.kw) + " larger than padded input " +
                                 std::to_string(g.h + 2 * g.pad) + "x" + std::to_string(g.w + 2 * g.pad));
  }
  g.ho = (g.h + 2 * g.pad - g.kh) / g.stride + 1;
  g.wo = (g.w + 2 * g.pad - g.kw) / g.stride + 1;
  return g;
}

void im2col(const ConvGeometry& g, const double* img, double* cols) {
  for (std::size_t c = 0; c < g.c; ++c) {
    for (std::size_t i = 0; i < g.kh; ++i) {
      for (std::size_t j = 0; j < g.kw; ++j) {
        double* row = cols + ((c * g.kh + i) * g.kw + j) * g.pixels();
        for (std::size_t oy = 0; oy < g.ho; ++oy) {
          const auto y = static_cast<std::ptrdiff_t>(oy * g.stride + i) - static_cast<std::ptrdiff_t>(g.pad);
          for (std::size_t ox = 0; ox < g.wo; ++ox) {
            const auto x = static_cast<std::ptrdiff_t>(ox * g.stride + j) - static_cast<std::ptrdiff_t>(g.pad);
            const bool inside = y >= 0 && x >= 0 && y < static_cast<std::ptrdiff_t>(g.h) && x < static_cast<std::ptrdiff_t>(g.w);
            row[oy * g.wo + ox] = inside ? img[(c * g.h + static_cast<std::size_t>(y)) * g.w + static_cast<std::size_t>(x)] : 0.0;
          }
        }
      }
    }
  }
}

void col2im(const ConvGeometry& g, const double* cols, double* img) {
  for (std::size_t c = 0; c < g.c; ++c) {
    for (std::size_t i = 0; i < g.kh; ++i) {
      for (std::size_t j = 0; j < g.kw; ++j) {
        const double* row = cols + ((c * g.kh + i) * g.kw + j) * g.pixels();
        for (std::size_t oy = 0; oy < g.ho; ++oy) {
          const auto y = static_cast<std::ptrdiff_t>(oy * g.stride + i) - static_cast<std::ptrdiff_t>(g.pad);
          if (y < 0 || y >= static_cast<std::ptrdiff_t>(g.h)) continue;
          for (std::size_t ox = 0; ox < g.wo; ++ox) {
            const auto x = static_cast<std::ptrdiff_t>(ox * g.stride + j) - static_cast<std::ptrdiff_t>(g.pad);
            if (x < 0 || x >= static_cast<std::ptrdiff_t>(g.w)) continue;
            img[(c * g.h + static_cast<std::size_t>(y)) * g.w + static_cast<std::size_t>(x)] += row[oy * g.wo + ox];
          }
        }
      }
    }
  }
}

}  // namespace

namespace kernels {

void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b, double* c, bool accumulate) {
  if (!accumulate) std::fill(c, c + m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    double* crow = c + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = a[i * k + p];
      if (aip == 0.0) continue;
      const double* brow = b + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += aip * brow[j];
    }
  }
}

void gemm_tn(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b, double* c, bool accumulate) {
  if (!accumulate) std::fill(c, c + m * n, 0.0);
  for (std::size_t p = 0; p < k; ++p) {
    const double* arow = a + p * m;
    const double* brow = b + p * n;
    for (std::size_t i = 0; i < m; ++i) {
      const double api = arow[i];
      if (api == 0.0) continue;
      double* crow = c + i * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += api * brow[j];
    }
  }
}

void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b, double* c, bool accumulate) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* arow = a + i * k;
    for (std::size_t j = 0; j < n; ++j) {
      const double* brow = b + j * k;
      double acc = 0.0;
      for (std::size_t p = 0; p < k; ++p) acc += arow[p] * brow[p];
      c[i * n + j] = accumulate ? c[i * n + j] + acc : acc;
    }
  }
}

}  // namespace kernels

double softplus(double x) { return std::log1p(std::exp(-std::abs(x))) + std::max(x, 0.0); }

double inverse_softplus(double y) {
  if (!(y > 0.0)) throw std::invalid_argument("inverse_softplus needs a positive argument");
  // log(exp(y) - 1), written to stay accurate for large and small y.
  return y + std::log(-std::expm1(-y));
}

Var matmul(Var a, Var b) {
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.rank() != 2 || bv.rank() != 2) {
    shape_mismatch("matmul", "operands must be rank 2, got " + shape_string(av.shape()) + " and " + shape_string(bv.shape()));
  }
  const std::size_t m = av.dim(0), k = av.dim(1), n = bv.dim(1);
  if (bv.dim(0) != k) {
    shape_mismatch("matmul", "inner dimensions " + std::to_string(k) + " and " + std::to_string(bv.dim(0)) + " differ");
  }
  Tensor out({m, n});
  kernels::gemm_nn(m, n, k, av.data().data(), bv.data().data(), out.data().data(), false);
  return a.tape->record("matmul", std::move(out), {a, b}, [a, b, m, n, k](Tape& t, const Tensor& g) {
    if (t.wants_grad(a)) {
      Tensor da({m, k});
      kernels::gemm_nt(m, k, n, g.data().data(), t.value(b).data().data(), da.data().data(), false);
      t.accumulate(a, da);
    }
    if (t.wants_grad(b)) {
      Tensor db({k, n});
      kernels::gemm_tn(k, n, m, t.value(a).data().data(), g.data().data(), db.data().data(), false);
      t.accumulate(b, db);
    }
  });
}

Var conv2d(Var x, Var w, Conv2dAttrs attrs) {
  const Tensor& xv = x.value();
  const Tensor& wv = w.value();
  const ConvGeometry g = conv_geometry(xv, wv, attrs);
  Tensor out({g.n, g.o, g.ho, g.wo});
  std::vector<double> cols(g.patch() * g.pixels());
  for (std::size_t img = 0; img < g.n; ++img) {
    im2col(g, xv.data().data() + img * g.c * g.h * g.w, cols.data());
    kernels::gemm_nn(g.o, g.pixels(), g.patch(), wv.data().data(), cols.data(),
                     out.data().data() + img * g.o * g.pixels(), false);
  }
  return x.tape->record("conv2d", std::move(out), {x, w}, [x, w, g](Tape& t, const Tensor& grad) {
    const bool want_x = t.wants_grad(x);
    const bool want_w = t.wants_grad(w);
    const Tensor& xv = t.value(x);
    const Tensor& wv = t.value(w);
    std::vector<double> cols(g.patch() * g.pixels());
    Tensor dx(xv.shape());
    Tensor dw(wv.shape());
    for (std::size_t img = 0; img < g.n; ++img) {
      const double* gout = grad.data().data() + img * g.o * g.pixels();
      if (want_w) {
        im2col(g, xv.data().data() + img * g.c * g.h * g.w, cols.data());
        kernels::gemm_nt(g.o, g.patch(), g.pixels(), gout, cols.data(), dw.data().data(), true);
      }
      if (want_x) {
        kernels::gemm_tn(g.patch(), g.pixels(), g.o, wv.data().data(), gout, cols.data(), false);
        col2im(g, cols.data(), dx.data().data() + img * g.c * g.h * g.w);
      }
    }
    if (want_x) t.accumulate(x, dx);
    if (want_w) t.accumulate(w, dw);
  });
}

Var maxpool2d(Var x, Pool2dAttrs attrs) {
  const Tensor& xv = x.value();
  if (xv.rank() != 4) shape_mismatch("maxpool2d", "input must be [N,C,H,W], got " + shape_string(xv.shape()));
  if (attrs.kernel < 1 || attrs.stride < 1) shape_mismatch("maxpool2d", "kernel and stride must be >= 1");
  const std::size_t n = xv.dim(0), c = xv.dim(1), h = xv.dim(2), w = xv.dim(3);
  if (h < attrs.kernel || w < attrs.kernel) {
    shape_mismatch("maxpool2d", "window " + std::to_string(attrs.kernel) + " larger than input " + std::to_string(h) + "x" +
                                    std::to_string(w));
  }
  const std::size_t ho = (h - attrs.kernel) / attrs.stride + 1;
  const std::size_t wo = (w - attrs.kernel) / attrs.stride + 1;
  Tensor out({n, c, ho, wo});
  std::vector<std::size_t> argmax(out.size());
  std::size_t o = 0;
  for (std::size_t plane = 0; plane < n * c; ++plane) {
    const double* src = xv.data().data() + plane * h * w;
    for (std::size_t oy = 0; oy < ho; ++oy) {
      for (std::size_t ox = 0; ox < wo; ++ox, ++o) {
        std::size_t best = (oy * attrs.stride) * w + ox * attrs.stride;
        for (std::size_t i = 0; i < attrs.kernel; ++i) {
          for (std::size_t j = 0; j < attrs.kernel; ++j) {
            const std::size_t idx = (oy * attrs.stride + i) * w + ox * attrs.stride + j;
            if (src[idx] > src[best]) best = idx;
          }
        }
        out[o] = src[best];
        argmax[o] = plane * h * w + best;
      }
    }
  }
  return x.tape->record("maxpool2d", std::move(out), {x}, [x, argmax = std::move(argmax)](Tape& t, const Tensor& g) {
    Tensor dx(t.value(x).shape());
    for (std::size_t i = 0; i < argmax.size(); ++i) dx[argmax[i]] += g[i];
    t.accumulate(x, dx);
  });
}

Var relu(Var x) {
  Tensor out = map(x.value(), [](double v) { return v > 0.0 ? v : 0.0; });
  return x.tape->record("relu", std::move(out), {x}, [x](Tape& t, const Tensor& g) {
    const Tensor& xv = t.value(x);
    Tensor dx(xv.shape(), std::vector<double>(xv.size()));
    for (std::size_t i = 0; i < xv.size(); ++i) dx[i] = xv[i] > 0.0 ? g[i] : 0.0;
    t.accumulate(x, dx);
  });
}

Var add(Var a, Var b) {
  require_same_shape("add", a.value(), b.value());
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += b.value()[i];
  return a.tape->record("add", std::move(out), {a, b}, [a, b](Tape& t, const Tensor& g) {
    t.accumulate(a, g);
    t.accumulate(b, g);
  });
}

Var sub(Var a, Var b) {
  require_same_shape("sub", a.value(), b.value());
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b.value()[i];
  return a.tape->record("sub", std::move(out), {a, b}, [a, b](Tape& t, const Tensor& g) {
    t.accumulate(a, g);
    if (t.wants_grad(b)) t.accumulate(b, map(g, [](double v) { return -v; }));
  });
}

Var mul(Var a, Var b) {
  require_same_shape("mul", a.value(), b.value());
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b.value()[i];
  return a.tape->record("mul", std::move(out), {a, b}, [a, b](Tape& t, const Tensor& g) {
    if (t.wants_grad(a)) {
      Tensor da = g;
      for (std::size_t i = 0; i < da.size(); ++i) da[i] *= t.value(b)[i];
      t.accumulate(a, da);
    }
    if (t.wants_grad(b)) {
      Tensor db = g;
      for (std::size_t i = 0; i < db.size(); ++i) db[i] *= t.value(a)[i];
      t.accumulate(b, db);
    }
  });
}

Var add_bias(Var x, Var b) {
  const Tensor& xv = x.value();
  const Tensor& bv = b.value();
  if (xv.rank() < 2 || bv.rank() != 1 || bv.dim(0) != xv.dim(1)) {
    shape_mismatch("add_bias", "bias " + shape_string(bv.shape()) + " does not match axis 1 of " + shape_string(xv.shape()));
  }
  const std::size_t n = xv.dim(0), c = xv.dim(1), inner = xv.size() / (n * c);
  Tensor out = xv;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t ch = 0; ch < c; ++ch)
      for (std::size_t p = 0; p < inner; ++p) out[(i * c + ch) * inner + p] += bv[ch];
  return x.tape->record("add_bias", std::move(out), {x, b}, [x, b, n, c, inner](Tape& t, const Tensor& g) {
    t.accumulate(x, g);
    if (t.wants_grad(b)) {
      Tensor db({c});
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t ch = 0; ch < c; ++ch)
          for (std::size_t p = 0; p < inner; ++p) db[ch] += g[(i * c + ch) * inner + p];
      t.accumulate(b, db);
    }
  });
}

Var scale(Var x, double factor) {
  Tensor out = map(x.value(), [factor](double v) { return v * factor; });
  return x.tape->record("scale", std::move(out), {x}, [x, factor](Tape& t, const Tensor& g) {
    t.accumulate(x, map(g, [factor](double v) { return v * factor; }));
  });
}

Var flatten(Var x) {
  const Tensor& xv = x.value();
  if (xv.rank() < 1) shape_mismatch("flatten", "scalar input");
  const std::size_t n = xv.dim(0);
  Tensor out = xv.reshaped({n, xv.size() / n});
  return x.tape->record("flatten", std::move(out), {x}, [x](Tape& t, const Tensor& g) {
    t.accumulate(x, g.reshaped(t.value(x).shape()));
  });
}

Var square(Var x) {
  Tensor out = map(x.value(), [](double v) { return v * v; });
  return x.tape->record("square", std::move(out), {x}, [x](Tape& t, const Tensor& g) {
    Tensor dx = g;
    for (std::size_t i = 0; i < dx.size(); ++i) dx[i] *= 2.0 * t.value(x)[i];
    t.accumulate(x, dx);
  });
}

Var sqrt(Var x) {
  for (double v : x.value().values()) {
    if (v < 0.0) throw std::domain_error("sqrt: negative input " + std::to_string(v));
  }
  Tensor out = map(x.value(), [](double v) { return std::sqrt(v); });
  return x.tape->record("sqrt", out, {x}, [x, out](Tape& t, const Tensor& g) {
    Tensor dx = g;
    for (std::size_t i = 0; i < dx.size(); ++i) dx[i] = out[i] > 0.0 ? g[i] * 0.5 / out[i] : 0.0;
    t.accumulate(x, dx);
  });
}

Var softplus(Var x) {
  Tensor out = map(x.value(), [](double v) { return softplus(v); });
  return x.tape->record("softplus", std::move(out), {x}, [x](Tape& t, const Tensor& g) {
    Tensor dx = g;
    for (std::size_t i = 0; i < dx.size(); ++i) dx[i] *= 1.0 / (1.0 + std::exp(-t.value(x)[i]));
    t.accumulate(x, dx);
  });
}

Var sum(Var x) {
  double total = 0.0;
  for (double v : x.value().values()) total += v;
  return x.tape->record("sum", Tensor::scalar(total), {x}, [x](Tape& t, const Tensor& g) {
    t.accumulate(x, Tensor(t.value(x).shape(), g.item()));
  });
}

Tensor softmax(const Tensor& logits) {
  if (logits.rank() != 2) throw ShapeError("softmax: logits must be [N,K], got " + shape_string(logits.shape()));
  const std::size_t n = logits.dim(0), k = logits.dim(1);
  Tensor probs = logits;
  for (std::size_t i = 0; i < n; ++i) {
    double* row = probs.data().data() + i * k;
    const double peak = *std::max_element(row, row + k);
    double total = 0.0;
    for (std::size_t j = 0; j < k; ++j) total += (row[j] = std::exp(row[j] - peak));
    for (std::size_t j = 0; j < k; ++j) row[j] /= total;
  }
  return probs;
}

Var softmax_cross_entropy(Var logits, std::span<const int> labels, Reduction reduction) {
  const Tensor& z = logits.value();
  if (z.rank() != 2) {
    shape_mismatch("softmax_cross_entropy", "logits must be [N,K], got " + shape_string(z.shape()));
  }
  const std::size_t n = z.dim(0), k = z.dim(1);
  if (labels.size() != n) {
    shape_mismatch("softmax_cross_entropy",
                   std::to_string(labels.size()) + " labels for a batch of " + std::to_string(n));
  }
  std::vector<int> y(labels.begin(), labels.end());
  for (int label : y) {
    if (label < 0 || static_cast<std::size_t>(label) >= k) {
      throw std::out_of_range("softmax_cross_entropy: invalid class index " + std::to_string(label) + " for " +
                              std::to_string(k) + " classes");
    }
  }
  Tensor probs = softmax(z);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double* row = z.data().data() + i * k;
    const double peak = *std::max_element(row, row + k);
    double acc = 0.0;
    for (std::size_t j = 0; j < k; ++j) acc += std::exp(row[j] - peak);
    total += peak + std::log(acc) - row[static_cast<std::size_t>(y[i])];
  }
  const double norm = reduction == Reduction::mean ? 1.0 / static_cast<double>(n) : 1.0;
  return logits.tape->record(
      "softmax_cross_entropy", Tensor::scalar(total * norm), {logits},
      [logits, probs = std::move(probs), y = std::move(y), norm, k](Tape& t, const Tensor& g) {
        Tensor dz = probs;
        for (std::size_t i = 0; i < y.size(); ++i) dz[i * k + static_cast<std::size_t>(y[i])] -= 1.0;
        const double factor = g.item() * norm;
        for (std::size_t i = 0; i < dz.size(); ++i) dz[i] *= factor;
        t.accumulate(logits, dz);
      });
}

}  // namespace bnnr
