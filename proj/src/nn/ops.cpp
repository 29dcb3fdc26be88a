#include "vqatom/nn/ops.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <numbers>
#include <numeric>
#include <string>

namespace vqatom::nn {
namespace {

void require(bool ok, const std::string& msg) {
  if (!ok) throw ShapeError(msg);
}

std::string dims(const Tensor& t) { return t.shape_string(); }

// c += a * b
void gemm_nn(const Tensor& a, const Tensor& b, Tensor& c) {
  const std::size_t n = a.rows(), k = a.cols(), m = b.cols();
  const double* A = a.values().data();
  const double* B = b.values().data();
  double* C = c.values().data();
  for (std::size_t i = 0; i < n; ++i) {
    double* ci = C + i * m;
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = A[i * k + p];
      if (aip == 0.0) continue;
      const double* bp = B + p * m;
      for (std::size_t j = 0; j < m; ++j) ci[j] += aip * bp[j];
    }
  }
}

// c += a * b^T
void gemm_nt(const Tensor& a, const Tensor& b, Tensor& c) {
  const std::size_t n = a.rows(), k = a.cols(), m = b.rows();
  const double* A = a.values().data();
  const double* B = b.values().data();
  double* C = c.values().data();
  for (std::size_t i = 0; i < n; ++i) {
    const double* ai = A + i * k;
    for (std::size_t j = 0; j < m; ++j) {
      const double* bj = B + j * k;
      double s = 0.0;
      for (std::size_t p = 0; p < k; ++p) s += ai[p] * bj[p];
      C[i * m + j] += s;
    }
  }
}

// c += a^T * b
void gemm_tn(const Tensor& a, const Tensor& b, Tensor& c) {
  const std::size_t n = a.rows(), k = a.cols(), m = b.cols();
  const double* A = a.values().data();
  const double* B = b.values().data();
  double* C = c.values().data();
  for (std::size_t i = 0; i < n; ++i) {
    const double* bi = B + i * m;
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = A[i * k + p];
      if (aip == 0.0) continue;
      double* cp = C + p * m;
      for (std::size_t j = 0; j < m; ++j) cp[j] += aip * bi[j];
    }
  }
}

Tensor transposed(const Tensor& a) {
  Tensor t(a.cols(), a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) t(j, i) = a(i, j);
  return t;
}

template <typename F, typename D>
Var unary(const Var& a, F f, D dfdx) {
  const Tensor& x = a.value();
  Tensor y = Tensor::zeros_like(x);
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = f(x[i]);
  return a.tape().record(std::move(y), {a}, [a, dfdx](Tape& t, const Tensor&, const Tensor& g) {
    Tensor* ga = t.grad_buffer(a);
    if (!ga) return;
    const Tensor& x = a.value();
    for (std::size_t i = 0; i < x.size(); ++i) (*ga)[i] += g[i] * dfdx(x[i]);
  });
}

}  // namespace

Var matmul(const Var& a, const Var& b) {
  const Tensor& A = a.value();
  const Tensor& B = b.value();
  require(A.cols() == B.rows(), "matmul: " + dims(A) + " x " + dims(B));
  Tensor c(A.rows(), B.cols());
  gemm_nn(A, B, c);
  return a.tape().record(std::move(c), {a, b}, [a, b](Tape& t, const Tensor&, const Tensor& g) {
    if (Tensor* ga = t.grad_buffer(a)) gemm_nt(g, b.value(), *ga);
    if (Tensor* gb = t.grad_buffer(b)) gemm_tn(a.value(), g, *gb);
  });
}

Var matmul_nt(const Var& a, const Var& b) {
  const Tensor& A = a.value();
  const Tensor& B = b.value();
  require(A.cols() == B.cols(), "matmul_nt: " + dims(A) + " x " + dims(B) + "^T");
  Tensor c(A.rows(), B.rows());
  gemm_nt(A, B, c);
  return a.tape().record(std::move(c), {a, b}, [a, b](Tape& t, const Tensor&, const Tensor& g) {
    if (Tensor* ga = t.grad_buffer(a)) gemm_nn(g, b.value(), *ga);
    if (Tensor* gb = t.grad_buffer(b)) gemm_tn(g, a.value(), *gb);
  });
}

Var transpose(const Var& a) {
  return a.tape().record(transposed(a.value()), {a}, [a](Tape& t, const Tensor&, const Tensor& g) {
    if (Tensor* ga = t.grad_buffer(a)) ga->add_in_place(transposed(g));
  });
}

Var add(const Var& a, const Var& b) {
  const Tensor& A = a.value();
  const Tensor& B = b.value();
  if (A.same_shape(B)) {
    Tensor c = A;
    c.add_in_place(B);
    return a.tape().record(std::move(c), {a, b}, [a, b](Tape& t, const Tensor&, const Tensor& g) {
      t.accumulate(a, g);
      t.accumulate(b, g);
    });
  }
  require(B.rows() == 1 && B.cols() == A.cols(), "add: " + dims(A) + " + " + dims(B));
  Tensor c = A;
  for (std::size_t i = 0; i < A.rows(); ++i)
    for (std::size_t j = 0; j < A.cols(); ++j) c(i, j) += B(0, j);
  return a.tape().record(std::move(c), {a, b}, [a, b](Tape& t, const Tensor&, const Tensor& g) {
    t.accumulate(a, g);
    if (Tensor* gb = t.grad_buffer(b)) {
      for (std::size_t i = 0; i < g.rows(); ++i)
        for (std::size_t j = 0; j < g.cols(); ++j) (*gb)(0, j) += g(i, j);
    }
  });
}

Var sub(const Var& a, const Var& b) {
  const Tensor& A = a.value();
  const Tensor& B = b.value();
  require(A.same_shape(B), "sub: " + dims(A) + " - " + dims(B));
  Tensor c = A;
  for (std::size_t i = 0; i < c.size(); ++i) c[i] -= B[i];
  return a.tape().record(std::move(c), {a, b}, [a, b](Tape& t, const Tensor&, const Tensor& g) {
    t.accumulate(a, g);
    if (Tensor* gb = t.grad_buffer(b)) {
      for (std::size_t i = 0; i < g.size(); ++i) (*gb)[i] -= g[i];
    }
  });
}

Var mul(const Var& a, const Var& b) {
  const Tensor& A = a.value();
  const Tensor& B = b.value();
  require(A.same_shape(B), "mul: " + dims(A) + " * " + dims(B));
  Tensor c = A;
  for (std::size_t i = 0; i < c.size(); ++i) c[i] *= B[i];
  return a.tape().record(std::move(c), {a, b}, [a, b](Tape& t, const Tensor&, const Tensor& g) {
    if (Tensor* ga = t.grad_buffer(a)) {
      const Tensor& B = b.value();
      for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i] * B[i];
    }
    if (Tensor* gb = t.grad_buffer(b)) {
      const Tensor& A = a.value();
      for (std::size_t i = 0; i < g.size(); ++i) (*gb)[i] += g[i] * A[i];
    }
  });
}

Var mul_const(const Var& a, const Tensor& mask) {
  const Tensor& A = a.value();
  require(A.same_shape(mask), "mul_const: " + dims(A) + " * " + dims(mask));
  Tensor c = A;
  for (std::size_t i = 0; i < c.size(); ++i) c[i] *= mask[i];
  auto m = std::make_shared<Tensor>(mask);
  return a.tape().record(std::move(c), {a}, [a, m](Tape& t, const Tensor&, const Tensor& g) {
    if (Tensor* ga = t.grad_buffer(a)) {
      for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i] * (*m)[i];
    }
  });
}

Var scale(const Var& a, double factor) {
  Tensor c = a.value();
  for (double& v : c.values()) v *= factor;
  return a.tape().record(std::move(c), {a}, [a, factor](Tape& t, const Tensor&, const Tensor& g) {
    if (Tensor* ga = t.grad_buffer(a)) {
      for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i] * factor;
    }
  });
}

Var mul_scalar(const Var& a, const Var& s) {
  require(s.value().size() == 1, "mul_scalar: scalar operand has shape " + dims(s.value()));
  const double sv = s.value()[0];
  Tensor c = a.value();
  for (double& v : c.values()) v *= sv;
  return a.tape().record(std::move(c), {a, s}, [a, s](Tape& t, const Tensor&, const Tensor& g) {
    if (Tensor* ga = t.grad_buffer(a)) {
      const double sv = s.value()[0];
      for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i] * sv;
    }
    if (Tensor* gs = t.grad_buffer(s)) {
      const Tensor& A = a.value();
      double acc = 0.0;
      for (std::size_t i = 0; i < g.size(); ++i) acc += g[i] * A[i];
      (*gs)[0] += acc;
    }
  });
}

Var relu(const Var& a) {
  return unary(
      a, [](double x) { return x > 0.0 ? x : 0.0; },
      [](double x) { return x > 0.0 ? 1.0 : 0.0; });
}

Var gelu(const Var& a) {
  constexpr double inv_sqrt2 = 0.70710678118654752440;
  const double inv_sqrt_2pi = 1.0 / std::sqrt(2.0 * std::numbers::pi);
  return unary(
      a, [](double x) { return 0.5 * x * (1.0 + std::erf(x * inv_sqrt2)); },
      [inv_sqrt_2pi](double x) {
        const double cdf = 0.5 * (1.0 + std::erf(x * inv_sqrt2));
        return cdf + x * inv_sqrt_2pi * std::exp(-0.5 * x * x);
      });
}

Var sigmoid(const Var& a) {
  const Tensor& x = a.value();
  Tensor y = Tensor::zeros_like(x);
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double v = x[i];
    y[i] = v >= 0.0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
  }
  return a.tape().record(std::move(y), {a}, [a](Tape& t, const Tensor& y, const Tensor& g) {
    if (Tensor* ga = t.grad_buffer(a)) {
      for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i] * y[i] * (1.0 - y[i]);
    }
  });
}

namespace {

Tensor softmax_rows_masked(const Tensor& x, const std::vector<bool>* key_valid) {
  Tensor y = Tensor::zeros_like(x);
  for (std::size_t i = 0; i < x.rows(); ++i) {
    double mx = -INFINITY;
    for (std::size_t j = 0; j < x.cols(); ++j) {
      if (key_valid && !(*key_valid)[j]) continue;
      mx = std::max(mx, x(i, j));
    }
    if (mx == -INFINITY) continue;
    double z = 0.0;
    for (std::size_t j = 0; j < x.cols(); ++j) {
      if (key_valid && !(*key_valid)[j]) continue;
      y(i, j) = std::exp(x(i, j) - mx);
      z += y(i, j);
    }
    for (std::size_t j = 0; j < x.cols(); ++j) y(i, j) /= z;
  }
  return y;
}

// dx = y * (g - sum(g * y)) per row; masked entries have y == 0.
void softmax_rows_backward(const Tensor& y, const Tensor& g, Tensor& gx) {
  for (std::size_t i = 0; i < y.rows(); ++i) {
    double dot = 0.0;
    for (std::size_t j = 0; j < y.cols(); ++j) dot += g(i, j) * y(i, j);
    for (std::size_t j = 0; j < y.cols(); ++j) gx(i, j) += y(i, j) * (g(i, j) - dot);
  }
}

}  // namespace

Var softmax(const Var& a, int axis) {
  require(axis == 0 || axis == 1, "softmax: axis must be 0 or 1");
  if (axis == 0) return transpose(softmax(transpose(a), 1));
  return a.tape().record(softmax_rows_masked(a.value(), nullptr), {a},
                         [a](Tape& t, const Tensor& y, const Tensor& g) {
                           if (Tensor* ga = t.grad_buffer(a)) softmax_rows_backward(y, g, *ga);
                         });
}

Var masked_softmax_rows(const Var& a, const std::vector<bool>& key_valid) {
  require(key_valid.size() == a.cols(), "masked_softmax_rows: mask length " +
                                            std::to_string(key_valid.size()) + " vs " +
                                            dims(a.value()));
  auto mask = std::make_shared<std::vector<bool>>(key_valid);
  return a.tape().record(softmax_rows_masked(a.value(), mask.get()), {a},
                         [a](Tape& t, const Tensor& y, const Tensor& g) {
                           if (Tensor* ga = t.grad_buffer(a)) softmax_rows_backward(y, g, *ga);
                         });
}

Var layer_norm(const Var& x, const Var& gain, const Var& bias, double eps) {
  const Tensor& X = x.value();
  const std::size_t n = X.rows(), d = X.cols();
  require(gain.value().rows() == 1 && gain.cols() == d && bias.value().same_shape(gain.value()),
          "layer_norm: " + dims(X) + " with gain " + dims(gain.value()));
  auto xhat = std::make_shared<Tensor>(n, d);
  auto inv_sigma = std::make_shared<std::vector<double>>(n);
  Tensor y(n, d);
  const Tensor& G = gain.value();
  const Tensor& B = bias.value();
  for (std::size_t i = 0; i < n; ++i) {
    double mu = 0.0;
    for (std::size_t j = 0; j < d; ++j) mu += X(i, j);
    mu /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t j = 0; j < d; ++j) var += (X(i, j) - mu) * (X(i, j) - mu);
    var /= static_cast<double>(d);
    const double is = 1.0 / std::sqrt(var + eps);
    (*inv_sigma)[i] = is;
    for (std::size_t j = 0; j < d; ++j) {
      (*xhat)(i, j) = (X(i, j) - mu) * is;
      y(i, j) = (*xhat)(i, j) * G(0, j) + B(0, j);
    }
  }
  return x.tape().record(
      std::move(y), {x, gain, bias}, [x, gain, bias, xhat, inv_sigma](Tape& t, const Tensor&, const Tensor& g) {
        const std::size_t n = g.rows(), d = g.cols();
        const Tensor& G = gain.value();
        if (Tensor* gg = t.grad_buffer(gain)) {
          for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < d; ++j) (*gg)(0, j) += g(i, j) * (*xhat)(i, j);
        }
        if (Tensor* gb = t.grad_buffer(bias)) {
          for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < d; ++j) (*gb)(0, j) += g(i, j);
        }
        if (Tensor* gx = t.grad_buffer(x)) {
          std::vector<double> dxhat(d);
          for (std::size_t i = 0; i < n; ++i) {
            double m1 = 0.0, m2 = 0.0;
            for (std::size_t j = 0; j < d; ++j) {
              dxhat[j] = g(i, j) * G(0, j);
              m1 += dxhat[j];
              m2 += dxhat[j] * (*xhat)(i, j);
            }
            m1 /= static_cast<double>(d);
            m2 /= static_cast<double>(d);
            for (std::size_t j = 0; j < d; ++j) {
              (*gx)(i, j) += (*inv_sigma)[i] * (dxhat[j] - m1 - (*xhat)(i, j) * m2);
            }
          }
        }
      });
}

Var l2_normalize(const Var& x, int axis, double eps) {
  require(axis == 0 || axis == 1, "l2_normalize: axis must be 0 or 1");
  if (axis == 0) return transpose(l2_normalize(transpose(x), 1, eps));
  const Tensor& X = x.value();
  auto norms = std::make_shared<std::vector<double>>(X.rows());
  Tensor y = Tensor::zeros_like(X);
  for (std::size_t i = 0; i < X.rows(); ++i) {
    double s = 0.0;
    for (double v : X.row(i)) s += v * v;
    const double nrm = std::max(std::sqrt(s), eps);
    (*norms)[i] = nrm;
    for (std::size_t j = 0; j < X.cols(); ++j) y(i, j) = X(i, j) / nrm;
  }
  return x.tape().record(std::move(y), {x}, [x, norms, eps](Tape& t, const Tensor& y, const Tensor& g) {
    Tensor* gx = t.grad_buffer(x);
    if (!gx) return;
    for (std::size_t i = 0; i < y.rows(); ++i) {
      const double nrm = (*norms)[i];
      if (nrm <= eps) {
        for (std::size_t j = 0; j < y.cols(); ++j) (*gx)(i, j) += g(i, j) / eps;
        continue;
      }
      double dot = 0.0;
      for (std::size_t j = 0; j < y.cols(); ++j) dot += g(i, j) * y(i, j);
      for (std::size_t j = 0; j < y.cols(); ++j) (*gx)(i, j) += (g(i, j) - y(i, j) * dot) / nrm;
    }
  });
}

Var cross_entropy(const Var& logits, std::span<const std::size_t> targets) {
  const Tensor& X = logits.value();
  require(targets.size() == X.rows() && X.rows() > 0,
          "cross_entropy: " + std::to_string(targets.size()) + " targets for " + dims(X));
  auto probs = std::make_shared<Tensor>(X.rows(), X.cols());
  auto tgt = std::make_shared<std::vector<std::size_t>>(targets.begin(), targets.end());
  long double total = 0.0L;
  for (std::size_t i = 0; i < X.rows(); ++i) {
    require((*tgt)[i] < X.cols(), "cross_entropy: target out of range");
    double mx = -INFINITY;
    for (double v : X.row(i)) mx = std::max(mx, v);
    double z = 0.0;
    for (std::size_t j = 0; j < X.cols(); ++j) {
      (*probs)(i, j) = std::exp(X(i, j) - mx);
      z += (*probs)(i, j);
    }
    for (std::size_t j = 0; j < X.cols(); ++j) (*probs)(i, j) /= z;
    total += (std::log(z) + mx) - X(i, (*tgt)[i]);
  }
  const double n = static_cast<double>(X.rows());
  return logits.tape().record(Tensor::scalar(static_cast<double>(total / n)), {logits},
                              [logits, probs, tgt, n](Tape& t, const Tensor&, const Tensor& g) {
                                Tensor* gx = t.grad_buffer(logits);
                                if (!gx) return;
                                const double s = g[0] / n;
                                for (std::size_t i = 0; i < probs->rows(); ++i) {
                                  for (std::size_t j = 0; j < probs->cols(); ++j)
                                    (*gx)(i, j) += s * (*probs)(i, j);
                                  (*gx)(i, (*tgt)[i]) -= s;
                                }
                              });
}

Var bce_with_logits(const Var& logits, std::span<const double> labels) {
  const Tensor& Z = logits.value();
  require(Z.size() == labels.size() && !labels.empty(),
          "bce_with_logits: " + std::to_string(labels.size()) + " labels for " + dims(Z));
  auto y = std::make_shared<std::vector<double>>(labels.begin(), labels.end());
  long double total = 0.0L;
  for (std::size_t i = 0; i < Z.size(); ++i) {
    const double z = Z[i];
    total += std::max(z, 0.0) - z * (*y)[i] + std::log1p(std::exp(-std::abs(z)));
  }
  const double n = static_cast<double>(Z.size());
  return logits.tape().record(Tensor::scalar(static_cast<double>(total / n)), {logits},
                              [logits, y, n](Tape& t, const Tensor&, const Tensor& g) {
                                Tensor* gz = t.grad_buffer(logits);
                                if (!gz) return;
                                const Tensor& Z = logits.value();
                                for (std::size_t i = 0; i < Z.size(); ++i) {
                                  const double z = Z[i];
                                  const double s = z >= 0.0 ? 1.0 / (1.0 + std::exp(-z))
                                                            : std::exp(z) / (1.0 + std::exp(z));
                                  (*gz)[i] += g[0] * (s - (*y)[i]) / n;
                                }
                              });
}

Var mse(const Var& a, const Var& b) {
  const Tensor& A = a.value();
  const Tensor& B = b.value();
  require(A.same_shape(B) && A.size() > 0, "mse: " + dims(A) + " vs " + dims(B));
  long double total = 0.0L;
  for (std::size_t i = 0; i < A.size(); ++i) total += (A[i] - B[i]) * (A[i] - B[i]);
  const double n = static_cast<double>(A.size());
  return a.tape().record(Tensor::scalar(static_cast<double>(total / n)), {a, b}, [a, b, n](Tape& t, const Tensor&, const Tensor& g) {
    const Tensor& A = a.value();
    const Tensor& B = b.value();
    Tensor* ga = t.grad_buffer(a);
    Tensor* gb = t.grad_buffer(b);
    for (std::size_t i = 0; i < A.size(); ++i) {
      const double d = 2.0 * (A[i] - B[i]) * g[0] / n;
      if (ga) (*ga)[i] += d;
      if (gb) (*gb)[i] -= d;
    }
  });
}

Var concat(const std::vector<Var>& parts, int axis) {
  require(!parts.empty(), "concat: no inputs");
  require(axis == 0 || axis == 1, "concat: axis must be 0 or 1");
  Tape& tape = parts.front().tape();
  if (axis == 1) {
    const std::size_t n = parts.front().rows();
    std::size_t total = 0;
    for (const Var& p : parts) {
      require(p.rows() == n, "concat(axis=1): row mismatch " + dims(p.value()));
      total += p.cols();
    }
    Tensor y(n, total);
    std::size_t off = 0;
    for (const Var& p : parts) {
      const Tensor& P = p.value();
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < P.cols(); ++j) y(i, off + j) = P(i, j);
      off += P.cols();
    }
    return tape.record(std::move(y), parts, [parts](Tape& t, const Tensor&, const Tensor& g) {
      std::size_t off = 0;
      for (const Var& p : parts) {
        const std::size_t w = p.cols();
        if (Tensor* gp = t.grad_buffer(p)) {
          for (std::size_t i = 0; i < g.rows(); ++i)
            for (std::size_t j = 0; j < w; ++j) (*gp)(i, j) += g(i, off + j);
        }
        off += w;
      }
    });
  }
  const std::size_t m = parts.front().cols();
  std::size_t total = 0;
  for (const Var& p : parts) {
    require(p.cols() == m, "concat(axis=0): column mismatch " + dims(p.value()));
    total += p.rows();
  }
  Tensor y(total, m);
  std::size_t off = 0;
  for (const Var& p : parts) {
    const Tensor& P = p.value();
    std::copy(P.values().begin(), P.values().end(), y.values().begin() + static_cast<std::ptrdiff_t>(off * m));
    off += P.rows();
  }
  return tape.record(std::move(y), parts, [parts, m](Tape& t, const Tensor&, const Tensor& g) {
    std::size_t off = 0;
    for (const Var& p : parts) {
      const std::size_t r = p.rows();
      if (Tensor* gp = t.grad_buffer(p)) {
        for (std::size_t k = 0; k < r * m; ++k) (*gp)[k] += g[off * m + k];
      }
      off += r;
    }
  });
}

Var sum(const Var& a) {
  long double s = 0.0L;
  for (double v : a.value().values()) s += v;
  return a.tape().record(Tensor::scalar(static_cast<double>(s)), {a}, [a](Tape& t, const Tensor&, const Tensor& g) {
    if (Tensor* ga = t.grad_buffer(a)) {
      for (double& v : ga->values()) v += g[0];
    }
  });
}

Var sum(const Var& a, int axis) {
  require(axis == 0 || axis == 1, "sum: axis must be 0 or 1");
  const Tensor& A = a.value();
  if (axis == 0) {
    Tensor y(1, A.cols());
    for (std::size_t i = 0; i < A.rows(); ++i)
      for (std::size_t j = 0; j < A.cols(); ++j) y(0, j) += A(i, j);
    return a.tape().record(std::move(y), {a}, [a](Tape& t, const Tensor&, const Tensor& g) {
      if (Tensor* ga = t.grad_buffer(a)) {
        for (std::size_t i = 0; i < ga->rows(); ++i)
          for (std::size_t j = 0; j < ga->cols(); ++j) (*ga)(i, j) += g(0, j);
      }
    });
  }
  Tensor y(A.rows(), 1);
  for (std::size_t i = 0; i < A.rows(); ++i)
    for (std::size_t j = 0; j < A.cols(); ++j) y(i, 0) += A(i, j);
  return a.tape().record(std::move(y), {a}, [a](Tape& t, const Tensor&, const Tensor& g) {
    if (Tensor* ga = t.grad_buffer(a)) {
      for (std::size_t i = 0; i < ga->rows(); ++i)
        for (std::size_t j = 0; j < ga->cols(); ++j) (*ga)(i, j) += g(i, 0);
    }
  });
}

Var mean(const Var& a) {
  require(a.value().size() > 0, "mean: empty tensor");
  return scale(sum(a), 1.0 / static_cast<double>(a.value().size()));
}

Var mean(const Var& a, int axis) {
  const std::size_t n = axis == 0 ? a.rows() : a.cols();
  require(n > 0, "mean: empty axis");
  return scale(sum(a, axis), 1.0 / static_cast<double>(n));
}

Var gather_rows(const Var& a, std::span<const std::size_t> index) {
  const Tensor& A = a.value();
  Tensor y(index.size(), A.cols());
  for (std::size_t r = 0; r < index.size(); ++r) {
    require(index[r] < A.rows(), "gather_rows: index out of range");
    std::copy(A.row(index[r]).begin(), A.row(index[r]).end(), y.row(r).begin());
  }
  auto idx = std::make_shared<std::vector<std::size_t>>(index.begin(), index.end());
  return a.tape().record(std::move(y), {a}, [a, idx](Tape& t, const Tensor&, const Tensor& g) {
    Tensor* ga = t.grad_buffer(a);
    if (!ga) return;
    for (std::size_t r = 0; r < idx->size(); ++r) {
      auto dst = ga->row((*idx)[r]);
      auto src = g.row(r);
      for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += src[j];
    }
  });
}

Var scatter_add_rows(const Var& a, std::span<const std::size_t> index, std::size_t out_rows) {
  const Tensor& A = a.value();
  require(index.size() == A.rows(), "scatter_add_rows: index length mismatch");
  Tensor y(out_rows, A.cols());
  for (std::size_t r = 0; r < index.size(); ++r) {
    require(index[r] < out_rows, "scatter_add_rows: index out of range");
    auto dst = y.row(index[r]);
    auto src = A.row(r);
    for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += src[j];
  }
  auto idx = std::make_shared<std::vector<std::size_t>>(index.begin(), index.end());
  return a.tape().record(std::move(y), {a}, [a, idx](Tape& t, const Tensor&, const Tensor& g) {
    Tensor* ga = t.grad_buffer(a);
    if (!ga) return;
    for (std::size_t r = 0; r < idx->size(); ++r) {
      auto dst = ga->row(r);
      auto src = g.row((*idx)[r]);
      for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += src[j];
    }
  });
}

Var slice_cols(const Var& a, std::size_t start, std::size_t width) {
  const Tensor& A = a.value();
  require(start + width <= A.cols(), "slice_cols: [" + std::to_string(start) + ", +" +
                                         std::to_string(width) + ") of " + dims(A));
  Tensor y(A.rows(), width);
  for (std::size_t i = 0; i < A.rows(); ++i)
    for (std::size_t j = 0; j < width; ++j) y(i, j) = A(i, start + j);
  return a.tape().record(std::move(y), {a}, [a, start, width](Tape& t, const Tensor&, const Tensor& g) {
    if (Tensor* ga = t.grad_buffer(a)) {
      for (std::size_t i = 0; i < g.rows(); ++i)
        for (std::size_t j = 0; j < width; ++j) (*ga)(i, start + j) += g(i, j);
    }
  });
}

Var minimum(const Var& a, const Var& b) {
  const Tensor& A = a.value();
  const Tensor& B = b.value();
  require(A.same_shape(B), "minimum: " + dims(A) + " vs " + dims(B));
  Tensor y = A;
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = std::min(A[i], B[i]);
  return a.tape().record(std::move(y), {a, b}, [a, b](Tape& t, const Tensor&, const Tensor& g) {
    const Tensor& A = a.value();
    const Tensor& B = b.value();
    Tensor* ga = t.grad_buffer(a);
    Tensor* gb = t.grad_buffer(b);
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (A[i] <= B[i]) {
        if (ga) (*ga)[i] += g[i];
      } else if (gb) {
        (*gb)[i] += g[i];
      }
    }
  });
}

Var normalize_rows_by_sum(const Var& a, double eps) {
  const Tensor& A = a.value();
  auto denom = std::make_shared<std::vector<double>>(A.rows());
  Tensor y = A;
  for (std::size_t i = 0; i < A.rows(); ++i) {
    double s = 0.0;
    for (double v : A.row(i)) s += v;
    (*denom)[i] = s + eps;
    for (double& v : y.row(i)) v /= (*denom)[i];
  }
  return a.tape().record(std::move(y), {a}, [a, denom](Tape& t, const Tensor& y, const Tensor& g) {
    Tensor* ga = t.grad_buffer(a);
    if (!ga) return;
    for (std::size_t i = 0; i < y.rows(); ++i) {
      double dot = 0.0;
      for (std::size_t j = 0; j < y.cols(); ++j) dot += g(i, j) * y(i, j);
      for (std::size_t j = 0; j < y.cols(); ++j) (*ga)(i, j) += (g(i, j) - dot) / (*denom)[i];
    }
  });
}

Var normalize_cols_by_sum(const Var& a, double eps) {
  const Tensor& A = a.value();
  auto denom = std::make_shared<std::vector<double>>(A.cols(), eps);
  for (std::size_t i = 0; i < A.rows(); ++i)
    for (std::size_t j = 0; j < A.cols(); ++j) (*denom)[j] += A(i, j);
  Tensor y = A;
  for (std::size_t i = 0; i < A.rows(); ++i)
    for (std::size_t j = 0; j < A.cols(); ++j) y(i, j) /= (*denom)[j];
  return a.tape().record(std::move(y), {a}, [a, denom](Tape& t, const Tensor& y, const Tensor& g) {
    Tensor* ga = t.grad_buffer(a);
    if (!ga) return;
    std::vector<double> dot(y.cols(), 0.0);
    for (std::size_t i = 0; i < y.rows(); ++i)
      for (std::size_t j = 0; j < y.cols(); ++j) dot[j] += g(i, j) * y(i, j);
    for (std::size_t i = 0; i < y.rows(); ++i)
      for (std::size_t j = 0; j < y.cols(); ++j) (*ga)(i, j) += (g(i, j) - dot[j]) / (*denom)[j];
  });
}

Var top_k_mean(const Var& a, std::size_t k) {
  const Tensor& A = a.value();
  require(A.size() > 0 && k > 0, "top_k_mean: empty input or k == 0");
  const std::size_t kk = std::min(k, A.size());
  auto order = std::make_shared<std::vector<std::size_t>>(A.size());
  std::iota(order->begin(), order->end(), std::size_t{0});
  std::partial_sort(order->begin(), order->begin() + static_cast<std::ptrdiff_t>(kk), order->end(),
                    [&A](std::size_t x, std::size_t y) {
                      return A[x] > A[y] || (A[x] == A[y] && x < y);
                    });
  order->resize(kk);
  double s = 0.0;
  for (std::size_t idx : *order) s += A[idx];
  const double inv = 1.0 / static_cast<double>(kk);
  return a.tape().record(Tensor::scalar(s * inv), {a}, [a, order, inv](Tape& t, const Tensor&, const Tensor& g) {
    if (Tensor* ga = t.grad_buffer(a)) {
      for (std::size_t idx : *order) (*ga)[idx] += g[0] * inv;
    }
  });
}

Var pair_hinge_sq_mean(const Var& c, double margin) {
  const Tensor& C = c.value();
  require(C.rows() == C.cols(), "pair_hinge_sq_mean: matrix must be square, got " + dims(C));
  const std::size_t n = C.rows();
  const double pairs = n < 2 ? 1.0 : static_cast<double>(n) * static_cast<double>(n - 1) / 2.0;
  long double total = 0.0L;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      const double h = std::max(0.0, C(i, j) - margin);
      total += h * h;
    }
  return c.tape().record(Tensor::scalar(n < 2 ? 0.0 : static_cast<double>(total / pairs)), {c},
                         [c, margin, pairs](Tape& t, const Tensor&, const Tensor& g) {
                           Tensor* gc = t.grad_buffer(c);
                           if (!gc) return;
                           const Tensor& C = c.value();
                           const std::size_t n = C.rows();
                           for (std::size_t i = 0; i < n; ++i)
                             for (std::size_t j = i + 1; j < n; ++j) {
                               const double h = std::max(0.0, C(i, j) - margin);
                               if (h > 0.0) (*gc)(i, j) += g[0] * 2.0 * h / pairs;
                             }
                         });
}

Var dropout(const Var& a, double p, SeededRng& rng) {
  if (p <= 0.0) return a;
  require(p < 1.0, "dropout: p must be in [0, 1)");
  Tensor mask = Tensor::zeros_like(a.value());
  const double keep = 1.0 / (1.0 - p);
  for (double& m : mask.values()) m = rng.bernoulli(p) ? 0.0 : keep;
  return mul_const(a, mask);
}

}  // namespace vqatom::nn
