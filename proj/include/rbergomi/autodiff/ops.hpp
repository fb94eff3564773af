#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "rbergomi/autodiff/tape.hpp"
#include "rbergomi/errors.hpp"
#include "rbergomi/numerics/linalg.hpp"

namespace rbergomi::ad {

inline Var constant(Matrix value) { return Var(std::move(value)); }
inline Var constant(double scalar) { return Var(scalar); }

namespace detail {

inline std::string shape(const Matrix& m) {
  return "[" + std::to_string(m.rows()) + "x" + std::to_string(m.cols()) + "]";
}

inline Eigen::Index broadcast_dim(Eigen::Index a, Eigen::Index b, const char* op) {
  if (a == b || b == 1) return a;
  if (a == 1) return b;
  throw ShapeError(std::string(op) + ": incompatible dimensions " + std::to_string(a) + " and " +
                   std::to_string(b));
}

inline Matrix expand(const Matrix& m, Eigen::Index rows, Eigen::Index cols) {
  if (m.rows() == rows && m.cols() == cols) return m;
  return m.replicate(rows / m.rows(), cols / m.cols());
}

// Sums a broadcast gradient back down to the operand shape.
inline Matrix reduce_to(const Matrix& g, Eigen::Index rows, Eigen::Index cols) {
  if (g.rows() == rows && g.cols() == cols) return g;
  Matrix r = g;
  if (rows == 1 && r.rows() != 1) r = r.colwise().sum().eval();
  if (cols == 1 && r.cols() != 1) r = r.rowwise().sum().eval();
  return r;
}

template <class F, class DA, class DB>
Var binary(const Var& a, const Var& b, const char* name, F f, DA da, DB db) {
  const Eigen::Index rows = broadcast_dim(a.rows(), b.rows(), name);
  const Eigen::Index cols = broadcast_dim(a.cols(), b.cols(), name);
  Matrix ea = expand(a.value(), rows, cols);
  Matrix eb = expand(b.value(), rows, cols);
  Matrix out = f(ea, eb);
  if (!a.tracked() && !b.tracked()) return Var(std::move(out));
  const Eigen::Index ar = a.rows(), ac = a.cols(), br = b.rows(), bc = b.cols();
  const bool ta = a.tracked(), tb = b.tracked();
  return Tape::record(std::move(out), {a, b},
                      [=, ea = std::move(ea), eb = std::move(eb)](const Matrix& g, std::vector<Matrix>& pg) {
                        if (ta) pg[0] = reduce_to(da(g, ea, eb), ar, ac);
                        if (tb) pg[1] = reduce_to(db(g, ea, eb), br, bc);
                      });
}

}  // namespace detail

// --- elementwise binary with broadcasting over singleton dimensions ---

inline Var add(const Var& a, const Var& b) {
  return detail::binary(
      a, b, "add", [](const Matrix& x, const Matrix& y) -> Matrix { return x + y; },
      [](const Matrix& g, const Matrix&, const Matrix&) -> Matrix { return g; },
      [](const Matrix& g, const Matrix&, const Matrix&) -> Matrix { return g; });
}

inline Var sub(const Var& a, const Var& b) {
  return detail::binary(
      a, b, "sub", [](const Matrix& x, const Matrix& y) -> Matrix { return x - y; },
      [](const Matrix& g, const Matrix&, const Matrix&) -> Matrix { return g; },
      [](const Matrix& g, const Matrix&, const Matrix&) -> Matrix { return -g; });
}

inline Var mul(const Var& a, const Var& b) {
  return detail::binary(
      a, b, "mul", [](const Matrix& x, const Matrix& y) -> Matrix { return x.cwiseProduct(y); },
      [](const Matrix& g, const Matrix&, const Matrix& y) -> Matrix { return g.cwiseProduct(y); },
      [](const Matrix& g, const Matrix& x, const Matrix&) -> Matrix { return g.cwiseProduct(x); });
}

inline Var div(const Var& a, const Var& b) {
  return detail::binary(
      a, b, "div", [](const Matrix& x, const Matrix& y) -> Matrix { return x.cwiseQuotient(y); },
      [](const Matrix& g, const Matrix&, const Matrix& y) -> Matrix { return g.cwiseQuotient(y); },
      [](const Matrix& g, const Matrix& x, const Matrix& y) -> Matrix {
        return -(g.array() * x.array() / (y.array() * y.array())).matrix();
      });
}

// --- affine maps with a plain double ---

inline Var add(const Var& a, double c) {
  Matrix out = (a.value().array() + c).matrix();
  return Tape::record(std::move(out), {a}, [](const Matrix& g, std::vector<Matrix>& pg) { pg[0] = g; });
}

inline Var scale(const Var& a, double c) {
  Matrix out = a.value() * c;
  return Tape::record(std::move(out), {a}, [c](const Matrix& g, std::vector<Matrix>& pg) { pg[0] = g * c; });
}

inline Var neg(const Var& a) { return scale(a, -1.0); }

inline Var operator+(const Var& a, const Var& b) { return add(a, b); }
inline Var operator-(const Var& a, const Var& b) { return sub(a, b); }
inline Var operator*(const Var& a, const Var& b) { return mul(a, b); }
inline Var operator/(const Var& a, const Var& b) { return div(a, b); }
inline Var operator-(const Var& a) { return neg(a); }
inline Var operator+(const Var& a, double c) { return add(a, c); }
inline Var operator+(double c, const Var& a) { return add(a, c); }
inline Var operator-(const Var& a, double c) { return add(a, -c); }
inline Var operator-(double c, const Var& a) { return add(neg(a), c); }
inline Var operator*(const Var& a, double c) { return scale(a, c); }
inline Var operator*(double c, const Var& a) { return scale(a, c); }
inline Var operator/(const Var& a, double c) { return scale(a, 1.0 / c); }

// --- elementwise unary ---

inline Var exp(const Var& a) {
  Matrix out = a.value().array().exp().matrix();
  Matrix saved = out;
  return Tape::record(std::move(out), {a}, [saved = std::move(saved)](const Matrix& g, std::vector<Matrix>& pg) {
    pg[0] = g.cwiseProduct(saved);
  });
}

inline Var log(const Var& a) {
  if ((a.value().array() <= 0.0).any()) throw std::domain_error("ad::log: non-positive argument");
  Matrix x = a.value();
  Matrix out = x.array().log().matrix();
  return Tape::record(std::move(out), {a}, [x = std::move(x)](const Matrix& g, std::vector<Matrix>& pg) {
    pg[0] = g.cwiseQuotient(x);
  });
}

inline Var sqrt(const Var& a) {
  if ((a.value().array() < 0.0).any()) throw std::domain_error("ad::sqrt: negative argument");
  Matrix out = a.value().cwiseSqrt();
  Matrix saved = out;
  return Tape::record(std::move(out), {a}, [saved = std::move(saved)](const Matrix& g, std::vector<Matrix>& pg) {
    pg[0] = (0.5 * g.array() / saved.array()).matrix();
  });
}

inline Var square(const Var& a) {
  Matrix x = a.value();
  Matrix out = x.cwiseProduct(x);
  return Tape::record(std::move(out), {a}, [x = std::move(x)](const Matrix& g, std::vector<Matrix>& pg) {
    pg[0] = 2.0 * g.cwiseProduct(x);
  });
}

/// x^p for a constant real exponent.
inline Var pow(const Var& a, double p) {
  Matrix x = a.value();
  Matrix out = x.array().pow(p).matrix();
  return Tape::record(std::move(out), {a}, [x = std::move(x), p](const Matrix& g, std::vector<Matrix>& pg) {
    pg[0] = (g.array() * p * x.array().pow(p - 1.0)).matrix();
  });
}

/// x^a with a differentiable exponent; requires x > 0.
inline Var pow(const Var& x, const Var& a) {
  if ((x.value().array() <= 0.0).any())
    throw std::domain_error("ad::pow: base must be positive for a variable exponent");
  return detail::binary(
      x, a, "pow", [](const Matrix& b, const Matrix& e) -> Matrix { return b.array().pow(e.array()).matrix(); },
      [](const Matrix& g, const Matrix& b, const Matrix& e) -> Matrix {
        return (g.array() * e.array() * b.array().pow(e.array() - 1.0)).matrix();
      },
      [](const Matrix& g, const Matrix& b, const Matrix& e) -> Matrix {
        return (g.array() * b.array().pow(e.array()) * b.array().log()).matrix();
      });
}

/// c^a for a positive constant base.
inline Var pow(double c, const Var& a) {
  if (!(c > 0.0)) throw std::domain_error("ad::pow: base must be positive");
  Matrix out = (a.value().array() * std::log(c)).exp().matrix();
  Matrix saved = out;
  const double lc = std::log(c);
  return Tape::record(std::move(out), {a}, [saved = std::move(saved), lc](const Matrix& g, std::vector<Matrix>& pg) {
    pg[0] = (g.array() * saved.array() * lc).matrix();
  });
}

inline Var leaky_relu(const Var& a, double slope) {
  Matrix x = a.value();
  Matrix out = x.unaryExpr([slope](double v) { return v > 0.0 ? v : slope * v; });
  return Tape::record(std::move(out), {a}, [x = std::move(x), slope](const Matrix& g, std::vector<Matrix>& pg) {
    pg[0] = g.binaryExpr(x, [slope](double gv, double v) { return v > 0.0 ? gv : slope * gv; });
  });
}

inline Var relu(const Var& a) { return leaky_relu(a, 0.0); }

/// Elementwise y = f(x) with derivative df.
template <class F, class DF>
Var elementwise(const Var& a, F f, DF df) {
  Matrix x = a.value();
  Matrix out = x.unaryExpr(f);
  return Tape::record(std::move(out), {a}, [x = std::move(x), df](const Matrix& g, std::vector<Matrix>& pg) {
    pg[0] = g.cwiseProduct(Matrix(x.unaryExpr(df)));
  });
}

/// c * log(1 + exp(x / c)), a smooth ramp of width c.
inline Var softplus(const Var& a, double c = 1.0) {
  Matrix x = a.value();
  Matrix out = x.unaryExpr([c](double v) {
    const double z = v / c;
    return c * (z > 0.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)));
  });
  return Tape::record(std::move(out), {a}, [x = std::move(x), c](const Matrix& g, std::vector<Matrix>& pg) {
    pg[0] = g.binaryExpr(x, [c](double gv, double v) {
      const double z = v / c;
      const double s = z >= 0.0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
      return gv * s;
    });
  });
}

// --- linear algebra and reductions ---

inline Var matmul(const Var& a, const Var& b) {
  if (a.cols() != b.rows())
    throw ShapeError("matmul: " + detail::shape(a.value()) + " x " + detail::shape(b.value()));
  Matrix out = a.value() * b.value();
  const bool ta = a.tracked(), tb = b.tracked();
  Matrix av = tb ? a.value() : Matrix();
  Matrix bv = ta ? b.value() : Matrix();
  return Tape::record(std::move(out), {a, b},
                      [ta, tb, av = std::move(av), bv = std::move(bv)](const Matrix& g, std::vector<Matrix>& pg) {
                        if (ta) pg[0] = g * bv.transpose();
                        if (tb) pg[1] = av.transpose() * g;
                      });
}

inline Var transpose(const Var& a) {
  Matrix out = a.value().transpose();
  return Tape::record(std::move(out), {a},
                      [](const Matrix& g, std::vector<Matrix>& pg) { pg[0] = g.transpose(); });
}

/// Sum of all entries, 1x1.
inline Var sum(const Var& a) {
  const Eigen::Index r = a.rows(), c = a.cols();
  return Tape::record(Matrix::Constant(1, 1, a.value().sum()), {a},
                      [r, c](const Matrix& g, std::vector<Matrix>& pg) { pg[0] = Matrix::Constant(r, c, g(0, 0)); });
}

inline Var mean(const Var& a) { return scale(sum(a), 1.0 / static_cast<double>(a.value().size())); }

/// Column sums, 1 x cols.
inline Var sum_rows(const Var& a) {
  const Eigen::Index r = a.rows();
  return Tape::record(a.value().colwise().sum(), {a},
                      [r](const Matrix& g, std::vector<Matrix>& pg) { pg[0] = g.replicate(r, 1); });
}

/// Row sums, rows x 1.
inline Var sum_cols(const Var& a) {
  const Eigen::Index c = a.cols();
  return Tape::record(a.value().rowwise().sum(), {a},
                      [c](const Matrix& g, std::vector<Matrix>& pg) { pg[0] = g.replicate(1, c); });
}

/// Column means over rows (batch mean), 1 x cols.
inline Var mean_rows(const Var& a) { return scale(sum_rows(a), 1.0 / static_cast<double>(a.rows())); }

inline Var slice_cols(const Var& a, Eigen::Index start, Eigen::Index count) {
  if (start < 0 || count < 0 || start + count > a.cols()) throw ShapeError("slice_cols: out of range");
  const Eigen::Index r = a.rows(), c = a.cols();
  return Tape::record(a.value().middleCols(start, count), {a},
                      [r, c, start, count](const Matrix& g, std::vector<Matrix>& pg) {
                        pg[0] = Matrix::Zero(r, c);
                        pg[0].middleCols(start, count) = g;
                      });
}

inline Var slice_rows(const Var& a, Eigen::Index start, Eigen::Index count) {
  if (start < 0 || count < 0 || start + count > a.rows()) throw ShapeError("slice_rows: out of range");
  const Eigen::Index r = a.rows(), c = a.cols();
  return Tape::record(a.value().middleRows(start, count), {a},
                      [r, c, start, count](const Matrix& g, std::vector<Matrix>& pg) {
                        pg[0] = Matrix::Zero(r, c);
                        pg[0].middleRows(start, count) = g;
                      });
}

/// Horizontal concatenation; all parts share the row count.
inline Var concat_cols(const std::vector<Var>& parts) {
  if (parts.empty()) throw ShapeError("concat_cols: no operands");
  const Eigen::Index r = parts.front().rows();
  Eigen::Index total = 0;
  std::vector<Eigen::Index> widths;
  for (const Var& p : parts) {
    if (p.rows() != r) throw ShapeError("concat_cols: row count mismatch");
    widths.push_back(p.cols());
    total += p.cols();
  }
  Matrix out(r, total);
  Eigen::Index at = 0;
  for (const Var& p : parts) {
    out.middleCols(at, p.cols()) = p.value();
    at += p.cols();
  }
  return Tape::record(std::move(out), parts, [widths](const Matrix& g, std::vector<Matrix>& pg) {
    Eigen::Index off = 0;
    for (std::size_t k = 0; k < widths.size(); ++k) {
      pg[k] = g.middleCols(off, widths[k]);
      off += widths[k];
    }
  });
}

/// Training-mode batch normalization over rows. The batch statistics are
/// returned so the caller can update running averages.
struct BatchNormOut {
  Var y;
  Matrix batch_mean;  // 1 x features
  Matrix batch_var;   // 1 x features, biased
};

inline BatchNormOut batchnorm_train(const Var& x, const Var& gamma, const Var& beta, double eps) {
  const Eigen::Index b = x.rows(), f = x.cols();
  if (gamma.rows() != 1 || gamma.cols() != f || beta.rows() != 1 || beta.cols() != f)
    throw ShapeError("batchnorm: gamma/beta must be 1 x features");
  Matrix mu = x.value().colwise().mean();
  Matrix centered = x.value().rowwise() - mu.row(0);
  Matrix var = centered.cwiseProduct(centered).colwise().mean();
  Matrix inv_std = (var.array() + eps).rsqrt().matrix();
  Matrix xhat = centered.array().rowwise() * inv_std.row(0).array();
  Matrix out = (xhat.array().rowwise() * gamma.value().row(0).array()).rowwise() + beta.value().row(0).array();
  Matrix gv = gamma.value();
  Var y = Tape::record(std::move(out), {x, gamma, beta},
                       [b, xhat, inv_std, gv](const Matrix& g, std::vector<Matrix>& pg) {
                         pg[2] = g.colwise().sum();
                         pg[1] = g.cwiseProduct(xhat).colwise().sum();
                         // dx = gamma * inv_std * (g - mean(g) - xhat * mean(g * xhat))
                         Matrix mg = g.colwise().mean();
                         Matrix mgx = pg[1] / static_cast<double>(b);
                         Matrix dx = g.rowwise() - mg.row(0);
                         dx -= (xhat.array().rowwise() * mgx.row(0).array()).matrix();
                         pg[0] = dx.array().rowwise() * (gv.array() * inv_std.array()).row(0);
                       });
  return {std::move(y), std::move(mu), std::move(var)};
}

/// Inference-mode batch normalization with frozen statistics.
inline Var batchnorm_infer(const Var& x, const Var& gamma, const Var& beta, const Matrix& running_mean,
                           const Matrix& running_var, double eps) {
  Matrix inv_std = (running_var.array() + eps).rsqrt().matrix();
  Var xhat = mul(sub(x, constant(running_mean)), constant(inv_std));
  return add(mul(xhat, gamma), beta);
}

/// Lower Cholesky factor with the standard reverse-mode rule
/// S_bar = sym(L^{-T} Phi(L^T L_bar) L^{-1}), Phi = lower triangle with
/// halved diagonal.
inline Var cholesky(const Var& sigma) {
  Matrix l = numerics::cholesky(sigma.value());
  Matrix saved = l;
  return Tape::record(std::move(l), {sigma}, [saved = std::move(saved)](const Matrix& g, std::vector<Matrix>& pg) {
    Matrix lbar = g.triangularView<Eigen::Lower>();
    Matrix p = saved.transpose() * lbar;
    Matrix phi = p.triangularView<Eigen::Lower>();
    phi.diagonal() *= 0.5;
    // S = L^{-T} phi L^{-1}
    Matrix tmp = saved.transpose().triangularView<Eigen::Upper>().solve(phi);
    Matrix s = saved.transpose().triangularView<Eigen::Upper>().solve(tmp.transpose()).transpose();
    pg[0] = 0.5 * (s + s.transpose());
  });
}

/// Scalar-to-matrix map y = f(x) with a caller-supplied derivative dy/dx of
/// the same shape as y. Used for closed-form quantities such as
/// covariance entries or kernel weights as functions of H.
inline Var scalar_function(const Var& x, Matrix value, Matrix derivative) {
  if (x.rows() != 1 || x.cols() != 1) throw ShapeError("scalar_function: input must be 1x1");
  if (value.rows() != derivative.rows() || value.cols() != derivative.cols())
    throw ShapeError("scalar_function: value/derivative shape mismatch");
  return Tape::record(std::move(value), {x}, [d = std::move(derivative)](const Matrix& g, std::vector<Matrix>& pg) {
    pg[0] = Matrix::Constant(1, 1, g.cwiseProduct(d).sum());
  });
}

}  // namespace rbergomi::ad
