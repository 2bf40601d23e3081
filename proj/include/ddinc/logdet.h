#pragma once

// Box-constrained log-determinant maximization over a fixed sparsity
// pattern:
//
//   maximize   log det X
//   subject to X_kk = M_kk + 1/3
//              |X_kj - M_kj| <= lambda   for (k, j) in NZ
//              X_kj = 0                  for (k, j) not in NZ
//
// solved by projected gradient ascent (gradient X^-1) with Barzilai-Borwein
// steps and Armijo backtracking that keeps every iterate positive definite.

#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>

#include "ddinc/common.h"

namespace ddinc {

template <typename Scalar>
using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
using PatternMat = Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic>;

template <typename Scalar>
struct LogdetOptions {
  Scalar lambda = Scalar(0.01);
  Scalar diagonal_offset = Scalar(1) / Scalar(3);
  Scalar tolerance = Scalar(1e-6);  // projected-gradient norm
  std::size_t max_iterations = 10000;
  // A solution that hits max_iterations is still accepted when its
  // duality gap is below this.
  Scalar gap_tolerance = Scalar(1e-6);
};

template <typename Scalar>
struct LogdetResult {
  Mat<Scalar> X;
  Scalar objective = 0;
  Scalar gradient_norm = 0;
  Scalar duality_gap = 0;
  std::size_t iterations = 0;
  bool converged = false;
};

// log det of a symmetric matrix, or -inf when it is not positive definite.
template <typename Derived>
typename Derived::Scalar log_det_pd(const Eigen::MatrixBase<Derived>& A) {
  using Scalar = typename Derived::Scalar;
  Eigen::LLT<Mat<Scalar>> llt(A);
  if (llt.info() != Eigen::Success) {
    return -std::numeric_limits<Scalar>::infinity();
  }
  const auto& L = llt.matrixL();
  Scalar s = 0;
  for (Eigen::Index i = 0; i < A.rows(); ++i) {
    Scalar d = L(i, i);
    if (!(d > 0)) return -std::numeric_limits<Scalar>::infinity();
    s += std::log(d);
  }
  return 2 * s;
}

namespace logdet_detail {

template <typename Scalar>
void bounds(const Mat<Scalar>& M, const PatternMat& nz, Scalar lambda,
            Mat<Scalar>& lo, Mat<Scalar>& hi) {
  lo = M.array() - lambda;
  hi = M.array() + lambda;
  for (Eigen::Index i = 0; i < M.rows(); ++i) {
    for (Eigen::Index j = 0; j < M.cols(); ++j) {
      if (i == j || !nz(i, j)) lo(i, j) = hi(i, j) = 0;
    }
  }
}

// Clamps the free entries into the box; diagonal and zero pattern fixed.
template <typename Scalar>
void project(Mat<Scalar>& X, const Mat<Scalar>& lo, const Mat<Scalar>& hi,
             const Vec<Scalar>& diag, const PatternMat& nz) {
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    for (Eigen::Index j = 0; j < X.cols(); ++j) {
      if (i == j) {
        X(i, j) = diag(i);
      } else if (!nz(i, j)) {
        X(i, j) = 0;
      } else {
        X(i, j) = std::clamp(X(i, j), lo(i, j), hi(i, j));
      }
    }
  }
}

// Gradient restricted to the free entries.
template <typename Scalar>
Mat<Scalar> masked_gradient(const Mat<Scalar>& K, const PatternMat& nz) {
  Mat<Scalar> G = K;
  for (Eigen::Index i = 0; i < G.rows(); ++i) {
    for (Eigen::Index j = 0; j < G.cols(); ++j) {
      if (i == j || !nz(i, j)) G(i, j) = 0;
    }
  }
  return G;
}

template <typename Scalar>
Scalar projected_norm(const Mat<Scalar>& X, const Mat<Scalar>& G,
                      const Mat<Scalar>& lo, const Mat<Scalar>& hi) {
  Scalar s = 0;
  const Scalar eps = Scalar(1e-12);
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    for (Eigen::Index j = 0; j < X.cols(); ++j) {
      Scalar g = G(i, j);
      if (g > 0 && X(i, j) >= hi(i, j) - eps) g = 0;
      if (g < 0 && X(i, j) <= lo(i, j) + eps) g = 0;
      s += g * g;
    }
  }
  return std::sqrt(s);
}

// Frank-Wolfe gap: max over the feasible set of <G, Y - X>.
template <typename Scalar>
Scalar duality_gap(const Mat<Scalar>& X, const Mat<Scalar>& G,
                   const Mat<Scalar>& lo, const Mat<Scalar>& hi) {
  Scalar gap = 0;
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    for (Eigen::Index j = 0; j < X.cols(); ++j) {
      Scalar g = G(i, j);
      if (g == 0) continue;
      gap += g * ((g > 0 ? hi(i, j) : lo(i, j)) - X(i, j));
    }
  }
  return std::max(gap, Scalar(0));
}

}  // namespace logdet_detail

// Throws InfeasibleError when no positive-definite feasible start exists
// and ConvergenceError when the iteration cap is hit with a large gap.
template <typename Scalar>
LogdetResult<Scalar> solve_logdet(const Mat<Scalar>& M, const PatternMat& nz,
                                  const LogdetOptions<Scalar>& opt) {
  using namespace logdet_detail;
  const Eigen::Index n = M.rows();
  if (M.cols() != n || nz.rows() != n || nz.cols() != n) {
    throw InputError("covariance and pattern must be square and equal size");
  }
  if (!(opt.lambda > 0)) throw InputError("lambda must be positive");
  Mat<Scalar> lo, hi;
  bounds(M, nz, opt.lambda, lo, hi);
  Vec<Scalar> diag = M.diagonal().array() + opt.diagonal_offset;

  LogdetResult<Scalar> r;
  if (n == 0) {
    r.X = Mat<Scalar>(0, 0);
    r.converged = true;
    return r;
  }

  // Start from the feasible point closest to the diagonal.
  Mat<Scalar> X = Mat<Scalar>::Zero(n, n);
  project(X, lo, hi, diag, nz);
  Scalar f = log_det_pd(X);
  if (!std::isfinite(f)) {
    throw InfeasibleError(
        "no positive-definite matrix satisfies the covariance constraints");
  }

  Mat<Scalar> K = X.llt().solve(Mat<Scalar>::Identity(n, n));
  Mat<Scalar> G = masked_gradient(K, nz);
  Mat<Scalar> X_prev, G_prev;
  Scalar step = 1;
  const Scalar sigma = Scalar(1e-4);

  std::size_t it = 0;
  Scalar pg = projected_norm(X, G, lo, hi);
  while (pg >= opt.tolerance && it < opt.max_iterations) {
    if (it > 0) {
      Mat<Scalar> s = X - X_prev;
      Mat<Scalar> y = G - G_prev;
      Scalar sy = (s.array() * y.array()).sum();
      Scalar ss = s.squaredNorm();
      step = (sy != 0) ? std::abs(ss / sy) : Scalar(1);
      step = std::clamp(step, Scalar(1e-10), Scalar(1e10));
    }
    bool moved = false;
    Mat<Scalar> Xn;
    Scalar fn = f;
    for (int bt = 0; bt < 80; ++bt) {
      Xn = X + step * G;
      project(Xn, lo, hi, diag, nz);
      fn = log_det_pd(Xn);
      Scalar lin = (G.array() * (Xn - X).array()).sum();
      if (std::isfinite(fn) && fn >= f + sigma * lin) {
        moved = true;
        break;
      }
      step /= 2;
    }
    ++it;
    if (!moved) break;  // no ascent direction left at machine precision
    X_prev = std::move(X);
    G_prev = std::move(G);
    X = std::move(Xn);
    f = fn;
    K = X.llt().solve(Mat<Scalar>::Identity(n, n));
    G = masked_gradient(K, nz);
    pg = projected_norm(X, G, lo, hi);
  }

  r.X = X;
  r.objective = f;
  r.gradient_norm = pg;
  r.duality_gap = duality_gap(X, G, lo, hi);
  r.iterations = it;
  r.converged = pg < opt.tolerance || r.duality_gap < opt.gap_tolerance;
  if (!r.converged) {
    throw ConvergenceError("log-det solver stopped after " +
                               std::to_string(it) + " iterations",
                           static_cast<double>(r.duality_gap));
  }
  return r;
}

}  // namespace ddinc
