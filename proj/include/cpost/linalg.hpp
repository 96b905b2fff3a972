#pragma once

#include "cpost/core.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>

namespace cpost {

inline Matrix symmetrize(const Matrix& a) { return 0.5 * (a + a.transpose()); }

inline bool is_positive_definite(const Matrix& a) {
  if (a.rows() != a.cols() || !a.allFinite()) return false;
  Eigen::LLT<Matrix> llt(a);
  return llt.info() == Eigen::Success;
}

// Unique symmetric PSD square root from the eigen (= singular value)
// decomposition of a symmetric PSD matrix.
inline Matrix symmetric_sqrt(const Matrix& a) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(symmetrize(a));
  if (es.info() != Eigen::Success) throw Error("eigendecomposition failed");
  Vector root = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return es.eigenvectors() * root.asDiagonal() * es.eigenvectors().transpose();
}

inline double relative_frobenius(const Matrix& a, const Matrix& reference) {
  return (a - reference).norm() / reference.norm();
}

// Central finite differences of a gradient: returns the Jacobian of `grad`,
// symmetrized. Step per coordinate is rel_step * (1 + |x_i|).
template <class Grad>
Matrix fd_jacobian_of_gradient(Grad&& grad, const Vector& x, double rel_step = 1e-4) {
  const Index p = x.size();
  Matrix jac(p, p);
  for (Index i = 0; i < p; ++i) {
    const double h = rel_step * (1.0 + std::abs(x(i)));
    Vector xp = x, xm = x;
    xp(i) += h;
    xm(i) -= h;
    jac.col(i) = (grad(xp) - grad(xm)) / (2.0 * h);
  }
  return symmetrize(jac);
}

// Second differences of a scalar function.
template <class F>
Matrix fd_hessian(F&& f, const Vector& x, double rel_step = 1e-4) {
  const Index p = x.size();
  Matrix hess(p, p);
  const double f0 = f(x);
  Vector h(p);
  for (Index i = 0; i < p; ++i) h(i) = rel_step * (1.0 + std::abs(x(i)));
  for (Index i = 0; i < p; ++i) {
    Vector xp = x, xm = x;
    xp(i) += h(i);
    xm(i) -= h(i);
    hess(i, i) = (f(xp) - 2.0 * f0 + f(xm)) / (h(i) * h(i));
    for (Index j = 0; j < i; ++j) {
      Vector a = x, b = x, c = x, d = x;
      a(i) += h(i); a(j) += h(j);
      b(i) += h(i); b(j) -= h(j);
      c(i) -= h(i); c(j) += h(j);
      d(i) -= h(i); d(j) -= h(j);
      hess(i, j) = hess(j, i) = (f(a) - f(b) - f(c) + f(d)) / (4.0 * h(i) * h(j));
    }
  }
  return hess;
}

template <class F>
Vector fd_gradient(F&& f, const Vector& x, double rel_step = 1e-5) {
  Vector g(x.size());
  for (Index i = 0; i < x.size(); ++i) {
    const double h = rel_step * (1.0 + std::abs(x(i)));
    Vector xp = x, xm = x;
    xp(i) += h;
    xm(i) -= h;
    g(i) = (f(xp) - f(xm)) / (2.0 * h);
  }
  return g;
}

// Sample covariance with divisor n - 1 of the rows of `rows`.
inline Matrix sample_covariance(const Matrix& rows) {
  const Index n = rows.rows();
  if (n < 2) throw Error("sample covariance needs at least two rows");
  Matrix centered = rows.rowwise() - rows.colwise().mean();
  return (centered.transpose() * centered) / static_cast<double>(n - 1);
}

}  // namespace cpost
