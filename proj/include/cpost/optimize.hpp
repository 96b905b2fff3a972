#pragma once

#include "cpost/core.hpp"
#include "cpost/linalg.hpp"

#include <cmath>

namespace cpost {

struct OptimizeOptions {
  int max_iterations = 500;
  // Converged when |grad| <= rel_tolerance * (1 + |f|).
  double rel_tolerance = 1e-6;
  // Seed the inverse Hessian with a finite-difference Hessian at the start.
  bool hessian_init = true;
  double max_step = 5.0;
};

struct OptimizeResult {
  Vector x;
  double value = kNegInf;
  Vector gradient;
  double gradient_norm = std::numeric_limits<double>::infinity();
  int iterations = 0;
  bool converged = false;
};

// Quasi-Newton (BFGS) maximization of f with analytic gradient.
// f may return -inf outside its domain; the line search backs off.
template <class F, class G>
OptimizeResult maximize_bfgs(F&& f, G&& grad, const Vector& x0, const OptimizeOptions& opt = {}) {
  const Index p = x0.size();
  OptimizeResult res;
  res.x = x0;
  res.value = f(x0);
  if (!std::isfinite(res.value)) throw OptimizationError("objective not finite at the starting point", x0, res.gradient_norm);
  // Work on the minimization of -f.
  Vector g = -grad(res.x);
  res.gradient = -g;
  res.gradient_norm = g.norm();

  const Matrix eye = Matrix::Identity(p, p);
  auto scaled_identity = [&](const Vector& gr) { return eye / std::max(1.0, gr.norm()); };
  Matrix inv_hess = scaled_identity(g);
  if (opt.hessian_init) {
    Matrix h = fd_jacobian_of_gradient([&](const Vector& z) { return Vector(-grad(z)); }, res.x);
    Eigen::LLT<Matrix> llt(h);
    if (h.allFinite() && llt.info() == Eigen::Success) inv_hess = llt.solve(eye);
  }

  for (res.iterations = 0; res.iterations < opt.max_iterations; ++res.iterations) {
    if (res.gradient_norm <= opt.rel_tolerance * (1.0 + std::abs(res.value))) {
      res.converged = true;
      return res;
    }
    Vector dir = -inv_hess * g;
    double slope = g.dot(dir);
    if (!(slope < 0.0) || !dir.allFinite()) {
      inv_hess = scaled_identity(g);
      dir = -inv_hess * g;
      slope = g.dot(dir);
    }
    const double len = dir.norm();
    if (len > opt.max_step) {
      dir *= opt.max_step / len;
      slope *= opt.max_step / len;
    }

    double step = 1.0;
    Vector x_new;
    double f_new = kNegInf;
    bool accepted = false;
    for (int k = 0; k < 60; ++k, step *= 0.5) {
      x_new = res.x + step * dir;
      f_new = f(x_new);
      // Armijo on -f: -f_new <= -f + c * step * slope
      if (std::isfinite(f_new) && -f_new <= -res.value + 1e-4 * step * slope) {
        accepted = true;
        break;
      }
    }
    if (!accepted) {
      if (!inv_hess.isApprox(scaled_identity(g))) {
        inv_hess = scaled_identity(g);
        continue;
      }
      break;
    }
    Vector g_new = -grad(x_new);
    const Vector s = x_new - res.x;
    const Vector y = g_new - g;
    const double sy = s.dot(y);
    if (sy > 1e-12 * s.norm() * y.norm()) {
      const double rho = 1.0 / sy;
      const Matrix left = eye - rho * s * y.transpose();
      inv_hess = left * inv_hess * left.transpose() + rho * s * s.transpose();
    }
    res.x = x_new;
    res.value = f_new;
    g = g_new;
    res.gradient = -g;
    res.gradient_norm = g.norm();
  }
  res.converged = res.gradient_norm <= opt.rel_tolerance * (1.0 + std::abs(res.value));
  return res;
}

}  // namespace cpost
