#pragma once

#include "cpost/core.hpp"
#include "cpost/linalg.hpp"
#include "cpost/models.hpp"
#include "cpost/optimize.hpp"

#include <algorithm>
#include <optional>
#include <string>
#include <vector>

namespace cpost {

// MCLE together with the order-one sandwich ingredients, all in the model's
// working coordinates.
struct SandwichFit {
  Vector theta_hat;
  Matrix H;        // -(1/n) Hessian of the total composite log-likelihood
  Matrix J;        // sample covariance of the per-replicate scores
  Vector lambdas;  // eigenvalues of H^{-1} J, descending
  double k = 1.0;  // p / sum(lambdas)
  Matrix C;        // C^T H C = H J^{-1} H
  Index n = 0;
  Coordinates coordinates = Coordinates::unconstrained;
  double loglik = kNegInf;
  std::vector<std::string> warnings;

  Index p() const { return theta_hat.size(); }
  double trace_HinvJ() const { return lambdas.sum(); }
  // H J^{-1} H
  Matrix godambe() const { return symmetrize(H * J.llt().solve(H)); }
};

struct FitOptions {
  OptimizeOptions optimizer{};
  int restarts = 5;
  std::uint64_t seed = 0x5a4d;
  double restart_scale = 0.5;
};

template <CompositeModel M>
OptimizeResult maximize_composite_result(const M& model, const Vector& init, const FitOptions& opt = {}) {
  auto f = [&](const Vector& x) { return model.loglik(x); };
  auto g = [&](const Vector& x) { return model.score(x); };
  const double f0 = f(init);
  if (!std::isfinite(f0)) throw OptimizationError("composite likelihood not finite at the initial point", init, 0.0);

  OptimizeResult best = maximize_bfgs(f, g, init, opt.optimizer);
  if (best.converged) return best;

  Rng rng(opt.seed);
  std::normal_distribution<double> normal(0.0, opt.restart_scale);
  for (int r = 0; r < opt.restarts; ++r) {
    Vector start = init;
    for (Index i = 0; i < start.size(); ++i) start(i) += normal(rng);
    if (!std::isfinite(f(start))) continue;
    OptimizeResult trial;
    try {
      trial = maximize_bfgs(f, g, start, opt.optimizer);
    } catch (const OptimizationError&) {
      continue;
    }
    const bool better = (trial.converged && !best.converged) ||
                        (trial.converged == best.converged && trial.value > best.value);
    if (better && trial.value >= f0) best = trial;
    if (best.converged) return best;
  }
  throw OptimizationError("composite likelihood maximization did not converge within " +
                              std::to_string(opt.optimizer.max_iterations) + " iterations (gradient norm " +
                              format_double(best.gradient_norm) + ")",
                          best.x, best.gradient_norm);
}

template <CompositeModel M>
Vector maximize_composite(const M& model, const Vector& init, const FitOptions& opt = {}) {
  return maximize_composite_result(model, init, opt).x;
}

template <CompositeModel M>
Matrix estimate_H(const M& model, const Vector& theta_hat) {
  const double n = static_cast<double>(model.replicates());
  Matrix h = -fd_jacobian_of_gradient([&](const Vector& x) { return Vector(model.score(x)); }, theta_hat, 1e-4) / n;
  if (!is_positive_definite(h))
    throw SandwichError("estimated H is not positive definite; re-optimize the composite likelihood");
  return h;
}

template <CompositeModel M>
Matrix estimate_J(const M& model, const Vector& theta_hat) {
  const Index n = model.replicates();
  if (n <= model.dim()) throw SandwichError("J singular: need n > p replicates");
  Matrix j = symmetrize(sample_covariance(model.replicate_scores(theta_hat)));
  if (!is_positive_definite(j)) throw SandwichError("J singular: need n > p replicates");
  return j;
}

struct Magnitude {
  Vector lambdas;
  double k = 1.0;
};

// Eigenvalues of H^{-1} J through the whitened symmetric pencil L^{-1} J L^{-T}.
inline Magnitude magnitude_k(const Matrix& h, const Matrix& j) {
  if (!is_positive_definite(h) || !is_positive_definite(j))
    throw SandwichError("magnitude adjustment needs positive definite H and J");
  Eigen::LLT<Matrix> llt(h);
  const Matrix lower = llt.matrixL();
  const Matrix w = lower.triangularView<Eigen::Lower>().solve(
      lower.triangularView<Eigen::Lower>().solve(j).transpose());
  Eigen::SelfAdjointEigenSolver<Matrix> es(symmetrize(w), Eigen::EigenvaluesOnly);
  Vector lambdas = es.eigenvalues().reverse();
  if (!(lambdas.array() > 0.0).all()) throw SandwichError("non-positive eigenvalue of H^{-1} J");
  return {lambdas, static_cast<double>(lambdas.size()) / lambdas.sum()};
}

// C = M^{-1} M_A with symmetric roots M^2 = H and M_A^2 = H J^{-1} H.
inline Matrix curvature_C(const Matrix& h, const Matrix& j) {
  if (!is_positive_definite(h) || !is_positive_definite(j))
    throw SandwichError("curvature adjustment needs positive definite H and J");
  const Matrix m = symmetric_sqrt(h);
  const Matrix ma = symmetric_sqrt(symmetrize(h * j.llt().solve(h)));
  return m.llt().solve(ma);
}

inline void check_trace_bound(SandwichFit& fit) {
  const double p = static_cast<double>(fit.p());
  if (fit.trace_HinvJ() < p - 1e-6)
    fit.warnings.push_back("tr(H^-1 J) = " + format_double(fit.trace_HinvJ()) + " < p = " + format_double(p) +
                           " (n=" + std::to_string(fit.n) + ")");
}

template <CompositeModel M>
SandwichFit sandwich_at(const M& model, const Vector& theta_hat) {
  SandwichFit fit;
  fit.theta_hat = theta_hat;
  fit.n = model.replicates();
  fit.loglik = model.loglik(theta_hat);
  fit.H = estimate_H(model, theta_hat);
  fit.J = estimate_J(model, theta_hat);
  const auto mag = magnitude_k(fit.H, fit.J);
  fit.lambdas = mag.lambdas;
  fit.k = mag.k;
  fit.C = curvature_C(fit.H, fit.J);
  if constexpr (requires { model.coordinates().kind(); }) fit.coordinates = model.coordinates().kind();
  check_trace_bound(fit);
  return fit;
}

template <CompositeModel M>
SandwichFit fit_sandwich(const M& model, const Vector& init, const FitOptions& opt = {}) {
  return sandwich_at(model, maximize_composite(model, init, opt));
}

// Moment-based starting point in unconstrained coordinates.
inline Vector default_initial_point(const ReplicateData& data) {
  const Matrix& y = data.values();
  const double mean = y.mean();
  double var = (y.array() - mean).square().mean();
  if (!(var > 0.0)) var = 1.0;
  const auto& x = data.layout().locations();
  const auto [lo, hi] = std::minmax_element(x.begin(), x.end());
  double span = (*hi - *lo) / 10.0;
  if (!(span > 0.0)) span = 1.0;
  return Eigen::Vector3d(mean, std::log(var), std::log(span));
}

// Sandwich fit of a GP model (pairwise or full). The likelihood is always
// maximized in unconstrained coordinates; H, J, k and C are then estimated in
// the requested working coordinates.
template <class Model = GpPairwiseModel>
SandwichFit fit_gp(const ReplicateData& data, Coordinates coords = Coordinates::unconstrained,
                   const FitOptions& opt = {}, std::optional<Vector> init = std::nullopt) {
  const Model unconstrained(data, Coordinates::unconstrained);
  const Vector x_hat = maximize_composite(unconstrained, init ? *init : default_initial_point(data), opt);
  if (coords == Coordinates::unconstrained) return sandwich_at(unconstrained, x_hat);
  const Model natural(data, Coordinates::natural);
  return sandwich_at(natural, Vector(unconstrained.natural(x_hat)));
}

}  // namespace cpost
