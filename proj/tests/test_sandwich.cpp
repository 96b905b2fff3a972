#include "cpost/gp_model.hpp"
#include "cpost/models.hpp"
#include "cpost/sandwich.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace cpost;

namespace {

// l(theta) = -n (theta - a)^T Q (theta - a) / 2 with fixed replicate scores.
struct QuadraticModel {
  Matrix q;
  Vector a;
  Index n = 100;
  Matrix scores;

  Index dim() const { return a.size(); }
  Index replicates() const { return n; }
  double loglik(const Vector& x) const { return -0.5 * static_cast<double>(n) * (x - a).dot(q * (x - a)); }
  Vector score(const Vector& x) const { return -static_cast<double>(n) * q * (x - a); }
  Matrix replicate_scores(const Vector&) const { return scores; }
};

static_assert(CompositeModel<QuadraticModel>);

Matrix random_pd(Rng& rng, Index p) {
  std::normal_distribution<double> z(0.0, 1.0);
  Matrix a(p, p);
  for (Index i = 0; i < p; ++i)
    for (Index j = 0; j < p; ++j) a(i, j) = z(rng);
  return a * a.transpose() + 0.1 * Matrix::Identity(p, p);
}

Matrix random_invertible(Rng& rng, Index p) {
  std::normal_distribution<double> z(0.0, 1.0);
  Matrix a(p, p);
  for (Index i = 0; i < p; ++i)
    for (Index j = 0; j < p; ++j) a(i, j) = z(rng);
  return a + 3.0 * Matrix::Identity(p, p);
}

const GpParams kTruth(0.0, 1.0, 3.0);

}  // namespace

TEST(EstimateH, ExactForQuadratics) {
  Rng rng(1);
  QuadraticModel m{random_pd(rng, 3), Eigen::Vector3d(0.5, -1.0, 2.0)};
  EXPECT_LT((estimate_H(m, Eigen::Vector3d(0.1, 0.2, 0.3)) - m.q).norm(), 1e-6);
}

TEST(EstimateH, InvariantToStackingReplicates) {
  const auto d = simulate_gp(kTruth, SiteLayout::uniform(20, 0.0, 20.0, 3), 50, 4);
  const GpPairwiseModel m1(d), m2(d.stacked(2));
  const Vector x = m1.working(kTruth);
  const Matrix h1 = estimate_H(m1, x), h2 = estimate_H(m2, x);
  EXPECT_LT(relative_frobenius(h2, h1), 1e-10);
}

TEST(EstimateJ, RecoversScoreCovariance) {
  Rng rng(2);
  const Index n = 20000;
  const Matrix v = random_pd(rng, 3);
  const Matrix lower = v.llt().matrixL();
  std::normal_distribution<double> z(0.0, 1.0);
  Matrix s(n, 3);
  for (Index j = 0; j < n; ++j) {
    const Vector e = Eigen::Vector3d(z(rng), z(rng), z(rng));
    s.row(j) = (lower * e).transpose();
  }
  QuadraticModel m{Matrix::Identity(3, 3), Vector::Zero(3), n, s};
  EXPECT_LT((estimate_J(m, Vector::Zero(3)) - v).norm(), 5.0 / std::sqrt(double(n)) * v.norm() * 3.0);
}

TEST(EstimateJ, TooFewReplicates) {
  const auto d = simulate_gp(kTruth, SiteLayout::uniform(5, 0.0, 20.0, 5), 2, 6);
  const GpPairwiseModel m(d);
  try {
    estimate_J(m, m.working(kTruth));
    FAIL();
  } catch (const SandwichError& e) {
    EXPECT_NE(std::string(e.what()).find("J singular: need n > p replicates"), std::string::npos);
  }
}

TEST(MagnitudeK, IdentityCase) {
  Rng rng(3);
  const Matrix h = random_pd(rng, 3);
  const auto m = magnitude_k(h, h);
  EXPECT_LT((m.lambdas - Vector::Ones(3)).norm(), 1e-12);
  EXPECT_NEAR(m.k, 1.0, 1e-12);
}

TEST(MagnitudeK, DiagonalExample) {
  const Matrix h = Matrix::Identity(2, 2);
  Matrix j = Matrix::Zero(2, 2);
  j.diagonal() << 2.0, 4.0;
  const auto m = magnitude_k(h, j);
  EXPECT_NEAR(m.lambdas(0), 4.0, 1e-12);
  EXPECT_NEAR(m.lambdas(1), 2.0, 1e-12);
  EXPECT_NEAR(m.k, 1.0 / 3.0, 1e-12);
}

TEST(MagnitudeK, InvariantUnderJointCongruence) {
  Rng rng(4);
  for (int rep = 0; rep < 20; ++rep) {
    const Matrix h = random_pd(rng, 3), j = random_pd(rng, 3), a = random_invertible(rng, 3);
    const auto m1 = magnitude_k(h, j);
    const auto m2 = magnitude_k(a.transpose() * h * a, a.transpose() * j * a);
    EXPECT_LT((m1.lambdas - m2.lambdas).norm(), 1e-8 * m1.lambdas.norm());
    EXPECT_NEAR(m1.k * m1.lambdas.sum(), 3.0, 1e-12);
  }
}

TEST(MagnitudeK, MatchesDirectEigenvalues) {
  Rng rng(5);
  const Matrix h = random_pd(rng, 4), j = random_pd(rng, 4);
  Eigen::EigenSolver<Matrix> es(h.inverse() * j);
  std::vector<double> direct;
  for (Index i = 0; i < 4; ++i) direct.push_back(es.eigenvalues()(i).real());
  std::sort(direct.rbegin(), direct.rend());
  const auto m = magnitude_k(h, j);
  for (Index i = 0; i < 4; ++i) EXPECT_NEAR(m.lambdas(i), direct[i], 1e-8 * direct[0]);
}

TEST(MagnitudeK, RejectsIndefiniteInput) {
  Matrix h = Matrix::Identity(2, 2);
  h(1, 1) = -1.0;
  EXPECT_THROW(magnitude_k(h, Matrix::Identity(2, 2)), SandwichError);
}

TEST(CurvatureC, IdentityCase) {
  Rng rng(6);
  const Matrix h = random_pd(rng, 3);
  EXPECT_LT((curvature_C(h, h) - Matrix::Identity(3, 3)).norm(), 1e-10);
}

TEST(CurvatureC, ScalarCase) {
  Matrix h(1, 1), j(1, 1);
  h << 4.0;
  j << 16.0;
  EXPECT_NEAR(curvature_C(h, j)(0, 0), 0.5, 1e-14);
}

TEST(CurvatureC, DefiningEquationOnRandomPairs) {
  Rng rng(7);
  for (int rep = 0; rep < 100; ++rep) {
    const Matrix h = random_pd(rng, 3), j = random_pd(rng, 3);
    const Matrix c = curvature_C(h, j);
    const Matrix target = h * j.inverse() * h;
    EXPECT_LT(relative_frobenius(c.transpose() * h * c, target), 1e-8) << "pair " << rep;
    EXPECT_GT(c.determinant(), 0.0);
  }
}

TEST(CurvatureC, EigenvaluesAreSquaredSingularValuesOfRootRatio) {
  Rng rng(8);
  for (int rep = 0; rep < 20; ++rep) {
    const Matrix h = random_pd(rng, 3), j = random_pd(rng, 3);
    const Matrix m = symmetric_sqrt(h);
    const Matrix ma = symmetric_sqrt(symmetrize(h * j.inverse() * h));
    const Matrix r = ma.inverse() * m;
    Eigen::JacobiSVD<Matrix> svd(r);
    const Vector sq = svd.singularValues().array().square();
    const auto lam = magnitude_k(h, j).lambdas;
    EXPECT_LT((lam - sq).norm(), 1e-8 * lam.norm());
  }
}

TEST(CurvatureC, RejectsIndefiniteInput) {
  Matrix j = Matrix::Identity(2, 2);
  j(0, 0) = 0.0;
  EXPECT_THROW(curvature_C(Matrix::Identity(2, 2), j), SandwichError);
}

TEST(TraceBound, WarnsBelowDimension) {
  SandwichFit fit;
  fit.theta_hat = Vector::Zero(2);
  fit.lambdas = Eigen::Vector2d(0.9, 0.8);
  fit.n = 10;
  check_trace_bound(fit);
  ASSERT_EQ(fit.warnings.size(), 1u);
  SandwichFit ok = fit;
  ok.warnings.clear();
  ok.lambdas = Eigen::Vector2d(1.5, 0.6);
  check_trace_bound(ok);
  EXPECT_TRUE(ok.warnings.empty());
}

TEST(MaximizeComposite, ConsistentAtLargeN) {
  const auto d = simulate_gp(kTruth, SiteLayout::uniform(20, 0.0, 20.0, 9), 5000, 10);
  const GpPairwiseModel m(d);
  const auto nat = m.natural(maximize_composite(m, default_initial_point(d)));
  EXPECT_NEAR(nat(0), kTruth.mu, 0.1);
  EXPECT_NEAR(nat(1), kTruth.tau, 0.1);
  EXPECT_NEAR(nat(2), kTruth.omega, 0.1);
}

TEST(MaximizeComposite, StationaryAndNotBelowStart) {
  const auto d = simulate_gp(kTruth, SiteLayout::uniform(20, 0.0, 20.0, 11), 50, 12);
  const GpPairwiseModel m(d);
  const Vector init = default_initial_point(d);
  const auto res = maximize_composite_result(m, init);
  EXPECT_TRUE(res.converged);
  EXPECT_GE(res.value, m.loglik(init));
  EXPECT_LE(m.score(res.x).norm(), 1e-6 * (1.0 + std::abs(res.value)));
  const Vector again = maximize_composite(m, res.x);
  EXPECT_LT((again - res.x).norm(), 1e-5);
}

TEST(MaximizeComposite, TwoSitesGivesFullMle) {
  const auto d = simulate_gp(kTruth, SiteLayout({0.0, 2.0}), 200, 13);
  const Vector a = maximize_composite(GpPairwiseModel(d), default_initial_point(d));
  const Vector b = maximize_composite(GpFullModel(d), default_initial_point(d));
  EXPECT_LT((a - b).norm(), 1e-5);
}

TEST(MaximizeComposite, IterationCapCarriesBestPoint) {
  const auto d = simulate_gp(kTruth, SiteLayout::uniform(20, 0.0, 20.0, 14), 50, 15);
  const GpPairwiseModel m(d);
  FitOptions opt;
  opt.optimizer.max_iterations = 1;
  opt.optimizer.hessian_init = false;
  opt.restarts = 0;
  const Vector init = Eigen::Vector3d(3.0, 2.0, -1.0);
  try {
    maximize_composite(m, init, opt);
    FAIL() << "expected non-convergence";
  } catch (const OptimizationError& e) {
    EXPECT_EQ(e.best_point.size(), 3);
    EXPECT_GE(m.loglik(e.best_point), m.loglik(init));
    EXPECT_GT(e.gradient_norm, 0.0);
  }
}

TEST(FitGp, TwoSitesBartlettIdentity) {
  const auto d = simulate_gp(kTruth, SiteLayout({0.0, 2.0}), 5000, 16);
  const auto fit = fit_gp(d);
  EXPECT_LT(relative_frobenius(fit.H, fit.J), 0.15);
  EXPECT_NEAR(fit.trace_HinvJ(), 3.0, 0.3);
  EXPECT_NEAR(fit.k, 1.0, 0.1);
  EXPECT_LT((fit.C - Matrix::Identity(3, 3)).norm(), 0.15);
}

TEST(FitGp, SandwichInvariantsOnSimulationFits) {
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const auto d = simulate_gp(kTruth, SiteLayout::uniform(20, 0.0, 20.0, 100 + seed), 50, 200 + seed);
    const auto fit = fit_gp(d);
    EXPECT_TRUE(is_positive_definite(fit.H));
    EXPECT_TRUE(is_positive_definite(fit.J));
    EXPECT_GE(fit.trace_HinvJ(), 3.0 - 1e-6);
    EXPECT_TRUE(fit.warnings.empty());
    EXPECT_LT(relative_frobenius(fit.C.transpose() * fit.H * fit.C, fit.godambe()), 1e-8);
    EXPECT_NEAR(fit.k * fit.lambdas.sum(), 3.0, 1e-12);
    for (Index i = 1; i < 3; ++i) EXPECT_GE(fit.lambdas(i - 1), fit.lambdas(i));
  }
}

TEST(FitGp, NaturalCoordinatesShareTheMaximizer) {
  const auto d = simulate_gp(kTruth, SiteLayout::uniform(20, 0.0, 20.0, 17), 50, 18);
  const auto u = fit_gp(d, Coordinates::unconstrained);
  const auto n = fit_gp(d, Coordinates::natural);
  EXPECT_EQ(n.coordinates, Coordinates::natural);
  EXPECT_NEAR(n.theta_hat(1), std::exp(u.theta_hat(1)), 1e-12);
  EXPECT_NEAR(n.theta_hat(2), std::exp(u.theta_hat(2)), 1e-12);
  // lambdas are invariant to reparameterization at the maximizer
  EXPECT_LT((n.lambdas - u.lambdas).norm(), 1e-4 * u.lambdas.norm());
}
