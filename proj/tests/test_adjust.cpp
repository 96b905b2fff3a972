#include "cpost/adjust.hpp"
#include "cpost/diagnostics.hpp"
#include "cpost/gp_model.hpp"
#include "cpost/linalg.hpp"
#include "cpost/models.hpp"
#include "cpost/sandwich.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

using namespace cpost;

namespace {

const GpParams kTruth(0.0, 1.0, 3.0);

ReplicateData scenario_data(std::uint64_t seed, Index n = 50, Index k = 20) {
  return simulate_gp(kTruth, SiteLayout::uniform(k, 0.0, 20.0, seed), n, seed + 1000);
}

std::vector<Vector> random_points(std::uint64_t seed, int count) {
  Rng rng(seed);
  std::normal_distribution<double> z(0.0, 0.5);
  std::vector<Vector> pts;
  for (int i = 0; i < count; ++i) pts.push_back(Eigen::Vector3d(z(rng), z(rng), 1.0 + z(rng)));
  return pts;
}

}  // namespace

TEST(AdjustedPosterior, UnitMagnitudeEqualsUnadjusted) {
  const auto d = scenario_data(1);
  const GpPairwiseModel m(d);
  auto fit = fit_gp(d);
  fit.k = 1.0;
  const GpPrior prior(PriorSpec{}, Coordinates::unconstrained);
  const AdjustedPosterior none(m, prior, Adjustment::none);
  const AdjustedPosterior mag(m, prior, Adjustment::magnitude, fit);
  for (const auto& x : random_points(2, 100)) EXPECT_EQ(none.log_density(x), mag.log_density(x));
}

TEST(AdjustedPosterior, IdentityCurvatureEqualsUnadjusted) {
  const auto d = scenario_data(3);
  const GpPairwiseModel m(d);
  auto fit = fit_gp(d);
  fit.C = Matrix::Identity(3, 3);
  const GpPrior prior(PriorSpec{}, Coordinates::unconstrained);
  const AdjustedPosterior none(m, prior, Adjustment::none);
  const AdjustedPosterior curv(m, prior, Adjustment::curvature, fit);
  for (const auto& x : random_points(4, 100)) EXPECT_NEAR(none.log_density(x), curv.log_density(x), 1e-9 * std::abs(none.log_density(x)));
}

TEST(AdjustedPosterior, NeedsFitForAdjustments) {
  const auto d = scenario_data(5);
  const GpPairwiseModel m(d);
  EXPECT_THROW(AdjustedPosterior(m, FlatPrior{}, Adjustment::magnitude), Error);
  EXPECT_THROW(AdjustedPosterior(m, FlatPrior{}, Adjustment::curvature), Error);
}

TEST(AdjustedPosterior, MagnitudeKeepsTheMaximizer) {
  const auto d = scenario_data(6);
  const GpPairwiseModel m(d);
  const auto fit = fit_gp(d);
  const AdjustedPosterior mag(m, FlatPrior{}, Adjustment::magnitude, fit);
  const Vector g = fd_gradient([&](const Vector& x) { return mag.log_density(x); }, fit.theta_hat);
  EXPECT_LT(g.norm(), 1e-3);
  const auto res = maximize_bfgs([&](const Vector& x) { return mag.log_density(x); },
                                 [&](const Vector& x) { return Vector(fit.k * m.score(x)); }, fit.theta_hat);
  EXPECT_LT((res.x - fit.theta_hat).norm(), 1e-5);
}

TEST(AdjustedPosterior, CurvatureFixesTheMaximizer) {
  const auto d = scenario_data(7);
  const GpPairwiseModel m(d);
  const auto fit = fit_gp(d);
  const GpPrior prior(PriorSpec{}, Coordinates::unconstrained);
  const AdjustedPosterior none(m, prior, Adjustment::none);
  const AdjustedPosterior curv(m, prior, Adjustment::curvature, fit);
  EXPECT_DOUBLE_EQ(curv.log_density(fit.theta_hat), none.log_density(fit.theta_hat));
}

TEST(AdjustedPosterior, CurvatureHessianIsGodambe) {
  const auto d = scenario_data(8);
  const GpPairwiseModel m(d);
  const auto fit = fit_gp(d);
  const AdjustedPosterior curv(m, FlatPrior{}, Adjustment::curvature, fit);
  const Matrix hess = -fd_hessian([&](const Vector& x) { return curv.log_likelihood(x); }, fit.theta_hat, 1e-3);
  const Matrix target = static_cast<double>(fit.n) * fit.godambe();
  EXPECT_LT(relative_frobenius(symmetrize(hess), target), 1e-3);
}

TEST(AdjustedPosterior, FlatPriorPosteriorModeIsMcle) {
  const auto d = scenario_data(9);
  const GpPairwiseModel m(d);
  const auto fit = fit_gp(d);
  PriorSpec vague;
  vague.mu.variance = 1e8;
  vague.tau = {1e-4, 1e-4};
  vague.omega = {1e-4, 1e-4};
  // The Jacobian and the vague priors still contribute O(1) terms; the mode is
  // that of likelihood * prior in natural coordinates, so compare there.
  const GpPrior prior(vague, Coordinates::natural);
  const GpPairwiseModel mn(d, Coordinates::natural);
  const AdjustedPosterior post(mn, prior, Adjustment::none);
  const Vector start = m.natural(fit.theta_hat);
  const auto res = maximize_bfgs([&](const Vector& x) { return post.log_density(x); },
                                 [&](const Vector& x) { return fd_gradient([&](const Vector& z) { return post.log_density(z); }, x); },
                                 start);
  const Vector diff = (res.x - start).cwiseQuotient(start.cwiseAbs() + Vector::Ones(3));
  EXPECT_LT(diff.cwiseAbs().maxCoeff(), 0.02);
}

TEST(AdjustedPosterior, LocationEquivariance) {
  const auto d = scenario_data(10);
  const ReplicateData shifted(d.values().array() + 2.5, d.layout());
  auto mu_argmax = [](const ReplicateData& data) {
    const GpPairwiseModel m(data);
    const AdjustedPosterior post(m, FlatPrior{}, Adjustment::none);
    auto f = [&](const Vector& mu) { return post.log_density(Eigen::Vector3d(mu(0), 0.0, std::log(3.0))); };
    auto g = [&](const Vector& mu) { return fd_gradient(f, mu); };
    return maximize_bfgs(f, g, Vector::Zero(1)).x(0);
  };
  EXPECT_NEAR(mu_argmax(shifted) - mu_argmax(d), 2.5, 1e-6);
}

TEST(AdjustedPosterior, TwoSitesMatchesFullPosterior) {
  const auto d = scenario_data(11, 30, 2);
  const GpPrior prior(PriorSpec{}, Coordinates::unconstrained);
  const GpPairwiseModel pm(d);
  const GpFullModel fm(d);
  const AdjustedPosterior pw(pm, prior, Adjustment::none);
  const AdjustedPosterior full(fm, prior, Adjustment::full);
  for (const auto& x : random_points(12, 50))
    EXPECT_NEAR(pw.log_density(x), full.log_density(x), 1e-9 * std::abs(full.log_density(x)));
}

TEST(AdjustedPosterior, NaturalCoordinateEscapesAreImpossibleDensity) {
  const auto d = scenario_data(13);
  const GpPairwiseModel m(d, Coordinates::natural);
  auto fit = fit_gp(d, Coordinates::natural);
  fit.C = 10.0 * Matrix::Identity(3, 3);
  const AdjustedPosterior curv(m, GpPrior(PriorSpec{}, Coordinates::natural), Adjustment::curvature, fit);
  Vector x = fit.theta_hat;
  x(1) = 0.5 * fit.theta_hat(1);  // tau* = tau_hat + 10 (x - tau_hat) < 0
  EXPECT_EQ(curv.log_density(x), kNegInf);
  x(1) = -1.0;
  EXPECT_EQ(curv.log_density(x), kNegInf);
}

TEST(LrStatistic, ZeroAtMaximizerAndNonNegative) {
  const auto d = scenario_data(14);
  const GpPairwiseModel m(d);
  const auto fit = fit_gp(d);
  for (Adjustment k : {Adjustment::none, Adjustment::magnitude, Adjustment::curvature}) {
    EXPECT_NEAR(lr_statistic(m, k, fit, fit.theta_hat), 0.0, 1e-12);
    for (const auto& x : random_points(15, 20)) EXPECT_GE(lr_statistic(m, k, fit, x), -1e-8);
  }
}

TEST(LrStatistic, TwoSitesAdjustmentsCoincideWithFull) {
  const auto d = scenario_data(16, 2000, 2);
  const GpPairwiseModel m(d);
  const auto fit = fit_gp(d);
  const Vector x0 = m.working(kTruth);
  const double base = lr_statistic(m, Adjustment::none, fit, x0);
  const double full = 2.0 * (GpFullModel(d).loglik(fit.theta_hat) - GpFullModel(d).loglik(x0));
  EXPECT_NEAR(base, full, 1e-8 * (1.0 + full));
  EXPECT_NEAR(lr_statistic(m, Adjustment::magnitude, fit, x0), base, 0.15 * (1.0 + base));
  EXPECT_NEAR(lr_statistic(m, Adjustment::curvature, fit, x0), base, 0.15 * (1.0 + base));
}

TEST(LrStatistic, AdjustedStatisticsAreCalibrated) {
  const int reps = 200;
  Vector magn(reps), curv(reps);
  for (int r = 0; r < reps; ++r) {
    const auto d = scenario_data(5000 + r);
    const GpPairwiseModel m(d);
    const auto fit = fit_gp(d);
    const Vector x0 = m.working(kTruth);
    magn(r) = lr_statistic(m, Adjustment::magnitude, fit, x0);
    curv(r) = lr_statistic(m, Adjustment::curvature, fit, x0);
  }
  auto check_mean = [&](const Vector& v, const char* name) {
    const double mean = v.mean();
    const double se = std::sqrt((v.array() - mean).square().sum() / (reps - 1.0) / reps);
    EXPECT_LT(std::abs(mean - 3.0), 3.0 * se) << name << " mean " << mean << " se " << se;
  };
  check_mean(magn, "magnitude");
  check_mean(curv, "curvature");
  // Fraction of Lambda_curv above the chi^2_3 95% point: binomial(200, 0.05), 3 SE band.
  const double exceed = (curv.array() > 7.815).cast<double>().mean();
  EXPECT_LT(std::abs(exceed - 0.05), 3.0 * std::sqrt(0.05 * 0.95 / reps)) << "exceedance " << exceed;
}
