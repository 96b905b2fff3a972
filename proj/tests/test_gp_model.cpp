#include "cpost/gp_model.hpp"
#include "cpost/linalg.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <sstream>

using namespace cpost;

namespace {

double bivariate_logpdf(double ya, double yb, double mu, double tau, double rho) {
  const double za = ya - mu, zb = yb - mu;
  const double det = 1.0 - rho * rho;
  return -std::log(2.0 * std::numbers::pi) - std::log(tau) - 0.5 * std::log(det) -
         (za * za + zb * zb - 2.0 * rho * za * zb) / (2.0 * tau * det);
}

ReplicateData make_data(Index k, Index n, std::uint64_t seed, GpParams truth = {0.3, 1.2, 2.0}) {
  return simulate_gp(truth, SiteLayout::uniform(k, 0.0, 10.0, seed), n, seed + 17);
}

}  // namespace

TEST(GpParams, RejectsNonPositiveScaleParameters) {
  EXPECT_THROW(GpParams(0.0, 0.0, 1.0), Error);
  EXPECT_THROW(GpParams(0.0, 1.0, -1.0), Error);
  EXPECT_THROW(GpParams(std::nan(""), 1.0, 1.0), Error);
  const GpParams p(1.5, 2.0, 3.0);
  EXPECT_EQ(GpParams::from_vector(p.to_vector()), p);
}

TEST(SiteLayout, KeepsInputOrder) {
  const SiteLayout l({3.0, 1.0, 2.0});
  EXPECT_EQ(l.locations(), (std::vector<double>{3.0, 1.0, 2.0}));
  EXPECT_DOUBLE_EQ(l.distance(0, 1), 2.0);
  EXPECT_THROW(SiteLayout({1.0, std::numeric_limits<double>::infinity()}), Error);
}

TEST(PairIndex, LexicographicPairs) {
  const PairIndex p(4);
  ASSERT_EQ(p.size(), 6);
  const std::vector<std::pair<Index, Index>> expected{{0, 1}, {0, 2}, {0, 3}, {1, 2}, {1, 3}, {2, 3}};
  EXPECT_EQ(p.pairs(), expected);
  EXPECT_THROW(PairIndex(1), Error);
}

TEST(Simulate, DistantSitesAreUncorrelated) {
  const Index n = 10000;
  const auto d = simulate_gp({0.0, 1.0, 3.0}, SiteLayout({0.0, 1e9}), n, 1);
  const Matrix c = sample_covariance(d.values());
  EXPECT_LT(std::abs(c(0, 1) / std::sqrt(c(0, 0) * c(1, 1))), 3.0 / std::sqrt(double(n)));
}

TEST(Simulate, ColumnMeansMatchMu) {
  const Index n = 10000;
  const auto d = simulate_gp({5.0, 1.0, 3.0}, SiteLayout::uniform(5, 0.0, 20.0, 3), n, 4);
  for (Index i = 0; i < d.sites(); ++i) EXPECT_NEAR(d.values().col(i).mean(), 5.0, 4.0 / std::sqrt(double(n)));
}

TEST(Simulate, CovarianceMatchesExponentialKernel) {
  const auto d = simulate_gp({0.0, 1.0, 3.0}, SiteLayout({0.0, 1.0}), 100000, 5);
  EXPECT_NEAR(sample_covariance(d.values())(0, 1), std::exp(-1.0 / 3.0), 0.01);
}

TEST(Simulate, SameSeedSameData) {
  const SiteLayout l = SiteLayout::uniform(6, 0.0, 20.0, 9);
  const auto a = simulate_gp({0.0, 1.0, 3.0}, l, 20, 42);
  const auto b = simulate_gp({0.0, 1.0, 3.0}, l, 20, 42);
  EXPECT_TRUE((a.values().array() == b.values().array()).all());
}

TEST(FullLoglik, SingleSiteIsUnivariateNormal) {
  Matrix y(3, 1);
  y << 0.5, -1.0, 2.0;
  const ReplicateData d(y, SiteLayout({0.0}));
  const double mu = 0.2, tau = 1.7;
  double expected = 0.0;
  for (Index j = 0; j < 3; ++j)
    expected += -0.5 * std::log(2.0 * std::numbers::pi * tau) - (y(j, 0) - mu) * (y(j, 0) - mu) / (2.0 * tau);
  EXPECT_NEAR(full_loglik({mu, tau, 3.0}, d), expected, 1e-12);
}

TEST(FullLoglik, NearlyPerfectlyCorrelatedPair) {
  Matrix y(1, 2);
  y << 0.0, 0.0;
  const ReplicateData d(y, SiteLayout({0.0, 1.0}));
  const double omega = 1e8;
  const double rho = std::exp(-1.0 / omega);
  const double expected = bivariate_logpdf(0.0, 0.0, 0.0, 1.0, rho);
  EXPECT_NEAR(full_loglik({0.0, 1.0, omega}, d), expected, 1e-6 * std::abs(expected));
}

TEST(FullLoglik, InvariantToJointSitePermutation) {
  const auto d = make_data(5, 4, 11);
  const std::vector<int> perm{3, 0, 4, 1, 2};
  std::vector<double> x;
  Matrix y(d.replicates(), d.sites());
  for (Index i = 0; i < 5; ++i) {
    x.push_back(d.layout().locations()[perm[i]]);
    y.col(i) = d.values().col(perm[i]);
  }
  const ReplicateData permuted(y, SiteLayout(x));
  const GpParams p(0.1, 0.9, 2.5);
  EXPECT_NEAR(full_loglik(p, d), full_loglik(p, permuted), 1e-10 * std::abs(full_loglik(p, d)));
}

TEST(PairwiseLoglik, TwoSitesEqualsFull) {
  const auto d = make_data(2, 7, 21);
  const GpParams p(0.4, 1.3, 2.2);
  const double full = full_loglik(p, d);
  EXPECT_NEAR(pairwise_loglik(p, d, PairIndex(2)), full, 1e-10 * std::abs(full));
  const Vector gs = pairwise_score(p, d, PairIndex(2)).colwise().sum();
  EXPECT_LT((gs - full_score(p, d)).norm(), 1e-9 * (1.0 + full_score(p, d).norm()));
}

TEST(PairwiseLoglik, ThreeSitesMatchesExplicitBivariateSum) {
  Matrix y(1, 3);
  y << 0.7, -0.2, 1.1;
  const SiteLayout l({0.0, 1.5, 4.0});
  const ReplicateData d(y, l);
  const double mu = 0.1, tau = 1.4, omega = 2.5;
  double expected = 0.0;
  const PairIndex pairs(3);
  for (auto [a, b] : pairs.pairs())
    expected += bivariate_logpdf(y(0, a), y(0, b), mu, tau, std::exp(-l.distance(a, b) / omega));
  EXPECT_NEAR(pairwise_loglik({mu, tau, omega}, d, PairIndex(3)), expected, 1e-12 * std::abs(expected));
}

TEST(PairwiseLoglik, StackingDoubles) {
  const auto d = make_data(6, 5, 31);
  const GpParams p(0.0, 1.0, 3.0);
  const double one = pairwise_loglik(p, d, PairIndex(6));
  EXPECT_NEAR(pairwise_loglik(p, d.stacked(2), PairIndex(6)), 2.0 * one, 1e-10 * std::abs(one));
}

TEST(PairwiseLoglik, DegeneratePairThrows) {
  Matrix y(1, 2);
  y << 0.0, 1.0;
  const ReplicateData d(y, SiteLayout({2.0, 2.0}));
  EXPECT_THROW(pairwise_loglik({0.0, 1.0, 1.0}, d, PairIndex(2)), DegeneratePairError);
}

class ScoreFiniteDifference : public ::testing::TestWithParam<int> {};

TEST_P(ScoreFiniteDifference, PerReplicateScoresMatchFiniteDifferences) {
  const int seed = GetParam();
  Rng rng(seed);
  std::uniform_int_distribution<int> kd(2, 6), nd(1, 10);
  std::uniform_real_distribution<double> u(0.5, 3.0);
  const Index k = kd(rng), n = nd(rng);
  const auto d = make_data(k, n, 100 + seed);
  const Vector theta = Eigen::Vector3d(u(rng) - 1.5, u(rng), u(rng));
  const PairIndex pairs(k);

  auto fd = [](auto f, const Vector& x) {
    Vector g(x.size());
    for (Index i = 0; i < x.size(); ++i) {
      const double h = 1e-5 * (1.0 + std::abs(x(i)));
      Vector a = x, b = x;
      a(i) += h;
      b(i) -= h;
      g(i) = (f(a) - f(b)) / (2.0 * h);
    }
    return g;
  };
  const Matrix scores = pairwise_score(GpParams::from_vector(theta), d, pairs);
  const Matrix full_scores = *FullLikelihood(d).replicate_scores(theta(0), theta(1), theta(2));
  for (Index j = 0; j < n; ++j) {
    const ReplicateData single(d.values().row(j), d.layout());
    const Vector g = fd([&](const Vector& x) { return pairwise_loglik(GpParams::from_vector(x), single, pairs); }, theta);
    EXPECT_LT((Vector(scores.row(j).transpose()) - g).norm(), 1e-4 * (1.0 + g.norm())) << "replicate " << j;
    const Vector gf = fd([&](const Vector& x) { return full_loglik(GpParams::from_vector(x), single); }, theta);
    EXPECT_LT((Vector(full_scores.row(j).transpose()) - gf).norm(), 1e-4 * (1.0 + gf.norm())) << "replicate " << j;
  }
  const Vector total = PairwiseLikelihood(d, pairs).evaluate(theta(0), theta(1), theta(2)).grad;
  EXPECT_LT((Vector(scores.colwise().sum().transpose()) - total).norm(), 1e-9 * (1.0 + total.norm()));
  const Vector total_full = full_score(GpParams::from_vector(theta), d);
  EXPECT_LT((Vector(full_scores.colwise().sum().transpose()) - total_full).norm(), 1e-9 * (1.0 + total_full.norm()));
}

INSTANTIATE_TEST_SUITE_P(RandomInstances, ScoreFiniteDifference, ::testing::Range(1, 21));

TEST(PairwiseScore, MeanScoreShrinksAtTruth) {
  const GpParams truth(0.0, 1.0, 3.0);
  const auto d = simulate_gp(truth, SiteLayout::uniform(8, 0.0, 20.0, 2), 4000, 3);
  const Matrix s = pairwise_score(truth, d, PairIndex(8));
  const Vector mean = s.colwise().mean();
  const Matrix cov = sample_covariance(s);
  for (Index i = 0; i < 3; ++i) EXPECT_LT(std::abs(mean(i)), 4.0 * std::sqrt(cov(i, i) / 4000.0));
}

TEST(Conditionals, FlatPriorSingleObservation) {
  Matrix y(1, 1);
  y << 2.5;
  const ReplicateData d(y, SiteLayout({0.0}));
  PriorSpec prior;
  prior.mu.variance = 1e12;
  const auto c = conjugate_conditionals_full({0.0, 1.7, 3.0}, d, prior);
  EXPECT_NEAR(c.mu.mean, 2.5, 1e-9);
  EXPECT_NEAR(c.mu.variance, 1.7, 1e-9);
}

TEST(Conditionals, PerfectlyCorrelatedPairActsAsOneObservation) {
  Matrix y(1, 2);
  y << 1.0, 1.0;
  const ReplicateData d(y, SiteLayout({0.0, 1.0}));
  const PriorSpec prior;
  const double tau = 2.0;
  const auto c = conjugate_conditionals_full({0.0, tau, 1e8}, d, prior);
  EXPECT_NEAR(c.mu.variance, 1.0 / (1.0 / prior.mu.variance + 1.0 / tau), 1e-6);
}

TEST(Conditionals, FullMatchesDenseFormulas) {
  const auto d = make_data(5, 3, 41);
  const PriorSpec prior;
  const GpParams at(0.2, 1.1, 2.0);
  const Matrix sigma = at.tau * (-d.layout().distances().array() / at.omega).exp().matrix();
  const Matrix inv = sigma.inverse();
  const Vector ones = Vector::Ones(5);
  const double var = 1.0 / (1.0 / prior.mu.variance + 3.0 * ones.dot(inv * ones));
  double lin = 0.0, quad = 0.0;
  for (Index j = 0; j < 3; ++j) {
    const Vector yj = d.values().row(j).transpose();
    lin += ones.dot(inv * yj);
    const Vector r = yj - at.mu * ones;
    quad += r.dot(inv * r) * at.tau;
  }
  const auto c = conjugate_conditionals_full(at, d, prior);
  EXPECT_NEAR(c.mu.variance, var, 1e-10);
  EXPECT_NEAR(c.mu.mean, var * (prior.mu.mean / prior.mu.variance + lin), 1e-10);
  EXPECT_DOUBLE_EQ(c.tau.shape, prior.tau.shape + 0.5 * 3 * 5);
  EXPECT_NEAR(c.tau.scale, prior.tau.scale + 0.5 * quad, 1e-9);
}

TEST(Conditionals, PairwiseMatchesDenseBlockDiagonalInverse) {
  const Index k = 4, n = 3;
  const auto d = make_data(k, n, 51);
  const PriorSpec prior;
  const GpParams at(-0.3, 0.8, 1.7);
  const PairIndex pairs(k);
  const Index m = pairs.size();
  Matrix sigma_p = Matrix::Zero(2 * m, 2 * m);
  double identity_rhs = 0.0;
  for (Index p = 0; p < m; ++p) {
    const auto [a, b] = pairs.pairs()[p];
    const double gamma = at.tau * std::exp(-d.layout().distance(a, b) / at.omega);
    sigma_p.block(2 * p, 2 * p, 2, 2) << 1.0, gamma / at.tau, gamma / at.tau, 1.0;
    identity_rhs += 2.0 / (1.0 + gamma / at.tau);
  }
  const Matrix inv = sigma_p.inverse();
  const Vector ones = Vector::Ones(2 * m);
  const double ones_prec = ones.dot(inv * ones);
  EXPECT_NEAR(ones_prec, identity_rhs, 1e-10 * identity_rhs);

  double lin = 0.0, quad = 0.0;
  for (Index j = 0; j < n; ++j) {
    Vector yp(2 * m);
    for (Index p = 0; p < m; ++p) {
      yp(2 * p) = d.values()(j, pairs.pairs()[p].first);
      yp(2 * p + 1) = d.values()(j, pairs.pairs()[p].second);
    }
    lin += ones.dot(inv * yp);
    const Vector r = yp - at.mu * ones;
    quad += r.dot(inv * r);
  }
  const double var = 1.0 / (1.0 / prior.mu.variance + n * ones_prec / at.tau);
  const auto c = conjugate_conditionals_pairwise(at, d, prior);
  EXPECT_NEAR(c.mu.variance, var, 1e-12);
  EXPECT_NEAR(c.mu.mean, var * (prior.mu.mean / prior.mu.variance + lin / at.tau), 1e-10);
  EXPECT_DOUBLE_EQ(c.tau.shape, prior.tau.shape + double(n * m));
  EXPECT_NEAR(c.tau.scale, prior.tau.scale + 0.5 * quad, 1e-9);
}

TEST(Conditionals, TwoSitesPairwiseEqualsFull) {
  const auto d = make_data(2, 6, 61);
  const PriorSpec prior;
  const GpParams at(0.5, 1.5, 2.5);
  const auto f = conjugate_conditionals_full(at, d, prior);
  const auto p = conjugate_conditionals_pairwise(at, d, prior);
  EXPECT_NEAR(p.mu.mean, f.mu.mean, 1e-10);
  EXPECT_NEAR(p.mu.variance, f.mu.variance, 1e-12);
  EXPECT_DOUBLE_EQ(p.tau.shape, f.tau.shape);
  EXPECT_NEAR(p.tau.scale, f.tau.scale, 1e-10 * f.tau.scale);
}

TEST(Conditionals, PairwiseVarianceRatioBound) {
  const double tau = 1.0, b = 100.0;
  PriorSpec prior;
  prior.mu.variance = b;
  for (Index k : {3, 5, 10, 20}) {
    Matrix y = Matrix::Zero(1, k);
    const ReplicateData d(y, SiteLayout::uniform(k, 0.0, 20.0, 70 + k));
    const GpParams at(0.0, tau, 3.0);
    const double ratio = conjugate_conditionals_pairwise(at, d, prior).mu.variance /
                         conjugate_conditionals_full(at, d, prior).mu.variance;
    const double kk = static_cast<double>(k);
    const double bound = (1.0 + tau) * (tau + b * kk) / ((1.0 + tau) * tau + b * tau * kk * (kk - 1.0));
    EXPECT_LE(ratio, bound) << "K=" << k;
  }
}

TEST(Conditionals, PairwiseVarianceRatioDecreasesWithSites) {
  PriorSpec prior;
  // Unit-spaced sites: each added site extends the transect. Random nested
  // layouts can break monotonicity when a new site lands far from the rest.
  double previous = std::numeric_limits<double>::infinity();
  for (Index k = 3; k <= 30; ++k) {
    std::vector<double> x;
    for (Index i = 0; i < k; ++i) x.push_back(static_cast<double>(i));
    const ReplicateData d(Matrix::Zero(1, k), SiteLayout(x));
    const GpParams at(0.0, 1.0, 3.0);
    const double ratio = conjugate_conditionals_pairwise(at, d, prior).mu.variance /
                         conjugate_conditionals_full(at, d, prior).mu.variance;
    EXPECT_LT(ratio, previous) << "K=" << k;
    previous = ratio;
  }
}

TEST(Dataset, RoundTripsExactly) {
  const auto d = make_data(4, 5, 81);
  std::stringstream ss;
  write_dataset(ss, d);
  const auto back = read_dataset(ss);
  EXPECT_EQ(back.layout(), d.layout());
  EXPECT_TRUE((back.values().array() == d.values().array()).all());
}

TEST(Dataset, ColumnCountMismatchNamesTheLine) {
  std::stringstream ss("# locations: 0,1,2\nsite_1,site_2,site_3\n1,2,3\n1,2\n");
  try {
    read_dataset(ss);
    FAIL() << "expected a parse error";
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("line 4"), std::string::npos) << e.what();
  }
  std::stringstream header("# locations: 0,1\nsite_1\n");
  EXPECT_THROW(read_dataset(header), ConfigError);
}
