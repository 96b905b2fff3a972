#pragma once

// Stationary Gaussian process on the line with exponential covariance
// tau * exp(-h / omega): simulation, full and pairwise log-likelihoods,
// their scores, and the conjugate conditionals for (mu, tau).

#include "cpost/core.hpp"
#include "cpost/linalg.hpp"
#include "cpost/prior.hpp"

#include <cmath>
#include <fstream>
#include <istream>
#include <numbers>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

namespace cpost {

struct GpParams {
  double mu = 0.0;
  double tau = 1.0;
  double omega = 1.0;

  GpParams() = default;
  GpParams(double m, double t, double w) : mu(m), tau(t), omega(w) {
    if (!std::isfinite(m) || !(t > 0.0) || !(w > 0.0) || !std::isfinite(t) || !std::isfinite(w))
      throw Error("invalid GP parameters (mu=" + format_double(m) + ", tau=" + format_double(t) +
                  ", omega=" + format_double(w) + "): need finite mu, tau > 0, omega > 0");
  }

  Vector to_vector() const { return Eigen::Vector3d(mu, tau, omega); }

  static GpParams from_vector(const Vector& v) {
    if (v.size() != 3) throw Error("GpParams needs a length-3 vector");
    return {v(0), v(1), v(2)};
  }

  std::string describe() const {
    return "mu=" + format_double(mu) + ", tau=" + format_double(tau) + ", omega=" + format_double(omega);
  }

  bool operator==(const GpParams&) const = default;
};

class SiteLayout {
 public:
  SiteLayout() = default;
  explicit SiteLayout(std::vector<double> locations) : x_(std::move(locations)) {
    if (x_.empty()) throw Error("site layout needs at least one location");
    for (double v : x_)
      if (!std::isfinite(v)) throw Error("site locations must be finite");
  }

  // K sites drawn uniformly on [lower, upper], in draw order.
  static SiteLayout uniform(Index sites, double lower, double upper, std::uint64_t seed) {
    if (sites < 1 || !(upper > lower)) throw Error("uniform layout needs sites >= 1 and upper > lower");
    Rng rng(seed);
    std::uniform_real_distribution<double> unif(lower, upper);
    std::vector<double> x(static_cast<std::size_t>(sites));
    for (auto& v : x) v = unif(rng);
    return SiteLayout(std::move(x));
  }

  Index size() const { return static_cast<Index>(x_.size()); }
  const std::vector<double>& locations() const { return x_; }
  double distance(Index a, Index b) const { return std::abs(x_[a] - x_[b]); }

  Matrix distances() const {
    const Index k = size();
    Matrix d(k, k);
    for (Index a = 0; a < k; ++a)
      for (Index b = 0; b < k; ++b) d(a, b) = distance(a, b);
    return d;
  }

  bool operator==(const SiteLayout&) const = default;

 private:
  std::vector<double> x_;
};

class ReplicateData {
 public:
  ReplicateData() = default;
  ReplicateData(Matrix values, SiteLayout layout) : values_(std::move(values)), layout_(std::move(layout)) {
    if (values_.rows() < 1) throw Error("dataset needs at least one replicate");
    if (values_.cols() != layout_.size())
      throw Error("dataset has " + std::to_string(values_.cols()) + " columns but layout has " +
                  std::to_string(layout_.size()) + " sites");
    if (!values_.allFinite()) throw Error("dataset contains non-finite values");
  }

  const Matrix& values() const { return values_; }
  const SiteLayout& layout() const { return layout_; }
  Index replicates() const { return values_.rows(); }
  Index sites() const { return values_.cols(); }

  // The dataset stacked on itself `times` times.
  ReplicateData stacked(Index times) const {
    Matrix v(values_.rows() * times, values_.cols());
    for (Index t = 0; t < times; ++t) v.middleRows(t * values_.rows(), values_.rows()) = values_;
    return {std::move(v), layout_};
  }

 private:
  Matrix values_;
  SiteLayout layout_;
};

// All pairs (i, j), i < j, in lexicographic order (0-based).
class PairIndex {
 public:
  explicit PairIndex(Index sites) {
    if (sites < 2) throw Error("pairwise likelihood needs at least two sites");
    for (Index i = 0; i < sites; ++i)
      for (Index j = i + 1; j < sites; ++j) pairs_.emplace_back(i, j);
    sites_ = sites;
  }
  Index sites() const { return sites_; }
  Index size() const { return static_cast<Index>(pairs_.size()); }
  const std::vector<std::pair<Index, Index>>& pairs() const { return pairs_; }

 private:
  std::vector<std::pair<Index, Index>> pairs_;
  Index sites_ = 0;
};

namespace detail {

inline constexpr double kLog2Pi = 1.8378770664093454836;

// Sums over replicates of data centered at `shift`.
struct SufficientStats {
  Index n = 0;
  double shift = 0.0;
  Vector sum;    // sum_j (y_j - shift)
  Matrix cross;  // sum_j (y_j - shift)(y_j - shift)^T

  explicit SufficientStats(const Matrix& y) : n(y.rows()), shift(y.mean()) {
    Matrix c = y.array() - shift;
    sum = c.colwise().sum().transpose();
    cross = c.transpose() * c;
  }
};

// Cholesky of the correlation matrix with diagonal jitter 1e-10 .. 1e-6 (relative to tau).
inline std::optional<std::pair<Eigen::LLT<Matrix>, double>> jittered_cholesky(const Matrix& corr) {
  Eigen::LLT<Matrix> llt(corr);
  if (llt.info() == Eigen::Success) return std::make_pair(std::move(llt), 0.0);
  const Index k = corr.rows();
  for (double eps = 1e-10; eps <= 1e-6 * (1.0 + 1e-9); eps *= 10.0) {
    Eigen::LLT<Matrix> j(corr + eps * Matrix::Identity(k, k));
    if (j.info() == Eigen::Success) return std::make_pair(std::move(j), eps);
  }
  return std::nullopt;
}

inline Matrix correlation_matrix(const Matrix& dist, double omega) {
  return (-dist.array() / omega).exp().matrix();
}

struct Evaluation {
  double value = kNegInf;
  Eigen::Vector3d grad = Eigen::Vector3d::Zero();  // natural coordinates
  bool ok = false;
};

}  // namespace detail

// Precomputed pairwise log-likelihood evaluator; all weights equal to one.
class PairwiseLikelihood {
 public:
  PairwiseLikelihood(const ReplicateData& data, const PairIndex& pairs)
      : stats_(data.values()), centered_(data.values().array() - stats_.shift), sites_(data.sites()) {
    if (pairs.sites() != data.sites()) throw Error("pair index does not match the number of sites");
    const Index m = pairs.size();
    ia_.resize(m);
    ib_.resize(m);
    d_.resize(m);
    sa_.resize(m); sb_.resize(m); saa_.resize(m); sbb_.resize(m); sab_.resize(m);
    for (Index p = 0; p < m; ++p) {
      const auto [a, b] = pairs.pairs()[p];
      ia_[p] = a;
      ib_[p] = b;
      d_(p) = data.layout().distance(a, b);
      sa_(p) = stats_.sum(a);
      sb_(p) = stats_.sum(b);
      saa_(p) = stats_.cross(a, a);
      sbb_(p) = stats_.cross(b, b);
      sab_(p) = stats_.cross(a, b);
    }
  }

  Index replicates() const { return stats_.n; }
  Index pair_count() const { return d_.size(); }

  detail::Evaluation evaluate(double mu, double tau, double omega, bool with_grad = true) const {
    detail::Evaluation out;
    if (!(tau > 0.0) || !(omega > 0.0) || !std::isfinite(mu) || !std::isfinite(tau) || !std::isfinite(omega))
      return out;
    const double n = static_cast<double>(stats_.n);
    const double m = mu - stats_.shift;
    const Eigen::ArrayXd rho = (-d_ / omega).exp();
    const Eigen::ArrayXd det = -((-2.0 / omega) * d_).expm1();  // 1 - rho^2
    if (!(det > 0.0).all()) return out;
    const Eigen::ArrayXd aa = saa_ - 2.0 * m * sa_ + n * m * m;
    const Eigen::ArrayXd bb = sbb_ - 2.0 * m * sb_ + n * m * m;
    const Eigen::ArrayXd ab = sab_ - m * (sa_ + sb_) + n * m * m;
    const Eigen::ArrayXd q = aa + bb - 2.0 * rho * ab;
    const double count = static_cast<double>(d_.size());
    out.value = -count * n * (detail::kLog2Pi + std::log(tau)) - 0.5 * n * det.log().sum() -
                (q / det).sum() / (2.0 * tau);
    if (!std::isfinite(out.value)) return out;
    if (with_grad) {
      const Eigen::ArrayXd ua = sa_ - n * m, ub = sb_ - n * m;
      out.grad(0) = ((ua + ub) / (1.0 + rho)).sum() / tau;
      out.grad(1) = -count * n / tau + (q / det).sum() / (2.0 * tau * tau);
      const Eigen::ArrayXd drho = n * rho / det + (ab * det - rho * q) / (tau * det.square());
      out.grad(2) = (drho * rho * d_).sum() / (omega * omega);
    }
    out.ok = true;
    return out;
  }

  // Per-replicate scores (rows) in natural coordinates.
  std::optional<Matrix> replicate_scores(double mu, double tau, double omega) const {
    if (!(tau > 0.0) || !(omega > 0.0)) return std::nullopt;
    const Index k = sites_;
    Vector w = Vector::Zero(k);
    Matrix mt = Matrix::Zero(k, k), mw = Matrix::Zero(k, k);
    double const_w = 0.0;
    for (Index p = 0; p < d_.size(); ++p) {
      const Index a = ia_[p], b = ib_[p];
      const double rho = std::exp(-d_(p) / omega);
      const double det = -std::expm1(-2.0 * d_(p) / omega);
      if (!(det > 0.0)) return std::nullopt;
      const double g = rho * d_(p) / (omega * omega);
      w(a) += 1.0 / (tau * (1.0 + rho));
      w(b) += 1.0 / (tau * (1.0 + rho));
      mt(a, a) += 1.0 / det;
      mt(b, b) += 1.0 / det;
      mt(a, b) -= rho / det;
      mt(b, a) -= rho / det;
      const double diag = -g * rho / (det * det);
      mw(a, a) += diag;
      mw(b, b) += diag;
      const double off = 0.5 * g * (1.0 + rho * rho) / (det * det);
      mw(a, b) += off;
      mw(b, a) += off;
      const_w += g * rho / det;
    }
    const Matrix u = centered_.array() - (mu - stats_.shift);
    Matrix scores(u.rows(), 3);
    scores.col(0) = u * w;
    scores.col(1) = (((u * mt).cwiseProduct(u)).rowwise().sum().array() / (2.0 * tau * tau) -
                     static_cast<double>(d_.size()) / tau).matrix();
    scores.col(2) = (((u * mw).cwiseProduct(u)).rowwise().sum().array() / tau + const_w).matrix();
    return scores;
  }

  // Example 1 pairwise conditionals for (mu | tau, omega) and (tau | mu, omega).
  std::optional<std::pair<NormalSpec, InvGammaSpec>> conditionals(const GpParams& at, const PriorSpec& prior) const {
    const double n = static_cast<double>(stats_.n);
    const Eigen::ArrayXd rho = (-d_ / at.omega).exp();
    const Eigen::ArrayXd det = -((-2.0 / at.omega) * d_).expm1();
    if (!(det > 0.0).all()) return std::nullopt;
    // raw (uncentered) sums
    const double s = stats_.shift;
    const Eigen::ArrayXd raw_a = sa_ + n * s, raw_b = sb_ + n * s;
    const double ones_prec = (2.0 / (1.0 + rho)).sum();  // 1^T Sigma_p^{-1} 1
    const double lin = ((raw_a + raw_b) / (1.0 + rho)).sum();
    NormalSpec mu_cond;
    mu_cond.variance = 1.0 / (1.0 / prior.mu.variance + n * ones_prec / at.tau);
    mu_cond.mean = mu_cond.variance * (prior.mu.mean / prior.mu.variance + lin / at.tau);
    const double m = at.mu - s;
    const Eigen::ArrayXd aa = saa_ - 2.0 * m * sa_ + n * m * m;
    const Eigen::ArrayXd bb = sbb_ - 2.0 * m * sb_ + n * m * m;
    const Eigen::ArrayXd ab = sab_ - m * (sa_ + sb_) + n * m * m;
    const double quad = ((aa + bb - 2.0 * rho * ab) / det).sum();
    InvGammaSpec tau_cond{prior.tau.shape + n * static_cast<double>(d_.size()), prior.tau.scale + 0.5 * quad};
    return std::make_pair(mu_cond, tau_cond);
  }

 private:
  detail::SufficientStats stats_;
  Matrix centered_;
  Index sites_;
  std::vector<Index> ia_, ib_;
  Eigen::ArrayXd d_, sa_, sb_, saa_, sbb_, sab_;
};

// Full multivariate normal log-likelihood evaluator.
class FullLikelihood {
 public:
  explicit FullLikelihood(const ReplicateData& data)
      : stats_(data.values()), centered_(data.values().array() - stats_.shift), dist_(data.layout().distances()) {}

  Index replicates() const { return stats_.n; }
  Index sites() const { return dist_.rows(); }

  struct Factor {
    Eigen::LLT<Matrix> llt;
    Matrix corr;
    double jitter = 0.0;
  };

  std::optional<Factor> factor(double omega) const {
    Matrix corr = detail::correlation_matrix(dist_, omega);
    auto chol = detail::jittered_cholesky(corr);
    if (!chol) return std::nullopt;
    return Factor{std::move(chol->first), std::move(corr), chol->second};
  }

  detail::Evaluation evaluate(double mu, double tau, double omega, bool with_grad = true) const {
    detail::Evaluation out;
    if (!(tau > 0.0) || !(omega > 0.0) || !std::isfinite(mu) || !std::isfinite(tau) || !std::isfinite(omega))
      return out;
    auto f = factor(omega);
    if (!f) return out;
    const double n = static_cast<double>(stats_.n);
    const double k = static_cast<double>(sites());
    const double m = mu - stats_.shift;
    const Vector ones = Vector::Ones(sites());
    const Matrix c = centered_cross(m);
    const Matrix rinv_c = f->llt.solve(c);
    const double tr = rinv_c.trace();
    const double logdet = 2.0 * f->llt.matrixLLT().diagonal().array().log().sum();
    out.value = -0.5 * n * k * detail::kLog2Pi - 0.5 * n * (k * std::log(tau) + logdet) - tr / (2.0 * tau);
    if (!std::isfinite(out.value)) return out;
    if (with_grad) {
      const Vector resid = stats_.sum - n * m * ones;
      out.grad(0) = ones.dot(f->llt.solve(resid)) / tau;
      out.grad(1) = -0.5 * n * k / tau + tr / (2.0 * tau * tau);
      const Matrix rdot = (f->corr.array() * dist_.array()).matrix() / (omega * omega);
      const Matrix rinv_rdot = f->llt.solve(rdot);
      out.grad(2) = -0.5 * n * rinv_rdot.trace() + (rinv_rdot * rinv_c).trace() / (2.0 * tau);
    }
    out.ok = true;
    return out;
  }

  std::optional<Matrix> replicate_scores(double mu, double tau, double omega) const {
    auto f = factor(omega);
    if (!f || !(tau > 0.0)) return std::nullopt;
    const Index k = sites();
    const Matrix rinv = f->llt.solve(Matrix::Identity(k, k));
    const Matrix rdot = (f->corr.array() * dist_.array()).matrix() / (omega * omega);
    const Matrix u = centered_.array() - (mu - stats_.shift);
    const Matrix ur = u * rinv;
    Matrix scores(u.rows(), 3);
    scores.col(0) = ur.rowwise().sum() / tau;
    scores.col(1) = (ur.cwiseProduct(u).rowwise().sum().array() / (2.0 * tau * tau) -
                     0.5 * static_cast<double>(k) / tau).matrix();
    const Matrix sandwich = rinv * rdot * rinv;
    scores.col(2) = ((u * sandwich).cwiseProduct(u).rowwise().sum().array() / (2.0 * tau) -
                     0.5 * (rinv * rdot).trace()).matrix();
    return scores;
  }

  // Example 1 full conditionals, extended additively over replicates.
  std::optional<std::pair<NormalSpec, InvGammaSpec>> conditionals(const GpParams& at, const PriorSpec& prior) const {
    auto f = factor(at.omega);
    if (!f) return std::nullopt;
    return conditionals(at, prior, *f);
  }

  std::pair<NormalSpec, InvGammaSpec> conditionals(const GpParams& at, const PriorSpec& prior, const Factor& f) const {
    const double n = static_cast<double>(stats_.n);
    const double k = static_cast<double>(sites());
    const Vector ones = Vector::Ones(sites());
    const Vector rinv1 = f.llt.solve(ones);
    const double ones_prec = ones.dot(rinv1);
    const Vector raw_sum = stats_.sum.array() + n * stats_.shift;
    NormalSpec mu_cond;
    mu_cond.variance = 1.0 / (1.0 / prior.mu.variance + n * ones_prec / at.tau);
    mu_cond.mean = mu_cond.variance * (prior.mu.mean / prior.mu.variance + rinv1.dot(raw_sum) / at.tau);
    const double quad = f.llt.solve(centered_cross(at.mu - stats_.shift)).trace();
    InvGammaSpec tau_cond{prior.tau.shape + 0.5 * n * k, prior.tau.scale + 0.5 * quad};
    return {mu_cond, tau_cond};
  }

 private:
  // sum_j (y_j - mu 1)(y_j - mu 1)^T with m = mu - shift
  Matrix centered_cross(double m) const {
    const double n = static_cast<double>(stats_.n);
    const Index k = sites();
    Matrix c = stats_.cross;
    c -= m * (stats_.sum * Vector::Ones(k).transpose() + Vector::Ones(k) * stats_.sum.transpose());
    c.array() += n * m * m;
    return c;
  }

  detail::SufficientStats stats_;
  Matrix centered_;
  Matrix dist_;
};

// ---------------------------------------------------------------------------
// Public operations.

inline ReplicateData simulate_gp(const GpParams& params, const SiteLayout& layout, Index n, std::uint64_t seed) {
  if (n < 1) throw Error("simulate_gp needs n >= 1");
  const Matrix corr = detail::correlation_matrix(layout.distances(), params.omega);
  auto chol = detail::jittered_cholesky(corr);
  if (!chol) throw CovarianceError("covariance not PD for " + params.describe());
  const Matrix lower = std::sqrt(params.tau) * chol->first.matrixL().toDenseMatrix();
  Rng rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  const Index k = layout.size();
  Matrix values(n, k);
  Vector z(k);
  for (Index j = 0; j < n; ++j) {
    for (Index i = 0; i < k; ++i) z(i) = normal(rng);
    values.row(j) = (lower * z).transpose().array() + params.mu;
  }
  return {std::move(values), layout};
}

inline double full_loglik(const GpParams& params, const ReplicateData& data) {
  auto e = FullLikelihood(data).evaluate(params.mu, params.tau, params.omega, false);
  if (!e.ok) throw CovarianceError("covariance not PD for " + params.describe());
  return e.value;
}

inline Vector full_score(const GpParams& params, const ReplicateData& data) {
  auto e = FullLikelihood(data).evaluate(params.mu, params.tau, params.omega, true);
  if (!e.ok) throw CovarianceError("covariance not PD for " + params.describe());
  return e.grad;
}

inline double pairwise_loglik(const GpParams& params, const ReplicateData& data, const PairIndex& pairs) {
  auto e = PairwiseLikelihood(data, pairs).evaluate(params.mu, params.tau, params.omega, false);
  if (!e.ok) throw DegeneratePairError("pair correlation reached 1 for " + params.describe());
  return e.value;
}

// One row per replicate: the gradient of that replicate's pairwise log-likelihood.
inline Matrix pairwise_score(const GpParams& params, const ReplicateData& data, const PairIndex& pairs) {
  auto s = PairwiseLikelihood(data, pairs).replicate_scores(params.mu, params.tau, params.omega);
  if (!s) throw DegeneratePairError("pair correlation reached 1 for " + params.describe());
  return *s;
}

struct ConjugateConditionals {
  NormalSpec mu;
  InvGammaSpec tau;
};

inline ConjugateConditionals conjugate_conditionals_full(const GpParams& params, const ReplicateData& data,
                                                         const PriorSpec& prior) {
  auto c = FullLikelihood(data).conditionals(params, prior);
  if (!c) throw CovarianceError("covariance not PD for " + params.describe());
  return {c->first, c->second};
}

inline ConjugateConditionals conjugate_conditionals_pairwise(const GpParams& params, const ReplicateData& data,
                                                             const PriorSpec& prior) {
  auto c = PairwiseLikelihood(data, PairIndex(data.sites())).conditionals(params, prior);
  if (!c) throw DegeneratePairError("pair correlation reached 1 for " + params.describe());
  return {c->first, c->second};
}

// ---------------------------------------------------------------------------
// Dataset CSV: "# locations: x1,...", header site_1..site_K, one row per replicate.

inline void write_dataset(std::ostream& os, const ReplicateData& data) {
  os << "# locations: ";
  const auto& x = data.layout().locations();
  for (std::size_t i = 0; i < x.size(); ++i) os << (i ? "," : "") << format_double(x[i]);
  os << '\n';
  for (Index i = 0; i < data.sites(); ++i) os << (i ? "," : "") << "site_" << (i + 1);
  os << '\n';
  for (Index j = 0; j < data.replicates(); ++j) {
    for (Index i = 0; i < data.sites(); ++i) os << (i ? "," : "") << format_double(data.values()(j, i));
    os << '\n';
  }
}

namespace detail {
inline std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream is(s);
  while (std::getline(is, cur, sep)) out.push_back(cur);
  if (!s.empty() && s.back() == sep) out.emplace_back();
  return out;
}
}  // namespace detail

inline ReplicateData read_dataset(std::istream& is) {
  std::string line;
  int line_no = 0;
  auto next = [&]() -> bool {
    while (std::getline(is, line)) {
      ++line_no;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (!line.empty()) return true;
    }
    return false;
  };
  const std::string tag = "# locations:";
  if (!next() || line.rfind(tag, 0) != 0) throw ConfigError("dataset must start with '# locations:'", line_no);
  std::vector<double> x;
  for (const auto& tok : detail::split(line.substr(tag.size()), ',')) {
    try {
      x.push_back(parse_double(tok));
    } catch (const Error& e) {
      throw ConfigError(e.what(), line_no);
    }
  }
  if (!next()) throw ConfigError("missing header row", line_no);
  const auto header = detail::split(line, ',');
  if (header.size() != x.size())
    throw ConfigError("header has " + std::to_string(header.size()) + " columns but " + std::to_string(x.size()) +
                          " locations were given",
                      line_no);
  for (std::size_t i = 0; i < header.size(); ++i)
    if (header[i] != "site_" + std::to_string(i + 1)) throw ConfigError("unexpected column '" + header[i] + "'", line_no);
  std::vector<std::vector<double>> rows;
  while (next()) {
    const auto toks = detail::split(line, ',');
    if (toks.size() != x.size()) throw ConfigError("row has wrong number of columns", line_no);
    std::vector<double> row;
    for (const auto& t : toks) {
      try {
        row.push_back(parse_double(t));
      } catch (const Error& e) {
        throw ConfigError(e.what(), line_no);
      }
    }
    rows.push_back(std::move(row));
  }
  Matrix values(static_cast<Index>(rows.size()), static_cast<Index>(x.size()));
  for (std::size_t j = 0; j < rows.size(); ++j)
    for (std::size_t i = 0; i < x.size(); ++i) values(static_cast<Index>(j), static_cast<Index>(i)) = rows[j][i];
  return {std::move(values), SiteLayout(std::move(x))};
}

inline ReplicateData read_dataset(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open dataset '" + path + "'");
  return read_dataset(in);
}

}  // namespace cpost
