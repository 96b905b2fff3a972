#pragma once

// Trace summaries: equal-tailed credible intervals, coverage tables, central
// moments, split R-hat, two-sample Kolmogorov-Smirnov, correlations.

#include "cpost/core.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

namespace cpost {

// Type-7 (linear interpolation) sample quantile of sorted data.
inline double sorted_quantile(const std::vector<double>& sorted, double q) {
  if (sorted.empty()) throw Error("quantile of an empty sample");
  const double h = (static_cast<double>(sorted.size()) - 1.0) * q;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  if (lo + 1 >= sorted.size()) return sorted.back();
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[lo + 1] - sorted[lo]);
}

inline std::vector<double> sorted_copy(const Vector& v) {
  std::vector<double> s(v.data(), v.data() + v.size());
  std::sort(s.begin(), s.end());
  return s;
}

inline std::pair<double, double> credible_interval(const Vector& draws, double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw Error("credible level must lie in (0, 1), got " + format_double(alpha));
  if (draws.size() == 0) throw Error("credible interval of an empty trace");
  const auto s = sorted_copy(draws);
  return {sorted_quantile(s, 0.5 * (1.0 - alpha)), sorted_quantile(s, 0.5 * (1.0 + alpha))};
}

inline std::pair<double, double> credible_interval(const Matrix& states, Index param, double alpha) {
  if (param < 0 || param >= states.cols()) throw Error("parameter index out of range");
  return credible_interval(Vector(states.col(param)), alpha);
}

// Coverage indicator over a level grid; level 0 never covers, level 1 always does.
inline std::vector<bool> covers(const Vector& draws, double truth, const std::vector<double>& alphas) {
  const auto s = sorted_copy(draws);
  std::vector<bool> hit;
  hit.reserve(alphas.size());
  for (double a : alphas) {
    if (a <= 0.0) {
      hit.push_back(false);
    } else if (a >= 1.0) {
      hit.push_back(true);
    } else {
      const double lo = sorted_quantile(s, 0.5 * (1.0 - a));
      const double hi = sorted_quantile(s, 0.5 * (1.0 + a));
      hit.push_back(lo <= truth && truth <= hi);
    }
  }
  return hit;
}

struct CoverageReport {
  std::string scenario;
  std::string sampler;
  std::string adjustment;
  std::vector<std::string> params;
  std::vector<double> alphas;
  std::vector<std::vector<Index>> hits;  // [param][alpha]
  Index replicates = 0;                  // successful replicates
  Index excluded = 0;

  CoverageReport() = default;
  CoverageReport(std::vector<std::string> names, std::vector<double> levels)
      : params(std::move(names)), alphas(std::move(levels)),
        hits(params.size(), std::vector<Index>(alphas.size(), 0)) {}

  // hit[param][alpha] for one replicate
  void add(const std::vector<std::vector<bool>>& hit) {
    if (hit.size() != params.size()) throw Error("coverage row has the wrong number of parameters");
    for (std::size_t i = 0; i < hit.size(); ++i) {
      if (hit[i].size() != alphas.size()) throw Error("coverage row has the wrong number of levels");
      for (std::size_t a = 0; a < alphas.size(); ++a) hits[i][a] += hit[i][a] ? 1 : 0;
    }
    ++replicates;
  }

  std::size_t level_index(double alpha) const {
    for (std::size_t a = 0; a < alphas.size(); ++a)
      if (std::abs(alphas[a] - alpha) < 1e-12) return a;
    throw Error("level " + format_double(alpha) + " not on the coverage grid");
  }

  std::size_t param_index(const std::string& name) const {
    auto it = std::find(params.begin(), params.end(), name);
    if (it == params.end()) throw Error("no coverage recorded for parameter '" + name + "'");
    return static_cast<std::size_t>(it - params.begin());
  }

  double coverage(std::size_t param, std::size_t level) const {
    return replicates ? static_cast<double>(hits[param][level]) / static_cast<double>(replicates) : 0.0;
  }
  double coverage(const std::string& param, double alpha) const {
    return coverage(param_index(param), level_index(alpha));
  }

  double standard_error(std::size_t param, std::size_t level) const {
    if (!replicates) return 0.0;
    const double c = coverage(param, level);
    return std::sqrt(c * (1.0 - c) / static_cast<double>(replicates));
  }
  double standard_error(const std::string& param, double alpha) const {
    return standard_error(param_index(param), level_index(alpha));
  }

  void write_csv(std::ostream& os) const {
    os << "scenario,sampler,adjustment,param,alpha,coverage,se,R\n";
    for (std::size_t i = 0; i < params.size(); ++i)
      for (std::size_t a = 0; a < alphas.size(); ++a)
        os << scenario << ',' << sampler << ',' << adjustment << ',' << params[i] << ','
           << format_double(alphas[a]) << ',' << format_double(coverage(i, a)) << ','
           << format_double(standard_error(i, a)) << ',' << replicates << '\n';
  }
};

struct MomentSummary {
  Vector mean;
  Vector variance;  // second central moment
  Vector skewness;
  Vector kurtosis;  // non-excess
};

inline MomentSummary moment_summary(const Matrix& states) {
  const Index p = states.cols();
  const double n = static_cast<double>(states.rows());
  if (states.rows() == 0) throw Error("moments of an empty trace");
  MomentSummary m{Vector(p), Vector(p), Vector(p), Vector(p)};
  for (Index i = 0; i < p; ++i) {
    const double mu = states.col(i).mean();
    const Eigen::ArrayXd d = states.col(i).array() - mu;
    const double m2 = d.square().sum() / n;
    const double m3 = d.cube().sum() / n;
    const double m4 = d.square().square().sum() / n;
    m.mean(i) = mu;
    m.variance(i) = m2;
    m.skewness(i) = m2 > 0.0 ? m3 / std::pow(m2, 1.5) : std::numeric_limits<double>::quiet_NaN();
    m.kurtosis(i) = m2 > 0.0 ? m4 / (m2 * m2) : std::numeric_limits<double>::quiet_NaN();
  }
  return m;
}

inline double pearson_correlation(const Vector& x, const Vector& y) {
  if (x.size() != y.size() || x.size() < 2) throw Error("correlation needs two equal-length samples of size >= 2");
  const Eigen::ArrayXd dx = x.array() - x.mean();
  const Eigen::ArrayXd dy = y.array() - y.mean();
  const double denom = std::sqrt(dx.square().sum() * dy.square().sum());
  if (!(denom > 0.0)) return std::numeric_limits<double>::quiet_NaN();
  return (dx * dy).sum() / denom;
}

// Split R-hat of one parameter over several chains of equal length.
inline double split_rhat(const std::vector<Vector>& chains) {
  std::vector<Vector> halves;
  for (const auto& c : chains) {
    const Index h = c.size() / 2;
    if (h < 2) throw Error("R-hat needs chains of length >= 4");
    halves.push_back(c.head(h));
    halves.push_back(c.segment(c.size() - h, h));
  }
  const Index n = halves.front().size();
  for (const auto& h : halves)
    if (h.size() != n) throw Error("R-hat needs chains of equal length");
  const double m = static_cast<double>(halves.size());
  const double nn = static_cast<double>(n);
  Vector means(halves.size());
  double w = 0.0;
  for (std::size_t i = 0; i < halves.size(); ++i) {
    means(static_cast<Index>(i)) = halves[i].mean();
    w += (halves[i].array() - halves[i].mean()).square().sum() / (nn - 1.0);
  }
  w /= m;
  const double b = nn * (means.array() - means.mean()).square().sum() / (m - 1.0);
  const double var_plus = (nn - 1.0) / nn * w + b / nn;
  return w > 0.0 ? std::sqrt(var_plus / w) : 1.0;
}

// Effective sample size via Geyer's initial positive sequence.
inline double effective_sample_size(const Vector& x) {
  const Index n = x.size();
  if (n < 4) return static_cast<double>(n);
  const Eigen::ArrayXd d = x.array() - x.mean();
  const double c0 = d.square().sum() / static_cast<double>(n);
  if (!(c0 > 0.0)) return static_cast<double>(n);
  auto rho = [&](Index lag) {
    return (d.head(n - lag) * d.tail(n - lag)).sum() / static_cast<double>(n) / c0;
  };
  double sum = 0.0;
  for (Index k = 0; 2 * k + 1 < n; ++k) {
    const double pair = rho(2 * k) + rho(2 * k + 1);
    if (pair <= 0.0) break;
    sum += pair;
  }
  const double tau = std::max(1.0, 2.0 * sum - 1.0);
  return static_cast<double>(n) / tau;
}

struct KsResult {
  double statistic = 0.0;
  double p_value = 1.0;
};

inline double kolmogorov_survival(double lambda) {
  if (lambda < 1e-3) return 1.0;
  double sum = 0.0, sign = 1.0;
  for (int j = 1; j <= 200; ++j) {
    const double term = sign * std::exp(-2.0 * j * j * lambda * lambda);
    sum += term;
    if (std::abs(term) < 1e-12 * std::abs(sum)) break;
    sign = -sign;
  }
  return std::clamp(2.0 * sum, 0.0, 1.0);
}

inline KsResult ks_two_sample(const Vector& a, const Vector& b) {
  if (a.size() == 0 || b.size() == 0) throw Error("KS test needs non-empty samples");
  const auto sa = sorted_copy(a);
  const auto sb = sorted_copy(b);
  const double na = static_cast<double>(sa.size()), nb = static_cast<double>(sb.size());
  std::size_t i = 0, j = 0;
  double d = 0.0;
  while (i < sa.size() && j < sb.size()) {
    const double v = std::min(sa[i], sb[j]);
    while (i < sa.size() && sa[i] <= v) ++i;
    while (j < sb.size() && sb[j] <= v) ++j;
    d = std::max(d, std::abs(static_cast<double>(i) / na - static_cast<double>(j) / nb));
  }
  const double ne = std::sqrt(na * nb / (na + nb));
  return {d, kolmogorov_survival((ne + 0.12 + 0.11 / ne) * d)};
}

}  // namespace cpost
