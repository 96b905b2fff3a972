#pragma once

// MCMC samplers for composite posteriors: adjusted Metropolis-Hastings,
// the overall (frozen-adjustment) Gibbs sampler, the adaptive adjusted Gibbs
// sampler that re-fits each block conditional at every sweep, and the exact
// conjugate Gibbs sampler for the full Gaussian-process likelihood.

#include "cpost/adjust.hpp"
#include "cpost/core.hpp"
#include "cpost/gp_model.hpp"
#include "cpost/linalg.hpp"
#include "cpost/models.hpp"
#include "cpost/optimize.hpp"
#include "cpost/sandwich.hpp"

#include <algorithm>
#include <cmath>
#include <concepts>
#include <sstream>
#include <string>
#include <vector>

namespace cpost {

struct McmcSettings {
  Index iterations = 20000;  // total, burn-in included
  Index burn_in = 2000;
  Index thinning = 1;
  // Proposal scale adaptation during burn-in only.
  double target_low = 0.20;
  double target_high = 0.45;
  Index adapt_interval = 50;
  Index max_consecutive_rejects = 1000;
  // Adaptive Gibbs: sweeps between re-fits of the block adjustments.
  Index refresh_every = 1;
  int inner_max_iterations = 50;

  void validate() const {
    if (iterations <= burn_in) throw Error("MCMC needs iterations > burn_in");
    if (burn_in < 0 || thinning < 1 || refresh_every < 1) throw Error("invalid MCMC settings");
  }
  Index kept() const { return (iterations - burn_in + thinning - 1) / thinning; }
};

class BlockPartition {
 public:
  BlockPartition() = default;
  BlockPartition(std::vector<std::vector<Index>> blocks, Index p) : blocks_(std::move(blocks)) {
    std::vector<int> seen(static_cast<std::size_t>(p), 0);
    for (const auto& b : blocks_) {
      if (b.empty()) throw Error("empty block in partition");
      for (Index i : b) {
        if (i < 0 || i >= p) throw Error("block index out of range");
        if (seen[static_cast<std::size_t>(i)]++) throw Error("blocks overlap");
      }
    }
    for (int s : seen)
      if (!s) throw Error("blocks do not cover every parameter");
  }

  static BlockPartition singletons(Index p) {
    std::vector<std::vector<Index>> b;
    for (Index i = 0; i < p; ++i) b.push_back({i});
    return {std::move(b), p};
  }

  static BlockPartition single(Index p) {
    std::vector<Index> all(static_cast<std::size_t>(p));
    for (Index i = 0; i < p; ++i) all[static_cast<std::size_t>(i)] = i;
    return {{all}, p};
  }

  // "mu|tau,omega": blocks separated by '|', names by ','.
  static BlockPartition parse(const std::string& spec, const std::vector<std::string>& names) {
    std::vector<std::vector<Index>> blocks;
    std::stringstream ss(spec);
    std::string block;
    while (std::getline(ss, block, '|')) {
      std::vector<Index> ids;
      std::stringstream bs(block);
      std::string name;
      while (std::getline(bs, name, ',')) {
        name.erase(0, name.find_first_not_of(" \t"));
        name.erase(name.find_last_not_of(" \t") + 1);
        auto it = std::find(names.begin(), names.end(), name);
        if (it == names.end()) throw ConfigError("unknown parameter '" + name + "' in partition '" + spec + "'");
        ids.push_back(static_cast<Index>(it - names.begin()));
      }
      blocks.push_back(std::move(ids));
    }
    try {
      return {std::move(blocks), static_cast<Index>(names.size())};
    } catch (const Error& e) {
      throw ConfigError(std::string(e.what()) + " in partition '" + spec + "'");
    }
  }

  std::string to_string(const std::vector<std::string>& names) const {
    std::string s;
    for (std::size_t b = 0; b < blocks_.size(); ++b) {
      if (b) s += '|';
      for (std::size_t i = 0; i < blocks_[b].size(); ++i) {
        if (i) s += ',';
        s += names[static_cast<std::size_t>(blocks_[b][i])];
      }
    }
    return s;
  }

  Index size() const { return static_cast<Index>(blocks_.size()); }
  const std::vector<Index>& operator[](Index j) const { return blocks_[static_cast<std::size_t>(j)]; }
  const std::vector<std::vector<Index>>& blocks() const { return blocks_; }

  std::vector<Index> complement(Index j, Index p) const {
    std::vector<Index> rest;
    const auto& b = (*this)[j];
    for (Index i = 0; i < p; ++i)
      if (std::find(b.begin(), b.end(), i) == b.end()) rest.push_back(i);
    return rest;
  }

 private:
  std::vector<std::vector<Index>> blocks_;
};

struct ChainTrace {
  Matrix states;   // kept draws, natural coordinates
  Matrix working;  // kept draws, working coordinates
  std::vector<double> accept_rate;  // per block, post burn-in
  std::vector<Index> accepted;
  std::vector<Index> proposed;
  std::vector<double> proposal_scale;
  std::uint64_t seed = 0;
  Index burn_in = 0;
  Index thinning = 1;
  std::string sampler;
  std::string kind;
  Index skipped_updates = 0;
  Index block_updates = 0;
  std::vector<std::string> warnings;

  Index size() const { return states.rows(); }
};

template <class T>
concept LogDensity = requires(const T& t, const Vector& x) {
  { t.dim() } -> std::convertible_to<Index>;
  { t.log_density(x) } -> std::convertible_to<double>;
};

namespace detail {

template <class T>
Vector to_natural(const T& target, const Vector& x) {
  if constexpr (requires { target.natural(x); })
    return target.natural(x);
  else
    return x;
}

class ScaleAdapter {
 public:
  ScaleAdapter(double initial, const McmcSettings& s) : scale_(initial), settings_(&s) {}

  double scale() const { return scale_; }

  void record(Index iteration, bool accepted) {
    if (iteration >= settings_->burn_in) return;
    window_acc_ += accepted ? 1 : 0;
    if (++window_n_ == settings_->adapt_interval) {
      const double rate = static_cast<double>(window_acc_) / static_cast<double>(window_n_);
      if (rate < settings_->target_low)
        scale_ *= rate < 0.05 ? 0.5 : 0.8;
      else if (rate > settings_->target_high)
        scale_ *= rate > 0.8 ? 2.0 : 1.25;
      window_acc_ = window_n_ = 0;
    }
  }

 private:
  double scale_;
  const McmcSettings* settings_;
  Index window_acc_ = 0;
  Index window_n_ = 0;
};

inline Matrix proposal_factor(const Matrix& cov) {
  Eigen::LLT<Matrix> llt(symmetrize(cov));
  if (llt.info() != Eigen::Success || !cov.allFinite())
    throw SamplerError("proposal covariance is not positive definite");
  return llt.matrixL();
}

inline Vector standard_normal(Rng& rng, Index p) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Vector z(p);
  for (Index i = 0; i < p; ++i) z(i) = normal(rng);
  return z;
}

inline void finish_rates(ChainTrace& trace) {
  trace.accept_rate.resize(trace.accepted.size());
  for (std::size_t b = 0; b < trace.accepted.size(); ++b)
    trace.accept_rate[b] = trace.proposed[b] ? static_cast<double>(trace.accepted[b]) /
                                                   static_cast<double>(trace.proposed[b])
                                             : 0.0;
}

// Covariance of block j under a Gaussian with the given full covariance,
// conditioned on the remaining coordinates: (P_jj)^{-1}, P the precision.
inline Matrix conditional_block_covariance(const Matrix& cov, const std::vector<Index>& block) {
  const Matrix prec = cov.llt().solve(Matrix::Identity(cov.rows(), cov.cols()));
  const Index pj = static_cast<Index>(block.size());
  Matrix sub(pj, pj);
  for (Index a = 0; a < pj; ++a)
    for (Index b = 0; b < pj; ++b) sub(a, b) = prec(block[a], block[b]);
  return sub.llt().solve(Matrix::Identity(pj, pj));
}

}  // namespace detail

// Random-walk adjusted Metropolis-Hastings; proposal N(x, s^2 proposal_cov),
// accepted when U <= alpha.
template <LogDensity Target>
ChainTrace adjusted_mh(const Target& target, const Vector& init, const Matrix& proposal_cov,
                       const McmcSettings& settings, std::uint64_t seed) {
  settings.validate();
  const Index p = target.dim();
  const Matrix lower = detail::proposal_factor(proposal_cov);
  Rng rng(seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  detail::ScaleAdapter adapter(2.38 / std::sqrt(static_cast<double>(p)), settings);

  Vector x = init;
  double lx = target.log_density(x);
  if (!std::isfinite(lx)) throw SamplerError("initial state has zero posterior density");

  ChainTrace trace;
  trace.seed = seed;
  trace.burn_in = settings.burn_in;
  trace.thinning = settings.thinning;
  trace.sampler = "mh";
  trace.accepted.assign(1, 0);
  trace.proposed.assign(1, 0);
  trace.states.resize(settings.kept(), p);
  trace.working.resize(settings.kept(), p);

  Index rejects = 0, row = 0;
  for (Index t = 0; t < settings.iterations; ++t) {
    const Vector y = x + adapter.scale() * (lower * detail::standard_normal(rng, p));
    const double ly = target.log_density(y);
    const double u = unif(rng);
    const bool accept = std::isfinite(ly) && std::log(u) <= ly - lx;
    if (accept) {
      x = y;
      lx = ly;
      rejects = 0;
    } else if (++rejects >= settings.max_consecutive_rejects) {
      throw SamplerError("no proposal accepted in " + std::to_string(rejects) +
                         " consecutive iterations; reduce the proposal scale");
    }
    adapter.record(t, accept);
    if (t >= settings.burn_in) {
      ++trace.proposed[0];
      trace.accepted[0] += accept ? 1 : 0;
      if ((t - settings.burn_in) % settings.thinning == 0) {
        trace.working.row(row) = x.transpose();
        trace.states.row(row) = detail::to_natural(target, x).transpose();
        ++row;
      }
    }
  }
  trace.proposal_scale = {adapter.scale()};
  detail::finish_rates(trace);
  return trace;
}

// Metropolis-within-Gibbs on a fixed (frozen-adjustment) target. Block j uses
// the conditional covariance of proposal_cov given the other blocks.
template <LogDensity Target>
ChainTrace overall_gibbs(const Target& target, const BlockPartition& partition, const Vector& init,
                         const Matrix& proposal_cov, const McmcSettings& settings, std::uint64_t seed) {
  settings.validate();
  const Index p = target.dim();
  const Index g = partition.size();
  std::vector<Matrix> lowers;
  std::vector<detail::ScaleAdapter> adapters;
  for (Index j = 0; j < g; ++j) {
    lowers.push_back(detail::proposal_factor(detail::conditional_block_covariance(proposal_cov, partition[j])));
    adapters.emplace_back(2.38 / std::sqrt(static_cast<double>(partition[j].size())), settings);
  }
  Rng rng(seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);

  Vector x = init;
  double lx = target.log_density(x);
  if (!std::isfinite(lx)) throw SamplerError("initial state has zero posterior density");

  ChainTrace trace;
  trace.seed = seed;
  trace.burn_in = settings.burn_in;
  trace.thinning = settings.thinning;
  trace.sampler = "overall-gibbs";
  trace.accepted.assign(static_cast<std::size_t>(g), 0);
  trace.proposed.assign(static_cast<std::size_t>(g), 0);
  trace.states.resize(settings.kept(), p);
  trace.working.resize(settings.kept(), p);

  std::vector<Index> rejects(static_cast<std::size_t>(g), 0);
  Index row = 0;
  for (Index t = 0; t < settings.iterations; ++t) {
    for (Index j = 0; j < g; ++j) {
      const auto& block = partition[j];
      const Index pj = static_cast<Index>(block.size());
      const Vector step = adapters[j].scale() * (lowers[j] * detail::standard_normal(rng, pj));
      Vector y = x;
      for (Index i = 0; i < pj; ++i) y(block[i]) += step(i);
      const double ly = target.log_density(y);
      const bool accept = std::isfinite(ly) && std::log(unif(rng)) <= ly - lx;
      auto& rj = rejects[static_cast<std::size_t>(j)];
      if (accept) {
        x = y;
        lx = ly;
        rj = 0;
      } else if (++rj >= settings.max_consecutive_rejects) {
        throw SamplerError("block " + std::to_string(j) + ": no proposal accepted in " + std::to_string(rj) +
                           " consecutive sweeps; reduce the proposal scale");
      }
      adapters[j].record(t, accept);
      if (t >= settings.burn_in) {
        ++trace.proposed[j];
        trace.accepted[j] += accept ? 1 : 0;
      }
    }
    if (t >= settings.burn_in && (t - settings.burn_in) % settings.thinning == 0) {
      trace.working.row(row) = x.transpose();
      trace.states.row(row) = detail::to_natural(target, x).transpose();
      ++row;
    }
  }
  for (auto& a : adapters) trace.proposal_scale.push_back(a.scale());
  detail::finish_rates(trace);
  return trace;
}

// Adaptive adjusted Gibbs sampler. For each block and sweep: maximize the
// conditional composite likelihood over the block, estimate the block H and J
// there, adjust the conditional likelihood, then take one Metropolis step from
// the adjusted conditional times the prior.
template <CompositeModel M, class Prior>
ChainTrace adaptive_gibbs(const M& model, const Prior& prior, const BlockPartition& partition,
                          Adjustment kind, const Vector& init, const McmcSettings& settings,
                          std::uint64_t seed) {
  settings.validate();
  if (kind == Adjustment::full) throw Error("adaptive Gibbs adjusts a composite likelihood; use none, magnitude or curvature");
  const Index p = model.dim();
  const Index g = partition.size();
  for (Index j = 0; j < g; ++j)
    if (model.replicates() <= static_cast<Index>(partition[j].size()))
      throw Error("adaptive Gibbs needs more replicates than the largest block size");

  Rng rng(seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::vector<detail::ScaleAdapter> adapters;
  for (Index j = 0; j < g; ++j) adapters.emplace_back(2.38 / std::sqrt(static_cast<double>(partition[j].size())), settings);

  struct BlockState {
    bool valid = false;
    SandwichFit fit;
    Matrix lower;  // factor of the inverse block information
    Index age = 0;
  };
  std::vector<BlockState> cache(static_cast<std::size_t>(g));

  OptimizeOptions inner;
  inner.max_iterations = settings.inner_max_iterations;

  Vector x = init;
  if (!std::isfinite(model.loglik(x)) || !std::isfinite(prior.log_density(x)))
    throw SamplerError("initial state has zero posterior density");

  ChainTrace trace;
  trace.seed = seed;
  trace.burn_in = settings.burn_in;
  trace.thinning = settings.thinning;
  trace.sampler = "adaptive-gibbs";
  trace.kind = std::string(to_string(kind));
  trace.accepted.assign(static_cast<std::size_t>(g), 0);
  trace.proposed.assign(static_cast<std::size_t>(g), 0);
  trace.states.resize(settings.kept(), p);
  trace.working.resize(settings.kept(), p);

  std::vector<Index> rejects(static_cast<std::size_t>(g), 0);
  Index row = 0;
  for (Index t = 0; t < settings.iterations; ++t) {
    for (Index j = 0; j < g; ++j) {
      auto& st = cache[static_cast<std::size_t>(j)];
      const BlockView<M> view(model, partition[j], x);
      const Vector xj = view.extract(x);
      ++trace.block_updates;

      if (!st.valid || st.age >= settings.refresh_every) {
        try {
          const OptimizeResult opt = maximize_bfgs([&](const Vector& z) { return view.loglik(z); },
                                                   [&](const Vector& z) { return view.score(z); }, xj, inner);
          if (!opt.converged) throw OptimizationError("restricted maximization did not converge", opt.x, opt.gradient_norm);
          st.fit = sandwich_at(view, opt.x);
          Matrix info = static_cast<double>(st.fit.n) * st.fit.H;
          if (kind == Adjustment::magnitude) info *= st.fit.k;
          if (kind == Adjustment::curvature) info = static_cast<double>(st.fit.n) * st.fit.godambe();
          st.lower = detail::proposal_factor(info.llt().solve(Matrix::Identity(info.rows(), info.cols())));
          st.valid = true;
          st.age = 0;
        } catch (const Error&) {
          ++trace.skipped_updates;
          st.valid = false;
          continue;
        }
      }
      ++st.age;

      auto log_target = [&](const Vector& z) {
        const double lp = prior.log_density(view.embed(z));
        if (!std::isfinite(lp)) return kNegInf;
        const double ll = adjusted_loglik(view, kind, &st.fit, z);
        return std::isfinite(ll) ? ll + lp : kNegInf;
      };
      const double lx = log_target(xj);
      const Index pj = view.dim();
      const Vector y = xj + adapters[j].scale() * (st.lower * detail::standard_normal(rng, pj));
      const double ly = log_target(y);
      const bool accept = std::isfinite(ly) && std::log(unif(rng)) <= ly - lx;
      auto& rj = rejects[static_cast<std::size_t>(j)];
      if (accept) {
        x = view.embed(y);
        rj = 0;
      } else if (++rj >= settings.max_consecutive_rejects) {
        throw SamplerError("block " + std::to_string(j) + ": no proposal accepted in " + std::to_string(rj) +
                           " consecutive sweeps; reduce the proposal scale");
      }
      adapters[j].record(t, accept);
      if (t >= settings.burn_in) {
        ++trace.proposed[j];
        trace.accepted[j] += accept ? 1 : 0;
      }
    }
    if (t >= settings.burn_in && (t - settings.burn_in) % settings.thinning == 0) {
      trace.working.row(row) = x.transpose();
      trace.states.row(row) = detail::to_natural(model, x).transpose();
      ++row;
    }
  }
  if (trace.skipped_updates * 100 > trace.block_updates)
    trace.warnings.push_back("adaptive Gibbs skipped " + std::to_string(trace.skipped_updates) + " of " +
                             std::to_string(trace.block_updates) + " block updates (> 1%)");
  for (auto& a : adapters) trace.proposal_scale.push_back(a.scale());
  detail::finish_rates(trace);
  return trace;
}

// Exact conjugate Gibbs for the full GP likelihood: mu and tau from their
// normal / inverse-gamma full conditionals, omega by a random-walk Metropolis
// step on log omega. Working coordinates in the trace are (mu, log tau, log omega).
// With update_omega = false omega stays at its initial value.
inline ChainTrace full_conjugate_gibbs(const ReplicateData& data, const PriorSpec& prior, const GpParams& init,
                                       const McmcSettings& settings, std::uint64_t seed, bool update_omega = true) {
  settings.validate();
  prior.validate();
  const FullLikelihood lik(data);
  Rng rng(seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);
  detail::ScaleAdapter adapter(0.5, settings);

  double mu = init.mu, tau = init.tau, omega = init.omega;
  auto factor = lik.factor(omega);
  if (!factor) throw SamplerError("initial omega gives a singular covariance");

  auto log_omega_target = [&](double m, double t, double w) {
    const auto e = lik.evaluate(m, t, w, false);
    if (!e.ok) return kNegInf;
    return e.value + prior.omega.log_density(w) + std::log(w);
  };

  ChainTrace trace;
  trace.seed = seed;
  trace.burn_in = settings.burn_in;
  trace.thinning = settings.thinning;
  trace.sampler = "full-gibbs";
  trace.kind = "full";
  trace.accepted.assign(3, 0);
  trace.proposed.assign(3, 0);
  trace.states.resize(settings.kept(), 3);
  trace.working.resize(settings.kept(), 3);

  Index rejects = 0, row = 0;
  for (Index t = 0; t < settings.iterations; ++t) {
    {
      const auto cond = lik.conditionals(GpParams(mu, tau, omega), prior, *factor);
      mu = cond.first.mean + std::sqrt(cond.first.variance) * normal(rng);
    }
    {
      const auto cond = lik.conditionals(GpParams(mu, tau, omega), prior, *factor);
      std::gamma_distribution<double> gamma(cond.second.shape, 1.0);
      tau = cond.second.scale / gamma(rng);
    }
    bool accept = false;
    if (update_omega) {
      const double proposal = omega * std::exp(adapter.scale() * normal(rng));
      const double lcur = log_omega_target(mu, tau, omega);
      const double lprop = log_omega_target(mu, tau, proposal);
      accept = std::isfinite(lprop) && std::log(unif(rng)) <= lprop - lcur;
      if (accept) {
        omega = proposal;
        factor = lik.factor(omega);
      }
    }
    if (accept || !update_omega) {
      rejects = 0;
    } else if (++rejects >= settings.max_consecutive_rejects) {
      throw SamplerError("omega: no proposal accepted in " + std::to_string(rejects) + " consecutive sweeps");
    }
    adapter.record(t, accept);
    if (t >= settings.burn_in) {
      trace.proposed[0]++; trace.accepted[0]++;
      trace.proposed[1]++; trace.accepted[1]++;
      ++trace.proposed[2];
      trace.accepted[2] += accept ? 1 : 0;
      if ((t - settings.burn_in) % settings.thinning == 0) {
        trace.states.row(row) << mu, tau, omega;
        trace.working.row(row) << mu, std::log(tau), std::log(omega);
        ++row;
      }
    }
  }
  trace.proposal_scale = {0.0, 0.0, adapter.scale()};
  detail::finish_rates(trace);
  return trace;
}

struct ConditionalGaussian {
  Vector overall_mean;
  Matrix overall_cov;
  Vector adaptive_mean;
  Matrix adaptive_cov;
};

// Gaussian approximations to the block conditional theta_j | theta_{-j}:
// from the frozen adjusted information (overall Gibbs) and from the sandwich
// information H J^{-1} H (adaptive Gibbs). rest_values are in ascending index order.
inline ConditionalGaussian conditional_gaussian_predictors(const SandwichFit& fit, Adjustment kind,
                                                           const BlockPartition& partition, Index j,
                                                           const Vector& rest_values) {
  const Index p = fit.p();
  const auto& block = partition[j];
  const auto rest = partition.complement(j, p);
  if (static_cast<Index>(rest.size()) != rest_values.size()) throw Error("conditioning vector has the wrong length");
  const double n = static_cast<double>(fit.n);
  Matrix adj = n * fit.H;
  if (kind == Adjustment::magnitude) adj *= fit.k;
  if (kind == Adjustment::curvature) adj = n * fit.godambe();
  const Matrix sandwich = n * fit.godambe();

  auto conditional = [&](const Matrix& info, Vector& mean, Matrix& cov) {
    const Index pj = static_cast<Index>(block.size());
    const Index pr = static_cast<Index>(rest.size());
    Matrix jj(pj, pj), jr(pj, pr);
    Vector center_j(pj), delta(pr);
    for (Index a = 0; a < pj; ++a) {
      center_j(a) = fit.theta_hat(block[a]);
      for (Index b = 0; b < pj; ++b) jj(a, b) = info(block[a], block[b]);
      for (Index b = 0; b < pr; ++b) jr(a, b) = info(block[a], rest[b]);
    }
    for (Index b = 0; b < pr; ++b) delta(b) = rest_values(b) - fit.theta_hat(rest[b]);
    Eigen::LLT<Matrix> llt(jj);
    if (llt.info() != Eigen::Success) throw Error("singular information sub-block");
    mean = center_j - llt.solve(jr * delta);
    cov = llt.solve(Matrix::Identity(pj, pj));
  };
  ConditionalGaussian out;
  conditional(adj, out.overall_mean, out.overall_cov);
  conditional(sandwich, out.adaptive_mean, out.adaptive_cov);
  return out;
}

}  // namespace cpost
