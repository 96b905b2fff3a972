#pragma once

// Replicated simulation experiments: coverage of credible intervals and the
// comparison of full and curvature-adjusted likelihood ratios. Replicates run
// on a worker pool; each has its own seeds derived from (master, replicate,
// stream), so results do not depend on the number of workers.

#include "cpost/adjust.hpp"
#include "cpost/config.hpp"
#include "cpost/diagnostics.hpp"
#include "cpost/gp_model.hpp"
#include "cpost/models.hpp"
#include "cpost/samplers.hpp"
#include "cpost/sandwich.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

namespace cpost {

namespace streams {
inline constexpr std::uint64_t layout = 0;
inline constexpr std::uint64_t data = 1;
inline constexpr std::uint64_t chain = 2;
inline constexpr std::uint64_t fit = 3;
}  // namespace streams

// CPOST_WORKERS, else the hardware concurrency.
inline int default_workers() {
  if (const char* env = std::getenv("CPOST_WORKERS")) {
    const int w = std::atoi(env);
    if (w > 0) return w;
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

// Runs f(i) for i in [0, count) on `workers` threads. The first exception is
// rethrown after all workers stop.
template <class F>
void parallel_for(Index count, int workers, F&& f) {
  workers = std::max(1, std::min<int>(workers, static_cast<int>(std::max<Index>(count, 1))));
  if (workers == 1) {
    for (Index i = 0; i < count; ++i) f(i);
    return;
  }
  std::atomic<Index> next{0};
  std::exception_ptr error;
  std::mutex mutex;
  std::vector<std::thread> pool;
  for (int w = 0; w < workers; ++w)
    pool.emplace_back([&]() {
      for (Index i = next++; i < count; i = next++) {
        try {
          f(i);
        } catch (...) {
          std::lock_guard lock(mutex);
          if (!error) error = std::current_exception();
          next = count;
        }
      }
    });
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

inline ReplicateData simulate_replicate(const ExperimentConfig& cfg, Index replicate) {
  const auto& s = cfg.scenario;
  const auto r = static_cast<std::uint64_t>(replicate);
  const SiteLayout layout = SiteLayout::uniform(s.sites, s.lower, s.upper, derive_seed(cfg.seed, r, streams::layout));
  return simulate_gp(s.truth(), layout, s.n, derive_seed(cfg.seed, r, streams::data));
}

struct PosteriorRun {
  SandwichFit fit;
  ChainTrace trace;
};

inline Matrix inverse_spd(const Matrix& a, const char* what) {
  Eigen::LLT<Matrix> llt(symmetrize(a));
  if (llt.info() != Eigen::Success) throw SandwichError(std::string(what) + " is not positive definite");
  return llt.solve(Matrix::Identity(a.rows(), a.cols()));
}

// Fit and sample one dataset according to the configured sampler and adjustment.
inline PosteriorRun run_posterior(const ExperimentConfig& cfg, const ReplicateData& data, std::uint64_t chain_seed,
                                  std::uint64_t fit_seed) {
  FitOptions fopt;
  fopt.seed = fit_seed;
  const GpPrior prior(cfg.prior, cfg.coordinates);
  PosteriorRun run;
  if (cfg.adjustment == Adjustment::full) {
    run.fit = fit_gp<GpFullModel>(data, cfg.coordinates, fopt);
    if (cfg.sampler == "full-gibbs") {
      const GpCoordinates map(cfg.coordinates);
      run.trace = full_conjugate_gibbs(data, cfg.prior, GpParams::from_vector(map.natural(run.fit.theta_hat)), cfg.mcmc,
                                       chain_seed);
    } else if (cfg.sampler == "mh") {
      const GpFullModel model(data, cfg.coordinates);
      const AdjustedPosterior post(model, prior, Adjustment::full, run.fit);
      run.trace = adjusted_mh(post, run.fit.theta_hat, inverse_spd(post.information(), "posterior information"),
                              cfg.mcmc, chain_seed);
    } else {
      throw ConfigError("sampler '" + cfg.sampler + "' does not support adjustment = full");
    }
    run.trace.kind = "full";
    return run;
  }
  run.fit = fit_gp<GpPairwiseModel>(data, cfg.coordinates, fopt);
  const GpPairwiseModel model(data, cfg.coordinates);
  if (cfg.sampler == "adaptive-gibbs") {
    run.trace = adaptive_gibbs(model, prior, cfg.block_partition(), cfg.adjustment, run.fit.theta_hat, cfg.mcmc,
                               chain_seed);
    return run;
  }
  const AdjustedPosterior post(model, prior, cfg.adjustment, run.fit);
  const Matrix cov = inverse_spd(post.information(), "adjusted information");
  if (cfg.sampler == "mh")
    run.trace = adjusted_mh(post, run.fit.theta_hat, cov, cfg.mcmc, chain_seed);
  else if (cfg.sampler == "overall-gibbs")
    run.trace = overall_gibbs(post, cfg.block_partition(), run.fit.theta_hat, cov, cfg.mcmc, chain_seed);
  else
    throw ConfigError("sampler '" + cfg.sampler + "' needs adjustment = full");
  run.trace.kind = std::string(to_string(cfg.adjustment));
  return run;
}

inline std::vector<std::string> coverage_parameters() { return {"mu", "tau", "omega", "tau/omega"}; }

struct ReplicateOutcome {
  Index replicate = 0;
  bool ok = false;
  std::string error;
  SandwichFit fit;
  std::vector<std::vector<bool>> hits;  // [param][alpha]
  double corr_tau_omega = 0.0;
  Vector posterior_mean;
  Vector posterior_variance;
  MomentSummary moments;
  std::vector<double> accept_rate;
  Index skipped_updates = 0;
  Index block_updates = 0;
  std::vector<std::string> warnings;
  std::optional<ChainTrace> trace;
};

inline ReplicateOutcome run_coverage_replicate(const ExperimentConfig& cfg, Index replicate, bool keep_trace = false) {
  ReplicateOutcome out;
  out.replicate = replicate;
  const auto r = static_cast<std::uint64_t>(replicate);
  try {
    const ReplicateData data = simulate_replicate(cfg, replicate);
    PosteriorRun run = run_posterior(cfg, data, derive_seed(cfg.seed, r, streams::chain),
                                     derive_seed(cfg.seed, r, streams::fit));
    const Matrix& s = run.trace.states;
    const GpParams truth = cfg.scenario.truth();
    const double truth_values[3] = {truth.mu, truth.tau, truth.omega};
    for (Index i = 0; i < 3; ++i) out.hits.push_back(covers(s.col(i), truth_values[i], cfg.alphas));
    const Vector ratio = s.col(1).cwiseQuotient(s.col(2));
    out.hits.push_back(covers(ratio, truth.tau / truth.omega, cfg.alphas));
    out.corr_tau_omega = pearson_correlation(s.col(1), s.col(2));
    out.moments = moment_summary(s);
    out.posterior_mean = out.moments.mean;
    out.posterior_variance = out.moments.variance;
    out.accept_rate = run.trace.accept_rate;
    out.skipped_updates = run.trace.skipped_updates;
    out.block_updates = run.trace.block_updates;
    out.warnings = run.fit.warnings;
    out.warnings.insert(out.warnings.end(), run.trace.warnings.begin(), run.trace.warnings.end());
    out.fit = std::move(run.fit);
    if (keep_trace) out.trace = std::move(run.trace);
    out.ok = true;
  } catch (const Error& e) {
    out.error = e.what();
  }
  return out;
}

struct CoverageResult {
  CoverageReport report;
  std::vector<ReplicateOutcome> outcomes;  // replicate order
  double mean_corr_tau_omega = 0.0;
  Index skipped_updates = 0;
  Index block_updates = 0;
};

inline CoverageResult aggregate_coverage(const ExperimentConfig& cfg, std::vector<ReplicateOutcome> outcomes) {
  CoverageResult res;
  res.report = CoverageReport(coverage_parameters(), cfg.alphas);
  res.report.scenario = cfg.scenario.name;
  res.report.sampler = cfg.sampler;
  res.report.adjustment = std::string(to_string(cfg.adjustment));
  double corr_sum = 0.0;
  for (const auto& o : outcomes) {
    if (!o.ok) {
      ++res.report.excluded;
      continue;
    }
    res.report.add(o.hits);
    corr_sum += o.corr_tau_omega;
    res.skipped_updates += o.skipped_updates;
    res.block_updates += o.block_updates;
  }
  if (res.report.replicates) res.mean_corr_tau_omega = corr_sum / static_cast<double>(res.report.replicates);
  res.outcomes = std::move(outcomes);
  return res;
}

inline CoverageResult coverage_experiment(const ExperimentConfig& cfg, int workers = default_workers(),
                                          bool keep_traces = false) {
  cfg.validate();
  std::vector<ReplicateOutcome> outcomes(static_cast<std::size_t>(cfg.replicates));
  parallel_for(cfg.replicates, workers,
               [&](Index r) { outcomes[static_cast<std::size_t>(r)] = run_coverage_replicate(cfg, r, keep_traces); });
  return aggregate_coverage(cfg, std::move(outcomes));
}

struct LrPoint {
  Index replicate = 0;
  bool ok = false;
  double lambda_full = 0.0;
  double lambda_curv = 0.0;
  std::string error;
};

struct LrScatterResult {
  std::vector<LrPoint> points;
  double correlation = 0.0;
  Index excluded = 0;
};

inline LrPoint lr_point(const ExperimentConfig& cfg, Index replicate) {
  LrPoint pt;
  pt.replicate = replicate;
  try {
    const ReplicateData data = simulate_replicate(cfg, replicate);
    FitOptions fopt;
    fopt.seed = derive_seed(cfg.seed, static_cast<std::uint64_t>(replicate), streams::fit);
    const GpPairwiseModel pairwise(data);
    const GpFullModel full(data);
    const SandwichFit fit = fit_gp<GpPairwiseModel>(data, Coordinates::unconstrained, fopt);
    const Vector x0 = pairwise.working(cfg.scenario.truth());
    const Vector mle = maximize_composite(full, fit.theta_hat, fopt);
    pt.lambda_full = 2.0 * (full.loglik(mle) - full.loglik(x0));
    pt.lambda_curv = lr_statistic(pairwise, Adjustment::curvature, fit, x0);
    pt.ok = std::isfinite(pt.lambda_full) && std::isfinite(pt.lambda_curv);
    if (!pt.ok) pt.error = "non-finite likelihood ratio";
  } catch (const Error& e) {
    pt.error = e.what();
  }
  return pt;
}

inline LrScatterResult lr_scatter(const ExperimentConfig& cfg, int workers = default_workers()) {
  cfg.validate();
  LrScatterResult res;
  res.points.resize(static_cast<std::size_t>(cfg.replicates));
  parallel_for(cfg.replicates, workers, [&](Index r) { res.points[static_cast<std::size_t>(r)] = lr_point(cfg, r); });
  std::vector<double> a, b;
  for (const auto& p : res.points) {
    if (!p.ok) {
      ++res.excluded;
      continue;
    }
    a.push_back(p.lambda_full);
    b.push_back(p.lambda_curv);
  }
  if (a.size() >= 2)
    res.correlation = pearson_correlation(Eigen::Map<Vector>(a.data(), static_cast<Index>(a.size())),
                                          Eigen::Map<Vector>(b.data(), static_cast<Index>(b.size())));
  else
    res.correlation = std::numeric_limits<double>::quiet_NaN();
  return res;
}

inline void write_lr_csv(std::ostream& os, const LrScatterResult& r) {
  os << "replicate,lambda_full,lambda_curv\n";
  for (const auto& p : r.points)
    if (p.ok) os << p.replicate << ',' << format_double(p.lambda_full) << ',' << format_double(p.lambda_curv) << '\n';
}

}  // namespace cpost
