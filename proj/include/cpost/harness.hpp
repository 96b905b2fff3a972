#pragma once

// Subcommand implementations behind the command-line tool. Every command
// writes its artifacts under the output directory plus manifest.json; wall
// time goes to timing.txt so the JSON/CSV artifacts stay byte-identical
// across re-runs with the same config and seed.

#include "cpost/config.hpp"
#include "cpost/diagnostics.hpp"
#include "cpost/experiment.hpp"
#include "cpost/io.hpp"

#include <chrono>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <string>

namespace cpost {

inline constexpr const char* kVersion = "1.0.0";

struct RunOptions {
  std::string data_path;   // fit/sample: dataset to read instead of simulating
  Index replicate = 0;     // simulate/fit/sample: which replicate stream to simulate
  bool save_traces = false;
  int workers = 0;         // 0: CPOST_WORKERS or hardware concurrency
  int workers_or_default() const { return workers > 0 ? workers : default_workers(); }
};

namespace detail {

class Manifest {
 public:
  Manifest(std::string command, const ExperimentConfig& cfg) : dir_(cfg.output) {
    // the output directory is not part of the experiment identity
    ExperimentConfig id = cfg;
    id.output.clear();
    const std::string text = config_text(id);
    std::ostringstream hash;
    hash << std::hex << std::setw(16) << std::setfill('0') << fnv1a(text);
    j_["command"] = std::move(command);
    j_["version"] = kVersion;
    j_["config_hash"] = hash.str();
    j_["seed"] = cfg.seed;
    j_["config"] = text;
    j_["status"] = "running";
    j_["files"] = Json::array();
    start_ = std::chrono::steady_clock::now();
  }

  Json& json() { return j_; }
  const std::filesystem::path& dir() const { return dir_; }

  void file(const std::filesystem::path& rel) { j_["files"].push_back(rel.generic_string()); }

  void write_artifact(const std::filesystem::path& rel, const std::string& text) {
    write_text(dir_ / rel, text);
    file(rel);
  }

  void finish(const std::string& status) {
    j_["status"] = status;
    write_json(dir_ / "manifest.json", j_);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    std::ostringstream t;
    t << "wall_seconds " << std::fixed << std::setprecision(3) << secs << '\n';
    write_text(dir_ / "timing.txt", t.str());
  }

 private:
  std::filesystem::path dir_;
  Json j_;
  std::chrono::steady_clock::time_point start_;
};

inline std::string padded(Index r) {
  std::ostringstream os;
  os << std::setw(4) << std::setfill('0') << r;
  return os.str();
}

inline ReplicateData load_or_simulate(const ExperimentConfig& cfg, const RunOptions& opt) {
  if (!opt.data_path.empty()) return read_dataset(opt.data_path);
  return simulate_replicate(cfg, opt.replicate);
}

template <class Body>
int guarded(Manifest& m, std::ostream& err, Body&& body) {
  try {
    body();
    m.finish("ok");
    return 0;
  } catch (const std::exception& e) {
    m.json()["error"] = e.what();
    err << "error: " << e.what() << '\n';
    try {
      m.finish("failed");
    } catch (const std::exception& e2) {
      err << "error: could not write manifest: " << e2.what() << '\n';
    }
    return 1;
  }
}

inline std::string fit_summary(const SandwichFit& f) {
  std::ostringstream os;
  os << "theta_hat (" << to_string(f.coordinates) << "):";
  for (Index i = 0; i < f.p(); ++i) os << ' ' << format_double(f.theta_hat(i));
  os << "\nlambdas:";
  for (Index i = 0; i < f.p(); ++i) os << ' ' << format_double(f.lambdas(i));
  os << "\nk: " << format_double(f.k) << "\ntr(H^-1 J) = " << format_double(f.trace_HinvJ()) << " vs p = " << f.p()
     << (f.trace_HinvJ() >= static_cast<double>(f.p()) - 1e-6 ? " (>= p: true)" : " (>= p: false)") << '\n';
  for (const auto& w : f.warnings) os << "warning: " << w << '\n';
  return os.str();
}

}  // namespace detail

inline int cmd_simulate(const ExperimentConfig& cfg, const RunOptions& opt, std::ostream& out, std::ostream& err) {
  detail::Manifest m("simulate", cfg);
  return detail::guarded(m, err, [&]() {
    cfg.validate();
    const ReplicateData data = simulate_replicate(cfg, opt.replicate);
    std::ostringstream os;
    write_dataset(os, data);
    m.write_artifact("data.csv", os.str());
    m.json()["replicate"] = opt.replicate;
    out << "wrote " << (m.dir() / "data.csv").string() << " (n=" << data.replicates() << ", K=" << data.sites()
        << ")\n";
  });
}

inline int cmd_fit(const ExperimentConfig& cfg, const RunOptions& opt, std::ostream& out, std::ostream& err) {
  detail::Manifest m("fit", cfg);
  return detail::guarded(m, err, [&]() {
    cfg.validate();
    const ReplicateData data = detail::load_or_simulate(cfg, opt);
    FitOptions fopt;
    fopt.seed = derive_seed(cfg.seed, static_cast<std::uint64_t>(opt.replicate), streams::fit);
    const SandwichFit fit = data.sites() >= 2 && cfg.adjustment != Adjustment::full
                                ? fit_gp<GpPairwiseModel>(data, cfg.coordinates, fopt)
                                : fit_gp<GpFullModel>(data, cfg.coordinates, fopt);
    m.write_artifact("fit.json", to_json(fit).dump(2) + "\n");
    m.json()["warnings"] = fit.warnings;
    out << detail::fit_summary(fit);
  });
}

inline int cmd_sample(const ExperimentConfig& cfg, const RunOptions& opt, std::ostream& out, std::ostream& err) {
  detail::Manifest m("sample", cfg);
  return detail::guarded(m, err, [&]() {
    cfg.validate();
    const ReplicateData data = detail::load_or_simulate(cfg, opt);
    const auto r = static_cast<std::uint64_t>(opt.replicate);
    const PosteriorRun run =
        run_posterior(cfg, data, derive_seed(cfg.seed, r, streams::chain), derive_seed(cfg.seed, r, streams::fit));
    m.write_artifact("fit.json", to_json(run.fit).dump(2) + "\n");
    std::ostringstream csv;
    write_trace_csv(csv, run.trace);
    m.write_artifact("trace.csv", csv.str());
    m.write_artifact("trace.json", trace_sidecar(run.trace, "fit.json").dump(2) + "\n");
    m.json()["skipped_updates"] = run.trace.skipped_updates;
    m.json()["warnings"] = run.trace.warnings;
    const auto mom = moment_summary(run.trace.states);
    out << "draws: " << run.trace.size() << "\naccept_rate:";
    for (double a : run.trace.accept_rate) out << ' ' << format_double(a);
    out << '\n';
    for (Index i = 0; i < 3; ++i) {
      const auto [lo, hi] = credible_interval(run.trace.states, i, 0.95);
      out << parameter_names()[static_cast<std::size_t>(i)] << ": mean " << format_double(mom.mean(i)) << ", 95% CI ["
          << format_double(lo) << ", " << format_double(hi) << "]\n";
    }
    for (const auto& w : run.trace.warnings) out << "warning: " << w << '\n';
  });
}

inline int cmd_coverage(const ExperimentConfig& cfg, const RunOptions& opt, std::ostream& out, std::ostream& err) {
  detail::Manifest m("coverage", cfg);
  return detail::guarded(m, err, [&]() {
    cfg.validate();
    const CoverageResult res = coverage_experiment(cfg, opt.workers_or_default(), opt.save_traces);
    std::ostringstream cov;
    res.report.write_csv(cov);
    m.write_artifact("coverage.csv", cov.str());

    std::ostringstream moments;
    moments << "replicate,param,mean,variance,skewness,kurtosis\n";
    Json failures = Json::array();
    Json warnings = Json::array();
    for (const auto& o : res.outcomes) {
      if (!o.ok) {
        failures.push_back({{"replicate", o.replicate}, {"error", o.error}});
        continue;
      }
      const auto rel = std::filesystem::path("fits") / ("fit_" + detail::padded(o.replicate) + ".json");
      m.write_artifact(rel, to_json(o.fit).dump(2) + "\n");
      for (Index i = 0; i < 3; ++i)
        moments << o.replicate << ',' << parameter_names()[static_cast<std::size_t>(i)] << ','
                << format_double(o.moments.mean(i)) << ',' << format_double(o.moments.variance(i)) << ','
                << format_double(o.moments.skewness(i)) << ',' << format_double(o.moments.kurtosis(i)) << '\n';
      for (const auto& w : o.warnings) warnings.push_back({{"replicate", o.replicate}, {"warning", w}});
      if (o.trace) {
        const std::string stem = "trace_" + detail::padded(o.replicate);
        std::ostringstream csv;
        write_trace_csv(csv, *o.trace);
        m.write_artifact(std::filesystem::path("traces") / (stem + ".csv"), csv.str());
        m.write_artifact(std::filesystem::path("traces") / (stem + ".json"),
                         trace_sidecar(*o.trace, "fits/fit_" + detail::padded(o.replicate) + ".json").dump(2) + "\n");
      }
    }
    m.write_artifact("moments.csv", moments.str());
    Json summary;
    summary["replicates"] = res.report.replicates;
    summary["excluded"] = res.report.excluded;
    summary["mean_posterior_corr_tau_omega"] = res.mean_corr_tau_omega;
    Json at95;
    for (std::size_t i = 0; i < res.report.params.size(); ++i) {
      if (std::find(cfg.alphas.begin(), cfg.alphas.end(), 0.95) == cfg.alphas.end()) break;
      at95[res.report.params[i]] = {{"coverage", res.report.coverage(res.report.params[i], 0.95)},
                                    {"se", res.report.standard_error(res.report.params[i], 0.95)}};
    }
    summary["coverage_95"] = at95;
    m.write_artifact("summary.json", summary.dump(2) + "\n");

    m.json()["replicates_requested"] = cfg.replicates;
    m.json()["replicates_completed"] = res.report.replicates;
    m.json()["excluded"] = res.report.excluded;
    m.json()["failures"] = failures;
    m.json()["skipped_updates"] = res.skipped_updates;
    m.json()["block_updates"] = res.block_updates;
    m.json()["warnings"] = warnings;

    out << "scenario " << cfg.scenario.name << ", sampler " << cfg.sampler << ", adjustment "
        << to_string(cfg.adjustment) << ": " << res.report.replicates << " replicates (" << res.report.excluded
        << " excluded)\n";
    for (const auto& [name, v] : at95.items())
      out << "  95% coverage " << name << ": " << std::fixed << std::setprecision(1)
          << 100.0 * v["coverage"].get<double>() << "% (se " << 100.0 * v["se"].get<double>() << ")\n"
          << std::defaultfloat;
    out << "  mean posterior corr(tau, omega): " << format_double(res.mean_corr_tau_omega) << '\n';
    if (res.block_updates)
      out << "  skipped block updates: " << res.skipped_updates << " of " << res.block_updates << '\n';
  });
}

inline int cmd_lr_compare(const ExperimentConfig& cfg, const RunOptions& opt, std::ostream& out, std::ostream& err) {
  detail::Manifest m("lr-compare", cfg);
  return detail::guarded(m, err, [&]() {
    cfg.validate();
    const LrScatterResult res = lr_scatter(cfg, opt.workers_or_default());
    std::ostringstream csv;
    write_lr_csv(csv, res);
    m.write_artifact("lr.csv", csv.str());
    Json failures = Json::array();
    for (const auto& p : res.points)
      if (!p.ok) failures.push_back({{"replicate", p.replicate}, {"error", p.error}});
    Json summary{{"n", cfg.scenario.n}, {"replicates", cfg.replicates - res.excluded}, {"excluded", res.excluded},
                 {"correlation", res.correlation}};
    m.write_artifact("lr_summary.json", summary.dump(2) + "\n");
    m.json()["excluded"] = res.excluded;
    m.json()["failures"] = failures;
    out << "n=" << cfg.scenario.n << ": correlation of (Lambda, Lambda_curv) over " << cfg.replicates - res.excluded
        << " datasets = " << format_double(res.correlation) << '\n';
  });
}

struct AsymptoticCheck {
  SandwichFit fit;
  struct Row {
    Adjustment kind;
    Matrix chain_cov;
    Matrix predicted;
    double rel_error;
    std::vector<double> accept_rate;
  };
  std::vector<Row> rows;
};

// Chain covariance of the unadjusted / magnitude / curvature MH chains against
// (nH)^{-1}, (n k H)^{-1} and (n H J^{-1} H)^{-1} on one dataset.
inline AsymptoticCheck check_asymptotics(const ExperimentConfig& cfg, const ReplicateData& data) {
  AsymptoticCheck res;
  FitOptions fopt;
  fopt.seed = derive_seed(cfg.seed, 0, streams::fit);
  res.fit = fit_gp<GpPairwiseModel>(data, cfg.coordinates, fopt);
  const GpPairwiseModel model(data, cfg.coordinates);
  const GpPrior prior(cfg.prior, cfg.coordinates);
  std::uint64_t stream = 10;
  for (Adjustment kind : {Adjustment::none, Adjustment::magnitude, Adjustment::curvature}) {
    const AdjustedPosterior post(model, prior, kind, res.fit);
    const Matrix predicted = inverse_spd(post.information(), "adjusted information");
    const ChainTrace t = adjusted_mh(post, res.fit.theta_hat, predicted, cfg.mcmc, derive_seed(cfg.seed, 0, stream++));
    const Matrix cov = sample_covariance(t.working);
    res.rows.push_back({kind, cov, predicted, relative_frobenius(cov, predicted), t.accept_rate});
  }
  return res;
}

inline int cmd_check_asymptotics(const ExperimentConfig& cfg, const RunOptions& opt, std::ostream& out,
                                 std::ostream& err) {
  detail::Manifest m("check-asymptotics", cfg);
  return detail::guarded(m, err, [&]() {
    cfg.validate();
    const ReplicateData data = detail::load_or_simulate(cfg, opt);
    const AsymptoticCheck res = check_asymptotics(cfg, data);
    Json j;
    j["n"] = data.replicates();
    j["sites"] = data.sites();
    j["trace_HinvJ"] = res.fit.trace_HinvJ();
    j["p"] = res.fit.p();
    j["trace_bound_holds"] = res.fit.trace_HinvJ() >= static_cast<double>(res.fit.p()) - 1e-6;
    j["fit"] = to_json(res.fit);
    Json rows = Json::array();
    out << detail::fit_summary(res.fit);
    for (const auto& r : res.rows) {
      rows.push_back({{"adjustment", std::string(to_string(r.kind))},
                      {"chain_covariance", to_json(r.chain_cov)},
                      {"predicted_covariance", to_json(r.predicted)},
                      {"relative_frobenius_error", r.rel_error},
                      {"accept_rate", r.accept_rate}});
      out << to_string(r.kind) << ": chain vs predicted covariance, relative Frobenius error "
          << format_double(r.rel_error) << '\n';
    }
    j["chains"] = rows;
    m.write_artifact("asymptotics.json", j.dump(2) + "\n");
  });
}

}  // namespace cpost
