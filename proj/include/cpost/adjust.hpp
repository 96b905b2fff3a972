#pragma once

// Log-posterior evaluators built from the composite likelihood: unadjusted,
// magnitude-adjusted (k * l_c), curvature-adjusted (l_c at theta_hat + C (theta - theta_hat)),
// and the full-likelihood posterior. Priors are never raised to a power.

#include "cpost/core.hpp"
#include "cpost/models.hpp"
#include "cpost/sandwich.hpp"

#include <optional>
#include <string>
#include <string_view>

namespace cpost {

enum class Adjustment { none, magnitude, curvature, full };

inline std::string_view to_string(Adjustment a) {
  switch (a) {
    case Adjustment::none: return "none";
    case Adjustment::magnitude: return "magnitude";
    case Adjustment::curvature: return "curvature";
    case Adjustment::full: return "full";
  }
  return "?";
}

inline Adjustment parse_adjustment(std::string_view s) {
  if (s == "none" || s == "unadjusted") return Adjustment::none;
  if (s == "magnitude") return Adjustment::magnitude;
  if (s == "curvature") return Adjustment::curvature;
  if (s == "full") return Adjustment::full;
  throw ConfigError("unknown adjustment '" + std::string(s) + "' (expected none, magnitude, curvature or full)");
}

// Adjusted log-likelihood of `model` given a fit (the fit is ignored for
// none/full).
template <CompositeModel M>
double adjusted_loglik(const M& model, Adjustment kind, const SandwichFit* fit, const Vector& x) {
  switch (kind) {
    case Adjustment::none:
    case Adjustment::full:
      return model.loglik(x);
    case Adjustment::magnitude:
      return fit->k * model.loglik(x);
    case Adjustment::curvature: {
      const Vector star = fit->theta_hat + fit->C * (x - fit->theta_hat);
      return model.loglik(star);
    }
  }
  return kNegInf;
}

template <CompositeModel M, class Prior>
class AdjustedPosterior {
 public:
  AdjustedPosterior(const M& model, Prior prior, Adjustment kind, std::optional<SandwichFit> fit = std::nullopt)
      : model_(&model), prior_(std::move(prior)), kind_(kind), fit_(std::move(fit)) {
    if ((kind == Adjustment::magnitude || kind == Adjustment::curvature) && !fit_)
      throw Error(std::string(to_string(kind)) + " adjustment needs a sandwich fit");
  }

  Index dim() const { return model_->dim(); }
  Adjustment kind() const { return kind_; }
  const M& model() const { return *model_; }
  const Prior& prior() const { return prior_; }
  const std::optional<SandwichFit>& fit() const { return fit_; }

  double log_likelihood(const Vector& x) const {
    const double v = adjusted_loglik(*model_, kind_, fit_ ? &*fit_ : nullptr, x);
    return std::isnan(v) ? kNegInf : v;
  }

  double log_density(const Vector& x) const {
    const double lp = prior_.log_density(x);
    if (!std::isfinite(lp)) return kNegInf;
    const double ll = log_likelihood(x);
    if (!std::isfinite(ll)) return kNegInf;
    return ll + lp;
  }

  double operator()(const Vector& x) const { return log_density(x); }

  Vector natural(const Vector& x) const {
    if constexpr (requires { model_->natural(x); })
      return model_->natural(x);
    else
      return x;
  }

  // Order-n precision of the asymptotic adjusted posterior:
  // n H (none/full), n k H (magnitude), n H J^{-1} H (curvature).
  Matrix information() const {
    if (!fit_) throw Error("posterior information needs a sandwich fit");
    const double n = static_cast<double>(fit_->n);
    switch (kind_) {
      case Adjustment::magnitude: return n * fit_->k * fit_->H;
      case Adjustment::curvature: return n * fit_->godambe();
      default: return n * fit_->H;
    }
  }

  // 2 {l_adj(theta_hat) - l_adj(x0)}, likelihood only.
  double lr_statistic(const Vector& x0) const {
    if (!fit_) throw Error("likelihood ratio needs a fit (the maximizer)");
    return 2.0 * (log_likelihood(fit_->theta_hat) - log_likelihood(x0));
  }

 private:
  const M* model_;
  Prior prior_;
  Adjustment kind_;
  std::optional<SandwichFit> fit_;
};

template <CompositeModel M>
double lr_statistic(const M& model, Adjustment kind, const SandwichFit& fit, const Vector& x0) {
  return 2.0 * (adjusted_loglik(model, kind, &fit, fit.theta_hat) - adjusted_loglik(model, kind, &fit, x0));
}

}  // namespace cpost
