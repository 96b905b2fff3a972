#pragma once

#include "cpost/core.hpp"

#include <cmath>
#include <numbers>

namespace cpost {

struct NormalSpec {
  double mean = 0.0;
  double variance = 1.0;

  double log_density(double x) const {
    const double z = x - mean;
    return -0.5 * (std::log(2.0 * std::numbers::pi * variance) + z * z / variance);
  }
};

// Inverse gamma with shape and scale: density d^c / Gamma(c) x^{-c-1} exp(-d/x).
struct InvGammaSpec {
  double shape = 1.0;
  double scale = 1.0;

  double log_density(double x) const {
    if (!(x > 0.0)) return kNegInf;
    return shape * std::log(scale) - std::lgamma(shape) - (shape + 1.0) * std::log(x) - scale / x;
  }
};

// mu ~ N(a, b), tau ~ IG(c, d), omega ~ IG(c_omega, d_omega), independent.
struct PriorSpec {
  NormalSpec mu{0.0, 100.0};
  InvGammaSpec tau{0.1, 1.0};
  InvGammaSpec omega{0.1, 1.0};

  void validate() const {
    if (!(mu.variance > 0.0) || !(tau.shape > 0.0) || !(tau.scale > 0.0) ||
        !(omega.shape > 0.0) || !(omega.scale > 0.0))
      throw Error("prior hyperparameters must be positive");
    if (!std::isfinite(mu.mean)) throw Error("prior mean must be finite");
  }

  double log_density_natural(double m, double t, double w) const {
    if (!(t > 0.0) || !(w > 0.0)) return kNegInf;
    return mu.log_density(m) + tau.log_density(t) + omega.log_density(w);
  }

  bool operator==(const PriorSpec& o) const {
    return mu.mean == o.mu.mean && mu.variance == o.mu.variance && tau.shape == o.tau.shape &&
           tau.scale == o.tau.scale && omega.shape == o.omega.shape && omega.scale == o.omega.scale;
  }
};

}  // namespace cpost
