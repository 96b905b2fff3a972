#pragma once

// Likelihood models in working coordinates. A CompositeModel exposes the
// total log-likelihood, its gradient, and per-replicate scores; everything in
// sandwich/adjust/samplers is written against this contract.

#include "cpost/core.hpp"
#include "cpost/gp_model.hpp"
#include "cpost/prior.hpp"

#include <concepts>
#include <vector>

namespace cpost {

template <class M>
concept CompositeModel = requires(const M& m, const Vector& x) {
  { m.dim() } -> std::convertible_to<Index>;
  { m.replicates() } -> std::convertible_to<Index>;
  { m.loglik(x) } -> std::convertible_to<double>;
  { m.score(x) } -> std::convertible_to<Vector>;
  { m.replicate_scores(x) } -> std::convertible_to<Matrix>;
};

// Map between working coordinates and (mu, tau, omega).
class GpCoordinates {
 public:
  explicit GpCoordinates(Coordinates c = Coordinates::unconstrained) : coords_(c) {}

  Coordinates kind() const { return coords_; }

  bool in_domain(const Vector& x) const {
    if (!x.allFinite()) return false;
    if (coords_ == Coordinates::natural) return x(1) > 0.0 && x(2) > 0.0;
    return std::isfinite(std::exp(x(1))) && std::isfinite(std::exp(x(2)));
  }

  // Natural (mu, tau, omega); meaningful only when in_domain(x).
  Eigen::Vector3d natural(const Vector& x) const {
    if (coords_ == Coordinates::natural) return {x(0), x(1), x(2)};
    return {x(0), std::exp(x(1)), std::exp(x(2))};
  }

  Vector working(const GpParams& p) const {
    if (coords_ == Coordinates::natural) return p.to_vector();
    return Eigen::Vector3d(p.mu, std::log(p.tau), std::log(p.omega));
  }

  // Chain rule for a natural-coordinate gradient.
  Vector gradient(const Vector& x, const Eigen::Vector3d& natural_grad) const {
    if (coords_ == Coordinates::natural) return natural_grad;
    const Eigen::Vector3d nat = natural(x);
    return Eigen::Vector3d(natural_grad(0), nat(1) * natural_grad(1), nat(2) * natural_grad(2));
  }

  Matrix gradient_rows(const Vector& x, Matrix rows) const {
    if (coords_ == Coordinates::unconstrained) {
      const Eigen::Vector3d nat = natural(x);
      rows.col(1) *= nat(1);
      rows.col(2) *= nat(2);
    }
    return rows;
  }

  // log |d natural / d working|
  double log_jacobian(const Vector& x) const {
    return coords_ == Coordinates::natural ? 0.0 : x(1) + x(2);
  }

 private:
  Coordinates coords_;
};

template <class Likelihood>
class GpModel {
 public:
  template <class... Args>
  explicit GpModel(Coordinates coords, Args&&... args) : map_(coords), lik_(std::forward<Args>(args)...) {}

  Index dim() const { return 3; }
  Index replicates() const { return lik_.replicates(); }
  const GpCoordinates& coordinates() const { return map_; }
  const Likelihood& likelihood() const { return lik_; }

  bool in_domain(const Vector& x) const { return x.size() == 3 && map_.in_domain(x); }
  Eigen::Vector3d natural(const Vector& x) const { return map_.natural(x); }
  Vector working(const GpParams& p) const { return map_.working(p); }

  double loglik(const Vector& x) const {
    if (!in_domain(x)) return kNegInf;
    const auto nat = natural(x);
    return lik_.evaluate(nat(0), nat(1), nat(2), false).value;
  }

  Vector score(const Vector& x) const {
    if (!in_domain(x)) return Vector::Constant(3, std::numeric_limits<double>::quiet_NaN());
    const auto nat = natural(x);
    const auto e = lik_.evaluate(nat(0), nat(1), nat(2), true);
    if (!e.ok) return Vector::Constant(3, std::numeric_limits<double>::quiet_NaN());
    return map_.gradient(x, e.grad);
  }

  Matrix replicate_scores(const Vector& x) const {
    if (!in_domain(x)) throw SandwichError("replicate scores requested outside the parameter domain");
    const auto nat = natural(x);
    auto rows = lik_.replicate_scores(nat(0), nat(1), nat(2));
    if (!rows) throw SandwichError("replicate scores undefined at this point (degenerate covariance)");
    return map_.gradient_rows(x, std::move(*rows));
  }

 private:
  GpCoordinates map_;
  Likelihood lik_;
};

class GpPairwiseModel : public GpModel<PairwiseLikelihood> {
 public:
  explicit GpPairwiseModel(const ReplicateData& data, Coordinates coords = Coordinates::unconstrained)
      : GpModel<PairwiseLikelihood>(coords, data, PairIndex(data.sites())), sites_(data.sites()) {}
  Index sites() const { return sites_; }

 private:
  Index sites_;
};

class GpFullModel : public GpModel<FullLikelihood> {
 public:
  explicit GpFullModel(const ReplicateData& data, Coordinates coords = Coordinates::unconstrained)
      : GpModel<FullLikelihood>(coords, data) {}
};

// Prior density in working coordinates, Jacobian included.
class GpPrior {
 public:
  GpPrior(PriorSpec spec, Coordinates coords) : spec_(spec), map_(coords) { spec_.validate(); }

  const PriorSpec& spec() const { return spec_; }

  double log_density(const Vector& x) const {
    if (!map_.in_domain(x)) return kNegInf;
    const auto nat = map_.natural(x);
    return spec_.log_density_natural(nat(0), nat(1), nat(2)) + map_.log_jacobian(x);
  }

 private:
  PriorSpec spec_;
  GpCoordinates map_;
};

struct FlatPrior {
  double log_density(const Vector&) const { return 0.0; }
};

// Restriction of a model to a block of coordinates, the rest held fixed.
template <CompositeModel M>
class BlockView {
 public:
  BlockView(const M& model, std::vector<Index> block, Vector base)
      : model_(&model), block_(std::move(block)), base_(std::move(base)) {}

  Index dim() const { return static_cast<Index>(block_.size()); }
  Index replicates() const { return model_->replicates(); }
  const std::vector<Index>& block() const { return block_; }

  Vector embed(const Vector& xj) const {
    Vector x = base_;
    for (std::size_t i = 0; i < block_.size(); ++i) x(block_[i]) = xj(static_cast<Index>(i));
    return x;
  }

  Vector extract(const Vector& x) const {
    Vector xj(dim());
    for (std::size_t i = 0; i < block_.size(); ++i) xj(static_cast<Index>(i)) = x(block_[i]);
    return xj;
  }

  double loglik(const Vector& xj) const { return model_->loglik(embed(xj)); }

  Vector score(const Vector& xj) const { return extract(model_->score(embed(xj))); }

  Matrix replicate_scores(const Vector& xj) const {
    const Matrix all = model_->replicate_scores(embed(xj));
    Matrix out(all.rows(), dim());
    for (std::size_t i = 0; i < block_.size(); ++i) out.col(static_cast<Index>(i)) = all.col(block_[i]);
    return out;
  }

 private:
  const M* model_;
  std::vector<Index> block_;
  Vector base_;
};

}  // namespace cpost
