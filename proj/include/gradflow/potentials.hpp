#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

namespace gradflow {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using VecRef = Eigen::Ref<Eigen::VectorXd>;
using ConstVecRef = Eigen::Ref<const Eigen::VectorXd>;
using MatRef = Eigen::Ref<Eigen::MatrixXd>;

/// Implementation interface behind a Potential. Implementations must be
/// immutable after construction: a Potential is shared across threads.
class EnergyModel {
 public:
  virtual ~EnergyModel() = default;

  virtual double value(ConstVecRef theta) const = 0;
  virtual void gradient(ConstVecRef theta, VecRef out) const = 0;
  virtual bool has_hessian() const { return false; }
  virtual void hessian(ConstVecRef theta, MatRef out) const;
};

/// Known constants attached to an energy. All optional.
struct PotentialInfo {
  std::string name;
  std::optional<double> v_star;         // infimum of V
  std::optional<double> alpha;          // PL / strong convexity constant
  std::optional<double> lipschitz;      // gradient Lipschitz constant
  std::optional<double> log_partition;  // log of the integral of exp(-V)
};

/// An energy V on R^dim. The unnormalized target density for sampling is
/// exp(-V). Cheap to copy; the model is shared.
class Potential {
 public:
  using ValueFn = std::function<double(const Vector&)>;
  using GradFn = std::function<Vector(const Vector&)>;
  using HessFn = std::function<Matrix(const Vector&)>;

  Potential(int dim, std::shared_ptr<const EnergyModel> model, PotentialInfo info);

  /// Wraps plain callables. `hessian` may be empty.
  static Potential from_functions(int dim, ValueFn value, GradFn gradient, HessFn hessian = {},
                                  PotentialInfo info = {});

  int dim() const noexcept { return dim_; }
  const PotentialInfo& info() const noexcept { return info_; }
  const std::string& name() const noexcept { return info_.name; }
  const std::optional<double>& v_star() const noexcept { return info_.v_star; }
  const std::optional<double>& alpha() const noexcept { return info_.alpha; }
  const std::optional<double>& lipschitz() const noexcept { return info_.lipschitz; }
  const std::optional<double>& log_partition() const noexcept { return info_.log_partition; }

  double value(ConstVecRef theta) const { return model_->value(theta); }
  Vector gradient(ConstVecRef theta) const;
  void gradient(ConstVecRef theta, VecRef out) const { model_->gradient(theta, out); }

  bool has_hessian() const { return model_->has_hessian(); }
  /// Throws Unsupported when no Hessian is available.
  Matrix hessian(ConstVecRef theta) const;

  /// V + c. Metadata that depends on the offset (v_star, log_partition) is
  /// shifted accordingly.
  Potential shifted(double c) const;

  /// Copy with different metadata.
  Potential with_info(PotentialInfo info) const;

 private:
  int dim_;
  std::shared_ptr<const EnergyModel> model_;
  PotentialInfo info_;
};

struct GaussianSpec {
  Vector mean;
  Matrix covariance;

  int dim() const { return static_cast<int>(mean.size()); }
  /// Throws InvalidParameter / DimensionMismatch when the covariance is not
  /// a symmetric positive definite matrix of matching size.
  void validate() const;
};

struct MixtureComponent {
  double weight;
  GaussianSpec gaussian;
};

/// V(θ) = 3/8 θ⁴ − 3/4 θ². Critical points at 0 and ±1.
Potential make_double_well();

/// V(θ) = Σ aᵢ θᵢ².
Potential make_quadratic(std::span<const double> coeffs);
Potential make_quadratic(std::initializer_list<double> coeffs);

/// V(θ) = θ₁²/2 on R². PL with α = 1 but not strongly convex.
Potential make_pl_not_convex();

struct PosteriorResult {
  Potential potential;
  GaussianSpec posterior;
};

/// Negative log posterior for a linear-Gaussian inverse problem
///   y = A θ + noise,  noise ~ N(0, noise_cov),  θ ~ prior.
/// Also returns the closed-form Gaussian posterior.
PosteriorResult make_gaussian_posterior(const GaussianSpec& prior, const Matrix& design,
                                        const Matrix& noise_cov, const Vector& data);

/// V(θ) = −log Σ wᵢ N(θ; mᵢ, Σᵢ). Weights must sum to one.
Potential make_gaussian_mixture(const std::vector<MixtureComponent>& components);

/// V(q, p) = β (U(q) + K(p)) on the product space, so that exp(−V) is the
/// Boltzmann-Gibbs density.
Potential make_boltzmann(const Potential& u, const Potential& k, double beta);

/// Centered finite differences of p.value, one coordinate at a time.
Vector finite_diff_grad(const Potential& p, ConstVecRef theta, double h);

/// min over probes of |∇V|² / (2 (V − V*)). Probes with V == V* are skipped.
/// A lower envelope over the given probes only; not a certificate.
double estimate_pl_constant(const Potential& p, std::span<const Vector> probes);

/// Resolves a catalog identifier, e.g. "double_well", "quadratic:0.05,1",
/// "mixture:0.5,-2,0.25;0.5,2,0.25". Throws InvalidParameter on bad input.
Potential potential_from_id(const std::string& id);

/// One line per catalog entry: identifier grammar and description.
std::vector<std::pair<std::string, std::string>> potential_catalog();

}  // namespace gradflow
