#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "gradflow/potentials.hpp"

namespace gradflow {

/// Iterates of a deterministic flow. times[k] is the accumulated step size.
struct Trajectory {
  std::vector<double> times;
  std::vector<Vector> states;
  std::vector<double> energies;
  std::vector<double> grad_norms;
  /// True when iteration stopped because |∇V| fell below the threshold.
  bool stopped_early = false;
  double stop_grad_threshold = 1e-12;

  std::size_t size() const { return states.size(); }
};

// ---------------------------------------------------------------------------
// Single steps

/// θ − τ∇V(θ)
Vector explicit_euler_step(const Potential& p, ConstVecRef theta, double tau);

/// Proximal step argmin V(x) + |x − θ|²/(2τ), solved to
/// |x − θ + τ∇V(x)| ≤ tol. Newton on the proximal objective when a Hessian is
/// available, backtracked gradient descent otherwise. Throws
/// ConvergenceFailure after `max_iter` inner iterations.
Vector implicit_euler_step(const Potential& p, ConstVecRef theta, double tau, double tol = 1e-10,
                           int max_iter = 200);

/// Inverse-Hessian approximation carried between BFGS iterations.
struct BfgsState {
  Matrix h_inv;
  int updates = 0;
  int skipped = 0;
};

/// A field of SPD matrices H(θ) used to precondition gradient steps.
struct PreconditionerField {
  enum class Kind { identity, constant, hessian, bfgs, callable };

  Kind kind = Kind::identity;
  std::function<Matrix(const Vector&)> at;

  static PreconditionerField identity(int dim);
  static PreconditionerField constant(Matrix h);
  /// H(θ) = ∇²V(θ). Throws Unsupported when p has no Hessian.
  static PreconditionerField hessian(const Potential& p);
  /// H = (state.h_inv)⁻¹, read at evaluation time.
  static PreconditionerField bfgs(std::shared_ptr<const BfgsState> state);
  static PreconditionerField callable(std::function<Matrix(const Vector&)> fn);
};

/// θ − τ H(θ)⁻¹∇V(θ), via Cholesky. Throws PreconditionerError when H(θ) is
/// not SPD.
Vector preconditioned_step(const Potential& p, const PreconditionerField& h, ConstVecRef theta, double tau);

struct BfgsUpdate {
  Matrix h_inv;
  bool skipped = false;
};

/// Standard inverse-Hessian BFGS update with secant pair (s, y). Skips the
/// update (and returns the input) when sᵀy ≤ 0.
BfgsUpdate bfgs_update(const Matrix& h_inv, ConstVecRef s, ConstVecRef y);

/// A strictly convex h with its gradient and the inverse of the gradient map.
struct MirrorMap {
  std::string name;
  std::function<double(const Vector&)> h_eval;
  std::function<Vector(const Vector&)> h_grad;
  std::function<Vector(const Vector&)> h_grad_inverse;
  /// Domain test for h. Empty means all of R^d.
  std::function<bool(const Vector&)> in_domain;

  /// h = ½|θ|²; ∇h is the identity.
  static MirrorMap quadratic();
  /// h = Σ θᵢ log θᵢ − θᵢ on the positive orthant; (∇h)⁻¹ = exp.
  static MirrorMap negative_entropy();
  /// A generic strictly convex h. (∇h)⁻¹ is computed by safeguarded Newton
  /// to 1e-10 using the supplied Hessian of h.
  static MirrorMap from_functions(std::string name, std::function<double(const Vector&)> h,
                                  std::function<Vector(const Vector&)> grad,
                                  std::function<Matrix(const Vector&)> hess,
                                  std::function<bool(const Vector&)> in_domain = {});
};

/// (∇h)⁻¹(∇h(θ) − τ∇V(θ))
Vector mirror_descent_step(const Potential& p, const MirrorMap& m, ConstVecRef theta, double tau);

/// D_h(θ‖θ′) = h(θ) − h(θ′) − ⟨∇h(θ′), θ − θ′⟩
double bregman_divergence(const MirrorMap& m, ConstVecRef theta, ConstVecRef theta_prime);

/// Largest τ = τ0·shrinkᵏ satisfying the Armijo condition. Throws
/// InvalidParameter if `direction` is not a descent direction and
/// SearchFailure after 60 reductions.
double backtracking_line_search(const Potential& p, ConstVecRef theta, ConstVecRef direction, double tau0,
                                double shrink = 0.5, double armijo = 1e-4);

// ---------------------------------------------------------------------------
// Flows

/// A step rule with its parameters bound. `step` returns the new state and the
/// time increment it represents.
struct Stepper {
  struct Result {
    Vector state;
    double dt;
  };

  std::string name;
  std::function<Result(const Vector&)> step;

  static Stepper explicit_euler(Potential p, double tau);
  static Stepper implicit_euler(Potential p, double tau, double tol = 1e-10);
  static Stepper preconditioned(Potential p, PreconditionerField h, double tau);
  static Stepper newton(Potential p, double tau);
  /// Quasi-Newton descent: direction −h_inv·∇V, step by backtracking from
  /// τ, then a BFGS update of h_inv. `state` starts at the identity when null.
  static Stepper bfgs(Potential p, double tau, std::shared_ptr<BfgsState> state = nullptr);
  static Stepper mirror(Potential p, MirrorMap m, double tau);
  /// Gradient descent with the step chosen by backtracking line search.
  static Stepper line_search(Potential p, double tau0, double shrink = 0.5, double armijo = 1e-4);
};

/// Iterates `stepper` n_steps times from θ0 and stops early once |∇V| < 1e-12.
/// Stepper errors are rethrown as StepFailure carrying the step index.
Trajectory run_flow(const Potential& p, const Stepper& stepper, ConstVecRef theta0, int n_steps);

struct ConvergenceReport {
  /// Slope of log(V − V*) against time (negative for decay).
  double fitted_rate = 0.0;
  /// exp(slope per iteration): the average contraction of V − V* per step.
  double fitted_factor = 0.0;
  int dissipation_violations = 0;
  /// Whether the linear-rate bound was applicable (α, L known and τ = 1/L).
  bool rate_bound_checked = false;
  bool rate_bound_satisfied = true;
  /// bound − (V(θₙ) − V*) per iterate; empty when the bound was not checked.
  std::vector<double> margins;
  /// V(θₖ) − V(θₖ₊₁) per step.
  std::vector<double> dissipation;
};

/// Checks energy dissipation, the discrete linear-rate bound
/// V(θₙ) − V* ≤ (1 − α/L)ⁿ (V(θ₀) − V*) when applicable, and fits the rate.
ConvergenceReport verify_rates(const Trajectory& t, const Potential& p);

/// CSV with columns step,time,theta_0..theta_{d-1},energy,grad_norm.
std::string trajectory_csv(const Trajectory& t);

}  // namespace gradflow
