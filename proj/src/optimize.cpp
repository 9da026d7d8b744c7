#include "gradflow/optimize.hpp"

#include <cmath>
#include <limits>
#include <sstream>

#include "gradflow/csv.hpp"
#include "gradflow/errors.hpp"

namespace gradflow {

namespace {

void require_positive(double v, const char* what) {
  if (!(v > 0)) throw InvalidParameter(std::string(what) + " must be positive");
}

void require_dim(const Potential& p, ConstVecRef theta) {
  if (theta.size() != p.dim()) throw DimensionMismatch("state dimension does not match the potential");
}

}  // namespace

Vector explicit_euler_step(const Potential& p, ConstVecRef theta, double tau) {
  require_positive(tau, "step size");
  require_dim(p, theta);
  const Vector g = p.gradient(theta);
  return theta - tau * g;
}

Vector implicit_euler_step(const Potential& p, ConstVecRef theta, double tau, double tol, int max_iter) {
  require_positive(tau, "step size");
  require_positive(tol, "tolerance");
  require_dim(p, theta);
  const Eigen::Index d = theta.size();

  auto objective = [&](const Vector& x) { return p.value(x) + (x - theta).squaredNorm() / (2.0 * tau); };

  Vector x = theta;
  Vector g = p.gradient(x) + (x - theta) / tau;  // gradient of the proximal objective
  double f = objective(x);
  double residual = tau * g.norm();
  Vector best = x;
  double best_residual = residual;
  const Matrix shift = Matrix::Identity(d, d) / tau;
  Vector prev_x;
  Vector prev_g;

  for (int it = 0; it < max_iter && residual > tol; ++it) {
    Vector dir;
    double trial = 1.0;
    if (p.has_hessian()) {
      Eigen::LLT<Matrix> llt(p.hessian(x) + shift);
      if (llt.info() == Eigen::Success) {
        dir = -llt.solve(g);
      } else {
        dir = -tau * g;
      }
    } else {
      // Barzilai-Borwein trial length, falling back to τ.
      dir = -g;
      trial = tau;
      if (prev_x.size() == d) {
        const Vector s = x - prev_x;
        const Vector y = g - prev_g;
        const double sy = s.dot(y);
        if (sy > 0) trial = s.squaredNorm() / sy;
      }
    }
    const double slope = g.dot(dir);
    if (!(slope < 0)) break;

    bool accepted = false;
    Vector x_new;
    double f_new = f;
    for (int k = 0; k < 60; ++k) {
      x_new = x + trial * dir;
      f_new = objective(x_new);
      if (f_new <= f + 1e-4 * trial * slope) {
        accepted = true;
        break;
      }
      // Near the solution the decrease drops below the rounding level of f;
      // accept steps that are flat in f and shrink the residual.
      if (f_new <= f + 1e-13 * std::max(1.0, std::abs(f)) &&
          (p.gradient(x_new) + (x_new - theta) / tau).norm() < g.norm()) {
        accepted = true;
        break;
      }
      trial *= 0.5;
    }
    if (!accepted) break;

    prev_x = x;
    prev_g = g;
    x = std::move(x_new);
    f = f_new;
    g = p.gradient(x) + (x - theta) / tau;
    residual = tau * g.norm();
    if (residual < best_residual) {
      best_residual = residual;
      best = x;
    }
  }
  if (best_residual > tol) {
    throw ConvergenceFailure("implicit Euler inner solve did not reach tolerance (residual " +
                                 std::to_string(best_residual) + ")",
                             best, best_residual);
  }
  return best;
}

PreconditionerField PreconditionerField::identity(int dim) {
  return {Kind::identity, [dim](const Vector&) { return Matrix::Identity(dim, dim); }};
}

PreconditionerField PreconditionerField::constant(Matrix h) {
  return {Kind::constant, [h = std::move(h)](const Vector&) { return h; }};
}

PreconditionerField PreconditionerField::hessian(const Potential& p) {
  if (!p.has_hessian()) throw Unsupported("Hessian preconditioner requested but '" + p.name() + "' has no Hessian");
  return {Kind::hessian, [p](const Vector& x) { return p.hessian(x); }};
}

PreconditionerField PreconditionerField::bfgs(std::shared_ptr<const BfgsState> state) {
  if (!state) throw InvalidParameter("BFGS preconditioner needs a state");
  return {Kind::bfgs, [state = std::move(state)](const Vector&) {
            return Matrix(state->h_inv.llt().solve(Matrix::Identity(state->h_inv.rows(), state->h_inv.cols())));
          }};
}

PreconditionerField PreconditionerField::callable(std::function<Matrix(const Vector&)> fn) {
  if (!fn) throw InvalidParameter("callable preconditioner is empty");
  return {Kind::callable, std::move(fn)};
}

Vector preconditioned_step(const Potential& p, const PreconditionerField& h, ConstVecRef theta, double tau) {
  require_positive(tau, "step size");
  require_dim(p, theta);
  const Matrix hm = h.at(theta);
  if (hm.rows() != p.dim() || hm.cols() != p.dim()) throw DimensionMismatch("preconditioner has the wrong size");
  const double scale = std::max(1.0, hm.cwiseAbs().maxCoeff());
  if ((hm - hm.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale) {
    throw PreconditionerError("preconditioner is not symmetric");
  }
  Eigen::LLT<Matrix> llt(hm);
  if (llt.info() != Eigen::Success) throw PreconditionerError("preconditioner is not positive definite");
  const Vector g = p.gradient(theta);
  return theta - tau * llt.solve(g);
}

BfgsUpdate bfgs_update(const Matrix& h_inv, ConstVecRef s, ConstVecRef y) {
  if (s.size() != h_inv.rows() || y.size() != h_inv.rows()) throw DimensionMismatch("secant pair size mismatch");
  const double sy = s.dot(y);
  if (!(sy > 0)) return {h_inv, true};
  const double rho = 1.0 / sy;
  const Eigen::Index d = s.size();
  const Matrix v = Matrix::Identity(d, d) - rho * y * s.transpose();
  Matrix out = v.transpose() * h_inv * v + rho * s * s.transpose();
  out = 0.5 * (out + out.transpose()).eval();
  return {std::move(out), false};
}

MirrorMap MirrorMap::quadratic() {
  MirrorMap m;
  m.name = "quadratic";
  m.h_eval = [](const Vector& x) { return 0.5 * x.squaredNorm(); };
  m.h_grad = [](const Vector& x) { return x; };
  m.h_grad_inverse = [](const Vector& z) { return z; };
  return m;
}

MirrorMap MirrorMap::negative_entropy() {
  MirrorMap m;
  m.name = "negative_entropy";
  m.h_eval = [](const Vector& x) { return (x.array() * x.array().log() - x.array()).sum(); };
  m.h_grad = [](const Vector& x) { return Vector(x.array().log()); };
  m.h_grad_inverse = [](const Vector& z) { return Vector(z.array().exp()); };
  m.in_domain = [](const Vector& x) { return (x.array() > 0).all() && x.allFinite(); };
  return m;
}

MirrorMap MirrorMap::from_functions(std::string name, std::function<double(const Vector&)> h,
                                    std::function<Vector(const Vector&)> grad,
                                    std::function<Matrix(const Vector&)> hess,
                                    std::function<bool(const Vector&)> in_domain) {
  MirrorMap m;
  m.name = std::move(name);
  m.h_eval = h;
  m.h_grad = grad;
  m.in_domain = in_domain;
  // Solve ∇h(x) = z by minimizing h(x) − ⟨z, x⟩ with damped Newton, keeping
  // iterates inside the domain.
  m.h_grad_inverse = [h, grad, hess, in_domain](const Vector& z) {
    const Eigen::Index d = z.size();
    Vector x = Vector::Zero(d);
    if (in_domain && !in_domain(x)) x = Vector::Ones(d);
    if (in_domain && !in_domain(x)) throw DomainError("cannot find a starting point inside the mirror map domain");
    auto merit = [&](const Vector& v) { return h(v) - z.dot(v); };
    for (int it = 0; it < 200; ++it) {
      const Vector r = grad(x) - z;
      if (r.norm() <= 1e-10) return x;
      Eigen::LLT<Matrix> llt(hess(x));
      Vector dir = llt.info() == Eigen::Success ? Vector(-llt.solve(r)) : Vector(-r);
      const double f0 = merit(x);
      const double slope = r.dot(dir);
      double t = 1.0;
      bool ok = false;
      for (int k = 0; k < 60; ++k) {
        const Vector xn = x + t * dir;
        if ((!in_domain || in_domain(xn)) && merit(xn) <= f0 + 1e-4 * t * slope) {
          x = xn;
          ok = true;
          break;
        }
        t *= 0.5;
      }
      if (!ok) break;
    }
    if ((grad(x) - z).norm() <= 1e-10) return x;
    throw DomainError("mirror variable is outside the range of the mirror map gradient");
  };
  return m;
}

Vector mirror_descent_step(const Potential& p, const MirrorMap& m, ConstVecRef theta, double tau) {
  require_positive(tau, "step size");
  require_dim(p, theta);
  const Vector x = theta;
  if (m.in_domain && !m.in_domain(x)) throw DomainError("state is outside the domain of mirror map '" + m.name + "'");
  const Vector g = p.gradient(theta);
  const Vector z = m.h_grad(x) - tau * g;
  if (!z.allFinite()) throw DomainError("mirror variable is not finite");
  Vector out = m.h_grad_inverse(z);
  if (!out.allFinite() || (m.in_domain && !m.in_domain(out))) {
    throw DomainError("mirror variable is outside the range of the mirror map gradient");
  }
  return out;
}

double bregman_divergence(const MirrorMap& m, ConstVecRef theta, ConstVecRef theta_prime) {
  if (theta.size() != theta_prime.size()) throw DimensionMismatch("Bregman arguments differ in dimension");
  const Vector a = theta;
  const Vector b = theta_prime;
  if (m.in_domain && (!m.in_domain(a) || !m.in_domain(b))) {
    throw DomainError("Bregman argument outside the domain of mirror map '" + m.name + "'");
  }
  return m.h_eval(a) - m.h_eval(b) - m.h_grad(b).dot(a - b);
}

double backtracking_line_search(const Potential& p, ConstVecRef theta, ConstVecRef direction, double tau0,
                                double shrink, double armijo) {
  require_positive(tau0, "initial step");
  if (!(shrink > 0 && shrink < 1)) throw InvalidParameter("shrink factor must lie in (0, 1)");
  if (!(armijo > 0 && armijo < 1)) throw InvalidParameter("Armijo constant must lie in (0, 1)");
  require_dim(p, theta);
  const double v0 = p.value(theta);
  const double slope = p.gradient(theta).dot(direction);
  if (!(slope < 0)) throw InvalidParameter("line search direction is not a descent direction");
  double tau = tau0;
  for (int k = 0; k <= 60; ++k) {
    if (p.value(theta + tau * direction) <= v0 + armijo * tau * slope) return tau;
    tau *= shrink;
  }
  throw SearchFailure("no step satisfies the Armijo condition within 60 reductions");
}

Stepper Stepper::explicit_euler(Potential p, double tau) {
  require_positive(tau, "step size");
  return {"gd", [p = std::move(p), tau](const Vector& x) { return Result{explicit_euler_step(p, x, tau), tau}; }};
}

Stepper Stepper::implicit_euler(Potential p, double tau, double tol) {
  require_positive(tau, "step size");
  return {"gd_implicit",
          [p = std::move(p), tau, tol](const Vector& x) { return Result{implicit_euler_step(p, x, tau, tol), tau}; }};
}

Stepper Stepper::preconditioned(Potential p, PreconditionerField h, double tau) {
  require_positive(tau, "step size");
  return {"preconditioned", [p = std::move(p), h = std::move(h), tau](const Vector& x) {
            return Result{preconditioned_step(p, h, x, tau), tau};
          }};
}

Stepper Stepper::newton(Potential p, double tau) {
  auto h = PreconditionerField::hessian(p);
  Stepper s = preconditioned(std::move(p), std::move(h), tau);
  s.name = "newton";
  return s;
}

Stepper Stepper::bfgs(Potential p, double tau, std::shared_ptr<BfgsState> state) {
  require_positive(tau, "step size");
  if (!state) {
    state = std::make_shared<BfgsState>();
    state->h_inv = Matrix::Identity(p.dim(), p.dim());
  }
  return {"bfgs", [p = std::move(p), tau, state](const Vector& x) {
            const Vector g = p.gradient(x);
            const Vector dir = -state->h_inv * g;
            const double t = backtracking_line_search(p, x, dir, tau);
            Vector next = x + t * dir;
            auto upd = bfgs_update(state->h_inv, next - x, p.gradient(next) - g);
            if (upd.skipped) {
              ++state->skipped;
            } else {
              state->h_inv = std::move(upd.h_inv);
              ++state->updates;
            }
            return Result{std::move(next), t};
          }};
}

Stepper Stepper::mirror(Potential p, MirrorMap m, double tau) {
  require_positive(tau, "step size");
  return {"mirror", [p = std::move(p), m = std::move(m), tau](const Vector& x) {
            return Result{mirror_descent_step(p, m, x, tau), tau};
          }};
}

Stepper Stepper::line_search(Potential p, double tau0, double shrink, double armijo) {
  require_positive(tau0, "initial step");
  return {"gd_line_search", [p = std::move(p), tau0, shrink, armijo](const Vector& x) {
            const Vector dir = -p.gradient(x);
            const double t = backtracking_line_search(p, x, dir, tau0, shrink, armijo);
            return Result{x + t * dir, t};
          }};
}

Trajectory run_flow(const Potential& p, const Stepper& stepper, ConstVecRef theta0, int n_steps) {
  if (n_steps < 0) throw InvalidParameter("number of steps must be nonnegative");
  require_dim(p, theta0);
  Trajectory t;
  auto record = [&](double time, Vector x) {
    t.times.push_back(time);
    t.energies.push_back(p.value(x));
    t.grad_norms.push_back(p.gradient(x).norm());
    t.states.push_back(std::move(x));
  };
  record(0.0, theta0);
  for (int k = 0; k < n_steps; ++k) {
    if (t.grad_norms.back() < t.stop_grad_threshold) {
      t.stopped_early = true;
      break;
    }
    Stepper::Result r;
    try {
      r = stepper.step(t.states.back());
    } catch (const Error& e) {
      throw StepFailure(k, e.what());
    }
    if (!r.state.allFinite()) throw StepFailure(k, "non-finite state");
    record(t.times.back() + r.dt, std::move(r.state));
  }
  return t;
}

ConvergenceReport verify_rates(const Trajectory& t, const Potential& p) {
  if (!p.v_star()) throw Unsupported("rate verification requires a known infimum V*");
  const double vstar = *p.v_star();
  ConvergenceReport rep;
  const std::size_t n = t.size();
  if (n == 0) return rep;

  for (std::size_t k = 0; k + 1 < n; ++k) {
    rep.dissipation.push_back(t.energies[k] - t.energies[k + 1]);
    if (t.energies[k + 1] > t.energies[k] + 1e-12) ++rep.dissipation_violations;
  }

  std::vector<double> gaps(n);
  for (std::size_t k = 0; k < n; ++k) gaps[k] = t.energies[k] - vstar;

  // Linear-rate bound applies for τ = 1/L with known α and L.
  if (p.alpha() && p.lipschitz() && n >= 2) {
    const double inv_l = 1.0 / *p.lipschitz();
    bool fixed_step = true;
    for (std::size_t k = 0; k + 1 < n; ++k) {
      const double dt = t.times[k + 1] - t.times[k];
      if (std::abs(dt - inv_l) > 1e-12 * inv_l) fixed_step = false;
    }
    if (fixed_step) {
      rep.rate_bound_checked = true;
      const double q = 1.0 - *p.alpha() / *p.lipschitz();
      for (std::size_t k = 0; k < n; ++k) {
        const double bound = std::pow(q, static_cast<double>(k)) * gaps[0];
        rep.margins.push_back(bound - gaps[k]);
        if (bound - gaps[k] < 0) rep.rate_bound_satisfied = false;
      }
    }
  }

  // Least-squares fit of log(V − V*) against the iteration index and time,
  // using only gaps resolvable above the rounding level of V*.
  const double floor = std::max(1e-300, 1e-12 * std::abs(vstar));
  double sk = 0, st = 0, sl = 0, skk = 0, skl = 0, stt = 0, stl = 0;
  int m = 0;
  for (std::size_t k = 0; k < n; ++k) {
    if (!(gaps[k] > floor)) continue;
    const double kk = static_cast<double>(k);
    const double l = std::log(gaps[k]);
    sk += kk;
    st += t.times[k];
    sl += l;
    skk += kk * kk;
    skl += kk * l;
    stt += t.times[k] * t.times[k];
    stl += t.times[k] * l;
    ++m;
  }
  if (m >= 2) {
    const double denom_k = m * skk - sk * sk;
    const double denom_t = m * stt - st * st;
    const double slope_k = denom_k != 0 ? (m * skl - sk * sl) / denom_k : 0.0;
    rep.fitted_rate = denom_t != 0 ? (m * stl - st * sl) / denom_t : 0.0;
    rep.fitted_factor = std::exp(slope_k);
  } else {
    // At most one resolvable gap: converged to rounding level within a step.
    rep.fitted_rate = -std::numeric_limits<double>::infinity();
    rep.fitted_factor = 0.0;
  }
  return rep;
}

std::string trajectory_csv(const Trajectory& t) {
  std::ostringstream out;
  const Eigen::Index d = t.states.empty() ? 0 : t.states.front().size();
  out << "step,time";
  for (Eigen::Index i = 0; i < d; ++i) out << ",theta_" << i;
  out << ",energy,grad_norm\n";
  for (std::size_t k = 0; k < t.size(); ++k) {
    out << k << ',' << csv::format_real(t.times[k]);
    for (Eigen::Index i = 0; i < d; ++i) out << ',' << csv::format_real(t.states[k][i]);
    out << ',' << csv::format_real(t.energies[k]) << ',' << csv::format_real(t.grad_norms[k]) << '\n';
  }
  return out.str();
}

}  // namespace gradflow
