#include "gradflow/fpe.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "gradflow/csv.hpp"
#include "gradflow/errors.hpp"

namespace gradflow {

namespace {

constexpr double kDensityFloor = 1e-300;

// B(x) = x / (eˣ − 1), B(0) = 1.
double bernoulli(double x) {
  if (std::abs(x) < 1e-10) return 1.0 - 0.5 * x;
  return x / std::expm1(x);
}

std::shared_ptr<const FpeOperator> build_operator(const Potential& p, const Grid1D& grid) {
  if (p.dim() != 1) throw DimensionMismatch("the Fokker-Planck oracle is one-dimensional");
  grid.validate();
  auto op = std::make_shared<FpeOperator>();
  op->grid = grid;
  const int n = grid.n;
  op->v.resize(n);
  Vector x(1);
  double vmin = std::numeric_limits<double>::infinity();
  for (int k = 0; k < n; ++k) {
    x[0] = grid.center(k);
    op->v[k] = p.value(x);
    if (!std::isfinite(op->v[k])) throw DomainError("potential is not finite on the grid (target density vanishes)");
    vmin = std::min(vmin, op->v[k]);
  }
  op->b_plus.resize(n - 1);
  op->b_minus.resize(n - 1);
  double max_jump = 0.0;
  for (int k = 0; k + 1 < n; ++k) {
    const double dv = op->v[k + 1] - op->v[k];
    op->b_plus[k] = bernoulli(dv);
    op->b_minus[k] = bernoulli(-dv);
    max_jump = std::max(max_jump, std::abs(dv));
  }
  op->max_dt = grid.dx * grid.dx / (2.0 * (1.0 + max_jump));

  double z = 0.0;
  for (double v : op->v) z += std::exp(vmin - v);
  const double log_z = std::log(z * grid.dx);
  op->log_pi.resize(n);
  for (int k = 0; k < n; ++k) op->log_pi[k] = (vmin - op->v[k]) - log_z;
  return op;
}

// Explicit update with mobility m: ρ_k += m dt/dx² (F_{k+½} − F_{k−½})·dx.
void transport(const FpeOperator& op, std::vector<double>& rho, double dt_eff) {
  const int n = op.grid.n;
  const double c = dt_eff / (op.grid.dx * op.grid.dx);
  thread_local std::vector<double> flux;
  flux.assign(n + 1, 0.0);  // flux[k] lives on face k−½; boundary faces carry zero
  for (int k = 0; k + 1 < n; ++k) flux[k + 1] = op.b_minus[k] * rho[k + 1] - op.b_plus[k] * rho[k];
  for (int k = 0; k < n; ++k) rho[k] += c * (flux[k + 1] - flux[k]);
}

void check_dt(double dt, double max_dt) {
  if (!(dt > 0)) throw InvalidParameter("time step must be positive");
  if (dt > max_dt * (1.0 + 1e-12)) throw StabilityError(dt, max_dt);
}

void reaction(const FpeOperator& op, std::vector<double>& rho, double h) {
  const int n = op.grid.n;
  double num = 0.0;
  double den = 0.0;
  for (int k = 0; k < n; ++k) {
    if (rho[k] < kDensityFloor) continue;
    num += rho[k] * (op.log_pi[k] - std::log(rho[k]));
    den += rho[k];
  }
  if (!(den > 0)) throw DomainError("density vanishes on the whole grid");
  const double avg = num / den;
  for (int k = 0; k < n; ++k) {
    if (rho[k] < kDensityFloor) continue;
    const double g = op.log_pi[k] - std::log(rho[k]) - avg;
    rho[k] = std::max(0.0, rho[k] * (1.0 + h * g));
  }
  double mass = 0.0;
  for (double r : rho) mass += r;
  mass *= op.grid.dx;
  for (double& r : rho) r /= mass;
}

double total_mass(const std::vector<double>& rho, double dx) {
  double s = 0.0;
  for (double r : rho) s += r;
  return s * dx;
}

}  // namespace

FpeState::FpeState(Potential p, GridDensity rho0)
    : density(std::move(rho0)), potential(std::move(p)), op(build_operator(potential, density.grid)) {
  if (density.values.size() != static_cast<std::size_t>(density.grid.n)) {
    throw DimensionMismatch("density values do not match the grid");
  }
  for (double r : density.values) {
    if (!(r >= 0) || !std::isfinite(r)) throw InvalidParameter("initial density must be finite and nonnegative");
  }
  mass_log.push_back(density.mass());
}

double fpe_max_dt(const FpeState& s) { return s.op->max_dt; }

namespace {

void step_in_place(FpeState& s, double dt, FpeVariant variant) {
  const FpeOperator& op = *s.op;
  auto& rho = s.density.values;
  switch (variant) {
    case FpeVariant::standard:
      check_dt(dt, op.max_dt);
      transport(op, rho, dt);
      break;
    case FpeVariant::weighted: {
      const double var = s.density.variance();
      if (!(var >= 1e-12)) throw DomainError("density has collapsed (variance below 1e-12)");
      check_dt(dt, op.max_dt / var);
      transport(op, rho, dt * var);
      break;
    }
    case FpeVariant::birth_death:
      check_dt(dt, op.max_dt);
      reaction(op, rho, 0.5 * dt);
      transport(op, rho, dt);
      reaction(op, rho, 0.5 * dt);
      break;
  }
  s.time += dt;
  s.mass_log.push_back(total_mass(rho, op.grid.dx));
}

}  // namespace

FpeState fpe_step(const FpeState& s, double dt) {
  FpeState out = s;
  step_in_place(out, dt, FpeVariant::standard);
  return out;
}

FpeState weighted_fpe_step(const FpeState& s, double dt) {
  FpeState out = s;
  step_in_place(out, dt, FpeVariant::weighted);
  return out;
}

FpeState bdl_fpe_step(const FpeState& s, double dt) {
  FpeState out = s;
  step_in_place(out, dt, FpeVariant::birth_death);
  return out;
}

std::vector<FpeState> fpe_solve(const FpeState& s0, FpeVariant variant, const std::vector<double>& output_times,
                                double dt_max) {
  if (!(dt_max > 0)) throw InvalidParameter("maximal time step must be positive");
  std::vector<FpeState> out;
  out.reserve(output_times.size());
  FpeState cur = s0;
  for (double target : output_times) {
    if (target < cur.time) throw InvalidParameter("output times must be nondecreasing and not before the start");
    if (variant == FpeVariant::weighted) {
      const double cap = dt_max;
      // The admissible step scales with the current variance.
      while (cur.time < target) {
        const double remaining = target - cur.time;
        double dt = std::min(cap, 0.9 * cur.op->max_dt / cur.density.variance());
        const bool last = dt >= remaining;
        if (last) dt = remaining;
        step_in_place(cur, dt, FpeVariant::weighted);
        if (last) cur.time = target;
      }
    } else {
      const double cap = std::min(dt_max, cur.op->max_dt);
      const double span = target - cur.time;
      if (span > 0) {
        const auto steps = static_cast<long long>(std::ceil(span / cap * (1.0 - 1e-12)));
        const double dt = span / static_cast<double>(steps);
        for (long long k = 0; k < steps; ++k) {
          step_in_place(cur, dt, variant);
        }
        cur.time = target;
      }
    }
    out.push_back(cur);
  }
  return out;
}

bool DecayReport::all_l2_ok() const {
  return applicable && std::all_of(rows.begin(), rows.end(), [](const DecayRow& r) { return r.l2_ok; });
}

bool DecayReport::all_kl_ok() const {
  return applicable && std::all_of(rows.begin(), rows.end(), [](const DecayRow& r) { return r.kl_ok; });
}

std::string DecayReport::to_csv() const {
  std::ostringstream out;
  out << "time,l2_pi_inv,kl,envelope_l2,envelope_kl\n";
  for (const auto& r : rows) {
    out << csv::format_real(r.time) << ',' << csv::format_real(r.l2_pi_inv) << ',' << csv::format_real(r.kl) << ','
        << csv::format_real(r.envelope_l2) << ',' << csv::format_real(r.envelope_kl) << '\n';
  }
  return out.str();
}

DecayReport decay_report(const std::vector<FpeState>& trajectory, const GridDensity& pi, std::optional<double> alpha) {
  DecayReport rep;
  if (trajectory.empty()) return rep;
  rep.applicable = alpha.has_value() && *alpha > 0;
  const auto& rho0 = trajectory.front().density;
  const double t0 = trajectory.front().time;
  const double l2_0 = l2_pi_inv_norm(rho0, pi);
  const double kl_0 = kl_divergence(rho0, pi);

  const int n = pi.grid.n;
  auto ratio = [&](int k) { return rho0.values[k] / pi.values[k]; };
  rep.heavy_tails_flag = ratio(0) > ratio(1) && ratio(n - 1) > ratio(n - 2);

  const double nan = std::numeric_limits<double>::quiet_NaN();
  for (const auto& s : trajectory) {
    DecayRow r{};
    r.time = s.time;
    r.l2_pi_inv = l2_pi_inv_norm(s.density, pi);
    r.kl = kl_divergence(s.density, pi);
    if (rep.applicable) {
      const double dt = s.time - t0;
      r.envelope_l2 = std::exp(-*alpha * dt) * l2_0;
      r.envelope_kl = std::exp(-2.0 * *alpha * dt) * kl_0;
      r.l2_ok = r.l2_pi_inv <= r.envelope_l2 * (1.0 + 1e-12) + 1e-12;
      r.kl_ok = r.kl <= r.envelope_kl * (1.0 + 1e-12) + 1e-12;
    } else {
      r.envelope_l2 = nan;
      r.envelope_kl = nan;
    }
    rep.rows.push_back(r);
  }
  return rep;
}

std::string to_string(FpeVariant v) {
  switch (v) {
    case FpeVariant::standard:
      return "fpe";
    case FpeVariant::weighted:
      return "fpe_weighted";
    case FpeVariant::birth_death:
      return "fpe_bdl";
  }
  return "unknown";
}

}  // namespace gradflow
