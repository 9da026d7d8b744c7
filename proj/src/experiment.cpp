#include "gradflow/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <limits>
#include <map>
#include <numbers>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "gradflow/csv.hpp"
#include "gradflow/density.hpp"
#include "gradflow/fpe.hpp"
#include "gradflow/optimize.hpp"
#include "gradflow/potentials.hpp"
#include "gradflow/sample.hpp"

namespace gradflow {

namespace {

namespace fs = std::filesystem;

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::string time_tag(double t) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.15g", t);
  return buf;
}

// "{key}" is replaced by tag; otherwise, when several files share the
// pattern, "_<tag>" goes before the extension.
std::string expand(const std::string& pattern, const std::string& key, const std::string& tag, bool several) {
  const std::string ph = "{" + key + "}";
  if (auto pos = pattern.find(ph); pos != std::string::npos) {
    std::string out = pattern;
    while ((pos = out.find(ph)) != std::string::npos) out.replace(pos, ph.size(), tag);
    return out;
  }
  if (!several) return pattern;
  const auto dot = pattern.rfind('.');
  if (dot == std::string::npos || dot == 0) return pattern + "_" + tag;
  return pattern.substr(0, dot) + "_" + tag + pattern.substr(dot);
}

class Run {
 public:
  Run(const ExperimentConfig& c, RunReport& rep) : c_(c), rep_(rep), p_(potential_from_id(c.potential)) {}

  void execute() {
    switch (method_kind(c_.method)) {
      case MethodKind::flow:
        run_flows();
        break;
      case MethodKind::sampler:
        run_particles();
        break;
      case MethodKind::grid:
        run_grid();
        break;
    }
    if (c_.grid && !c_.outputs.target.empty()) {
      write(c_.outputs.target, density_csv(gibbs_density(p_, make_grid(*c_.grid, 1))));
    }
    if (!c_.outputs.metrics.empty()) {
      std::string s = "metric,value\n";
      for (const auto& [k, v] : rep_.metrics) s += k + "," + csv::format_real(v) + "\n";
      write(c_.outputs.metrics, s);
    }
  }

 private:
  const ExperimentConfig& c_;
  RunReport& rep_;
  Potential p_;

  void metric(const std::string& name, double v) { rep_.metrics.emplace_back(name, v); }

  void write(const std::string& name, const std::string& contents) {
    const fs::path path = rep_.output_dir / name;
    csv::write_file(path.string(), contents);
    rep_.artifacts.push_back(path);
  }

  static Grid1D make_grid(const GridSpec& g, int refine) {
    if (g.layout == "nodes") return Grid1D::nodes(g.lo, g.hi, g.n);
    return Grid1D::cells(g.lo, g.hi, g.n * refine);
  }

  GridDensity initial_density(const Grid1D& grid) const {
    if (c_.init.kind == "gibbs") return gibbs_density(p_, grid);
    const double m = c_.init.mean.at(0);
    const double v = c_.init.variance.at(0);
    const auto vals = tabulate(grid, [&](double x) {
      return std::exp(-(x - m) * (x - m) / (2 * v)) / std::sqrt(2 * std::numbers::pi * v);
    });
    return normalize(vals, grid);
  }

  static FpeVariant variant_of(const std::string& m) {
    if (m == "fpe_weighted") return FpeVariant::weighted;
    if (m == "fpe_bdl") return FpeVariant::birth_death;
    return FpeVariant::standard;
  }

  // Share of mass on x > 0; a cell centered at 0 counts half.
  static double positive_mass(const GridDensity& d) {
    double s = 0.0;
    for (int k = 0; k < d.grid.n; ++k) {
      const double x = d.grid.center(k);
      if (x > 0) s += d.values[k];
      if (x == 0) s += 0.5 * d.values[k];
    }
    return s * d.grid.dx;
  }

  // -------------------------------------------------------------------------
  void run_flows() {
    const auto n_steps = c_.step_count();
    std::string rates = "trajectory,step,time,gap,bound,margin\n";
    const bool several = c_.init.points.size() > 1;
    for (std::size_t i = 0; i < c_.init.points.size(); ++i) {
      const auto& pt = c_.init.points[i];
      const Vector theta0 = Eigen::Map<const Vector>(pt.data(), static_cast<Eigen::Index>(pt.size()));
      const Trajectory t = run_flow(p_, make_stepper(), theta0, static_cast<int>(n_steps));
      const std::string id = std::to_string(i);
      if (!c_.outputs.trajectory.empty()) write(expand(c_.outputs.trajectory, "i", id, several), trajectory_csv(t));

      const Vector& last = t.states.back();
      for (Eigen::Index j = 0; j < last.size(); ++j) metric("final_theta_" + id + "_" + std::to_string(j), last[j]);
      metric("final_energy_" + id, t.energies.back());
      metric("final_grad_norm_" + id, t.grad_norms.back());
      metric("steps_taken_" + id, static_cast<double>(t.size() - 1));
      metric("final_time_" + id, t.times.back());
      if (!p_.v_star()) continue;

      const ConvergenceReport r = verify_rates(t, p_);
      metric("dissipation_violations_" + id, r.dissipation_violations);
      metric("fitted_rate_" + id, r.fitted_rate);
      metric("fitted_factor_" + id, r.fitted_factor);
      metric("rate_bound_checked_" + id, r.rate_bound_checked ? 1.0 : 0.0);
      if (r.rate_bound_checked) {
        metric("rate_bound_satisfied_" + id, r.rate_bound_satisfied ? 1.0 : 0.0);
        metric("min_margin_" + id, *std::min_element(r.margins.begin(), r.margins.end()));
      }
      for (std::size_t k = 0; k < t.size(); ++k) {
        const double gap = t.energies[k] - *p_.v_star();
        const double margin = r.rate_bound_checked ? r.margins[k] : kNaN;
        const double bound = r.rate_bound_checked ? margin + gap : kNaN;
        rates += id + "," + std::to_string(k) + "," + csv::format_real(t.times[k]) + "," + csv::format_real(gap) +
                 "," + csv::format_real(bound) + "," + csv::format_real(margin) + "\n";
      }
    }
    if (!c_.outputs.rates.empty()) write(c_.outputs.rates, rates);
  }

  Stepper make_stepper() const {
    const auto& m = c_.method;
    if (m == "gd") return Stepper::explicit_euler(p_, c_.tau);
    if (m == "gd_implicit") return Stepper::implicit_euler(p_, c_.tau);
    if (m == "newton") return Stepper::newton(p_, c_.tau);
    if (m == "bfgs") return Stepper::bfgs(p_, c_.tau);
    const MirrorMap map = c_.mirror_map == "negative_entropy" ? MirrorMap::negative_entropy() : MirrorMap::quadratic();
    return Stepper::mirror(p_, map, c_.tau);
  }

  // -------------------------------------------------------------------------
  void run_particles() {
    const std::int64_t n_steps = c_.step_count();
    const std::uint64_t seed = *c_.seed;
    const int j = c_.particles;
    const int d = p_.dim();

    Ensemble init;
    if (c_.init.kind == "points") {
      const auto& pt = c_.init.points.front();
      const Vector x = Eigen::Map<const Vector>(pt.data(), d);
      init = Ensemble::single(x, seed);
      init.particles = x.replicate(1, j);
    } else {
      GaussianSpec g{Eigen::Map<const Vector>(c_.init.mean.data(), d),
                     Eigen::Map<const Vector>(c_.init.variance.data(), d).asDiagonal()};
      init = Ensemble::gaussian(g, j, seed);
    }

    std::vector<std::int64_t> snap_steps;
    for (double t : c_.snapshot_times) snap_steps.push_back(std::llround(t / c_.tau));
    if (snap_steps.empty()) {
      for (std::int64_t k = 0; k <= n_steps; k += c_.thin) snap_steps.push_back(k);
      if (snap_steps.back() != n_steps) snap_steps.push_back(n_steps);
    }
    const auto& dg = c_.diagnostics;
    auto every = [&](std::int64_t from, std::int64_t stride) {
      std::vector<std::int64_t> s;
      if (stride > 0) {
        for (std::int64_t k = from; k <= n_steps; k += stride) s.push_back(k);
      }
      return s;
    };
    const auto longrun_steps = every(dg.longrun_burn_in, dg.longrun_every);
    const auto iat_steps = every(dg.iat_burn_in, dg.iat_every);

    SamplerOptions so;
    so.workers = c_.workers;
    so.ridge = c_.ridge;
    so.bandwidth = c_.bandwidth;
    so.record_steps = snap_steps;
    so.record_steps.insert(so.record_steps.end(), longrun_steps.begin(), longrun_steps.end());
    so.record_steps.insert(so.record_steps.end(), iat_steps.begin(), iat_steps.end());

    const SamplerResult res = run_sampler(sampler_method(), p_, std::move(init), c_.tau, n_steps, so);
    std::map<std::int64_t, const Snapshot*> by_step;
    for (const auto& s : res.samples) by_step[s.step] = &s;
    metric("acceptance_rate", res.stats.acceptance_rate);

    std::vector<Snapshot> selected;
    for (auto k : snap_steps) selected.push_back(*by_step.at(k));
    if (!c_.outputs.samples.empty()) write(c_.outputs.samples, samples_csv(selected));

    // Reference grid solve from the same initial law.
    std::vector<GridDensity> reference;
    if (c_.grid && c_.grid->reference != "none") {
      const Grid1D fine = make_grid(*c_.grid, c_.grid->refine);
      const FpeState s0(p_, initial_density(fine));
      std::vector<double> times;
      for (const auto& s : selected) times.push_back(s.time);
      for (const auto& s : fpe_solve(s0, variant_of(c_.grid->reference), times,
                                     std::numeric_limits<double>::infinity())) {
        reference.push_back(c_.grid->refine > 1 ? coarsen(s.density, c_.grid->refine) : s.density);
      }
    }

    std::optional<GridDensity> pi;
    if (c_.grid) pi = gibbs_density(p_, make_grid(*c_.grid, 1));
    std::vector<double> tvs;
    const bool several = selected.size() > 1;
    for (std::size_t s = 0; s < selected.size(); ++s) {
      const Snapshot& snap = selected[s];
      const double t = snap.time;
      const std::string tag = "t" + time_tag(t);
      const Moments mo = moments(snap.particles);
      for (int c = 0; c < d; ++c) {
        metric(metric_at("mean_" + std::to_string(c), t), mo.mean[c]);
        metric(metric_at("var_" + std::to_string(c), t), mo.covariance(c, c));
      }
      metric(metric_at("frac_positive", t), (snap.particles.row(0).array() > 0).cast<double>().mean());
      if (!pi) continue;
      const Eigen::RowVectorXd row = snap.particles.row(0);
      const Histogram h = histogram(std::span<const double>(row.data(), static_cast<std::size_t>(row.size())), pi->grid);
      const double tv = tv_distance(h.density, *pi);
      tvs.push_back(tv);
      metric(metric_at("tv_pi", t), tv);
      metric(metric_at("out_of_range", t), static_cast<double>(h.out_of_range) / j);
      if (!c_.outputs.histogram.empty()) write(expand(c_.outputs.histogram, "t", tag, several), density_csv(h.density));
      if (!reference.empty()) {
        metric(metric_at("tv_ref", t), tv_distance(h.density, reference[s]));
        if (!c_.outputs.density.empty()) {
          write(expand(c_.outputs.density, "t", tag, several), density_csv(reference[s]));
        }
      }
    }
    if (tvs.size() >= 2) {
      bool mono = true;
      for (std::size_t s = 1; s < tvs.size(); ++s) mono = mono && tvs[s] < tvs[s - 1];
      metric("tv_monotone", mono ? 1.0 : 0.0);
    }

    if (longrun_steps.size() >= 2) {
      const auto m = static_cast<double>(longrun_steps.size());
      metric("longrun_snapshots", m);
      for (int c = 0; c < d; ++c) {
        std::vector<double> means, vars;
        for (auto k : longrun_steps) {
          const Eigen::RowVectorXd row = by_step.at(k)->particles.row(c);
          const double mu = row.mean();
          means.push_back(mu);
          vars.push_back((row.array() - mu).square().sum() / std::max<Eigen::Index>(1, row.size() - 1));
        }
        auto mean_se = [m](const std::vector<double>& v) {
          const double mu = std::accumulate(v.begin(), v.end(), 0.0) / m;
          double ss = 0.0;
          for (double x : v) ss += (x - mu) * (x - mu);
          return std::pair{mu, std::sqrt(ss / (m - 1) / m)};
        };
        const auto [mu, mu_se] = mean_se(means);
        const auto [var, var_se] = mean_se(vars);
        const std::string cs = std::to_string(c);
        metric("longrun_mean_" + cs, mu);
        metric("longrun_mean_se_" + cs, mu_se);
        metric("longrun_var_" + cs, var);
        metric("longrun_var_se_" + cs, var_se);
      }
    }

    if (iat_steps.size() >= 4) {
      const int k = dg.iat_particles > 0 ? std::min(dg.iat_particles, j) : j;
      double lo = std::numeric_limits<double>::infinity();
      double hi = 0.0;
      for (int c = 0; c < d; ++c) {
        std::vector<std::vector<double>> chains(static_cast<std::size_t>(k));
        for (auto step : iat_steps) {
          const Matrix& x = by_step.at(step)->particles;
          for (int q = 0; q < k; ++q) chains[static_cast<std::size_t>(q)].push_back(x(c, q));
        }
        const double tau_int = integrated_autocorrelation_time(chains) * static_cast<double>(dg.iat_every);
        metric("iat_" + std::to_string(c), tau_int);
        lo = std::min(lo, tau_int);
        hi = std::max(hi, tau_int);
      }
      metric("iat_ratio", hi / lo);
    }
  }

  SamplerMethod sampler_method() const {
    if (c_.method == "mala") return SamplerMethod::mala;
    if (c_.method == "ensemble") return SamplerMethod::ensemble;
    if (c_.method == "bdl") return SamplerMethod::bdl;
    return SamplerMethod::ula;
  }

  // -------------------------------------------------------------------------
  void run_grid() {
    const Grid1D grid = make_grid(*c_.grid, 1);
    const GridDensity pi = gibbs_density(p_, grid);
    const FpeState s0(p_, initial_density(grid));
    const double dt_max = c_.tau > 0 ? c_.tau : std::numeric_limits<double>::infinity();
    const auto traj = fpe_solve(s0, variant_of(c_.method), c_.snapshot_times, dt_max);

    std::vector<double> kl_ref;
    if (c_.grid->reference != "none") {
      for (const auto& s : fpe_solve(s0, variant_of(c_.grid->reference), c_.snapshot_times, dt_max)) {
        kl_ref.push_back(kl_divergence(s.density, pi));
      }
    }

    metric("max_dt", fpe_max_dt(s0));
    const bool several = traj.size() > 1;
    double drift = 0.0;
    double edge = 0.0;  // mass in the two outermost cells; large values mean the domain is too small
    double excess = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < traj.size(); ++i) {
      const auto& s = traj[i];
      const double t = c_.snapshot_times[i];
      const double kl = kl_divergence(s.density, pi);
      const double tv0 = tv_distance(s.density, s0.density);
      drift = std::max(drift, tv0);
      edge = std::max(edge, (s.density.values.front() + s.density.values.back()) * grid.dx);
      metric(metric_at("kl", t), kl);
      metric(metric_at("tv_pi", t), tv_distance(s.density, pi));
      metric(metric_at("tv_init", t), tv0);
      metric(metric_at("mean", t), s.density.mean());
      metric(metric_at("var", t), s.density.variance());
      metric(metric_at("frac_positive", t), positive_mass(s.density));
      if (!kl_ref.empty()) {
        metric(metric_at("kl_ref", t), kl_ref[i]);
        excess = std::max(excess, kl - kl_ref[i]);
      }
      if (!c_.outputs.density.empty()) {
        write(expand(c_.outputs.density, "t", "t" + time_tag(t), several), density_csv(s.density));
      }
    }
    metric("tv_drift_max", drift);
    metric("boundary_mass_max", edge);
    if (!kl_ref.empty()) metric("kl_excess_max", excess);

    const auto& last = traj.back();
    double mass_err = 0.0;
    for (double m : last.mass_log) mass_err = std::max(mass_err, std::abs(m - last.mass_log.front()));
    metric("max_mass_change", mass_err);
    metric("steps_taken", static_cast<double>(last.mass_log.size() - 1));

    // The decay report wants ρ₀ first.
    std::vector<FpeState> with_start;
    with_start.reserve(traj.size() + 1);
    with_start.push_back(s0);
    with_start.insert(with_start.end(), traj.begin(), traj.end());
    bool positive = true;
    for (double v : pi.values) positive = positive && v > 1e-300;
    if (!positive) return;  // L²(π⁻¹) undefined on this grid
    const DecayReport dr = decay_report(with_start, pi, p_.alpha());
    metric("heavy_tails_flag", dr.heavy_tails_flag ? 1.0 : 0.0);
    for (const auto& r : dr.rows) metric(metric_at("l2_pi_inv", r.time), r.l2_pi_inv);
    if (dr.applicable) {
      double l2_margin = std::numeric_limits<double>::infinity();
      double kl_margin = l2_margin;
      for (std::size_t i = 1; i < dr.rows.size(); ++i) {
        l2_margin = std::min(l2_margin, dr.rows[i].envelope_l2 - dr.rows[i].l2_pi_inv);
        kl_margin = std::min(kl_margin, dr.rows[i].envelope_kl - dr.rows[i].kl);
      }
      metric("envelope_l2_ok", dr.all_l2_ok() ? 1.0 : 0.0);
      metric("envelope_kl_ok", dr.all_kl_ok() ? 1.0 : 0.0);
      metric("l2_margin_min", l2_margin);
      metric("kl_margin_min", kl_margin);
    }
    if (!c_.outputs.decay.empty()) write(c_.outputs.decay, dr.to_csv());
  }
};

AssertionResult check(const Assertion& a, const RunReport& rep) {
  AssertionResult r{a, false, kNaN, {}};
  const auto v = rep.metric(a.metric);
  if (!v) {
    r.message = "metric '" + a.metric + "' was not produced";
    return r;
  }
  r.actual = *v;
  const double x = *v;
  if (a.op == "<") r.passed = x < a.value;
  if (a.op == "<=") r.passed = x <= a.value;
  if (a.op == ">") r.passed = x > a.value;
  if (a.op == ">=") r.passed = x >= a.value;
  if (a.op == "==") r.passed = x == a.value;
  if (a.op == "near") {
    double tol = a.tol_scale;
    if (!a.tol_metric.empty()) {
      const auto t = rep.metric(a.tol_metric);
      if (!t) {
        r.message = "tolerance metric '" + a.tol_metric + "' was not produced";
        return r;
      }
      tol *= *t;
    }
    r.passed = std::abs(x - a.value) <= tol;
  }
  r.message = a.metric + " = " + csv::format_shortest(x) + (r.passed ? " satisfies " : " violates ") + a.expression();
  return r;
}

std::string utc_now() {
  const std::time_t now = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

void write_manifest(const ExperimentConfig& c, const RunReport& rep, const std::string& started) {
  using nlohmann::ordered_json;
  ordered_json j;
  j["tool"] = "gradflow";
  j["version"] = kVersion;
  j["compiler"] = __VERSION__;
  j["eigen"] = std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
               std::to_string(EIGEN_MINOR_VERSION);
  j["experiment"] = c.name;
  j["method"] = c.method;
  j["seed"] = c.seed ? ordered_json(*c.seed) : ordered_json(nullptr);
  j["workers"] = c.workers;
  j["started_utc"] = started;
  j["wall_time_seconds"] = rep.wall_seconds;
  j["exit_code"] = rep.exit_code;
  if (!rep.error.empty()) j["error"] = rep.error;
  j["config"] = serialize(c);
  ordered_json arts = ordered_json::array();
  for (const auto& a : rep.artifacts) arts.push_back(a.filename().string());
  j["artifacts"] = arts;
  ordered_json m = ordered_json::object();
  for (const auto& [k, v] : rep.metrics) m[k] = std::isfinite(v) ? ordered_json(v) : ordered_json(csv::format_real(v));
  j["metrics"] = m;
  ordered_json as = ordered_json::array();
  for (const auto& a : rep.assertions) {
    as.push_back({{"metric", a.assertion.metric},
                  {"expression", a.assertion.expression()},
                  {"actual", std::isfinite(a.actual) ? ordered_json(a.actual) : ordered_json(nullptr)},
                  {"passed", a.passed}});
  }
  j["assertions"] = as;
  std::ofstream out(rep.output_dir / "manifest.json");
  out << j.dump(2) << '\n';
}

// Quantiles of a grid density (uniform within each cell) at levels (k+½)/m.
std::vector<double> density_quantiles(const GridDensity& d, std::size_t m) {
  const double mass = d.mass();
  std::vector<double> q(m);
  double cum = 0.0;
  int cell = 0;
  for (std::size_t k = 0; k < m; ++k) {
    const double level = (static_cast<double>(k) + 0.5) / static_cast<double>(m) * mass;
    while (cell < d.grid.n - 1 && cum + d.values[cell] * d.grid.dx < level) cum += d.values[cell++] * d.grid.dx;
    const double w = d.values[cell] * d.grid.dx;
    const double frac = w > 0 ? std::clamp((level - cum) / w, 0.0, 1.0) : 0.5;
    q[k] = d.grid.center(cell) - 0.5 * d.grid.dx + frac * d.grid.dx;
  }
  return q;
}

struct Loaded {
  std::optional<GridDensity> density;
  std::vector<double> samples;
};

Loaded load(const std::string& path) {
  const auto t = csv::read(path);
  auto has = [&](const char* name) { return std::find(t.header.begin(), t.header.end(), name) != t.header.end(); };
  Loaded l;
  if (has("x") && has("value")) {
    l.density = read_density_csv(path);
    return l;
  }
  if (has("theta_0")) {
    const auto col = t.column("theta_0");
    std::optional<std::size_t> step_col;
    if (has("step")) step_col = t.column("step");
    double last = -std::numeric_limits<double>::infinity();
    if (step_col) {
      for (const auto& r : t.rows) last = std::max(last, r[*step_col]);
    }
    for (const auto& r : t.rows) {
      if (!step_col || r[*step_col] == last) l.samples.push_back(r[col]);
    }
    if (l.samples.empty()) throw InvalidParameter("sample file '" + path + "' has no rows");
    return l;
  }
  throw InvalidParameter("'" + path + "' is neither a density (x,value) nor a sample (theta_0) file");
}

}  // namespace

std::optional<double> RunReport::metric(const std::string& name) const {
  for (const auto& [k, v] : metrics) {
    if (k == name) return v;
  }
  return std::nullopt;
}

std::string metric_at(const std::string& base, double t) { return base + "@" + time_tag(t); }

fs::path output_root_from_env() {
  const char* env = std::getenv("GRADFLOW_OUTPUT_ROOT");
  if (env && *env) return env;
  return ".";
}

RunReport run_experiment(const ExperimentConfig& c, const RunOptions& opts) {
  RunReport rep;
  const auto t0 = std::chrono::steady_clock::now();
  const std::string started = utc_now();
  rep.output_dir = opts.output_root / c.outputs.dir;
  try {
    fs::create_directories(rep.output_dir);
    Run(c, rep).execute();
    for (const auto& a : c.asserts) rep.assertions.push_back(check(a, rep));
    const bool all = std::all_of(rep.assertions.begin(), rep.assertions.end(), [](const auto& a) { return a.passed; });
    if (!all) {
      rep.exit_code = exit_code::assertion_failed;
      rep.error = "assertion failed";
      for (const auto& a : rep.assertions) {
        if (!a.passed) rep.error += "\n  line " + std::to_string(a.assertion.line) + ": " + a.message;
      }
    }
  } catch (const std::exception& e) {
    rep.exit_code = exit_code::runtime_error;
    rep.error = "experiment '" + c.name + "' (method " + c.method + ", potential " + c.potential + "): " + e.what();
  }
  rep.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (opts.write_manifest) {
    try {
      write_manifest(c, rep, started);
    } catch (const std::exception& e) {
      if (rep.exit_code == exit_code::ok) {
        rep.exit_code = exit_code::runtime_error;
        rep.error = std::string("could not write manifest: ") + e.what();
      }
    }
  }
  return rep;
}

CompareMetric parse_compare_metric(const std::string& name) {
  if (name == "kl") return CompareMetric::kl;
  if (name == "tv") return CompareMetric::tv;
  if (name == "l2pinv") return CompareMetric::l2pinv;
  if (name == "w2") return CompareMetric::w2;
  throw InvalidParameter("unknown metric '" + name + "' (kl, tv, l2pinv, w2)");
}

double compare_files(const std::string& a, const std::string& b, CompareMetric m) {
  const Loaded la = load(a);
  const Loaded lb = load(b);
  if (m == CompareMetric::w2) {
    if (la.density && lb.density) {
      constexpr std::size_t kLevels = 4096;
      const auto qa = density_quantiles(*la.density, kLevels);
      const auto qb = density_quantiles(*lb.density, kLevels);
      return wasserstein1d(qa, qb);
    }
    const auto qa = la.density ? density_quantiles(*la.density, lb.samples.size()) : la.samples;
    const auto qb = lb.density ? density_quantiles(*lb.density, la.samples.size()) : lb.samples;
    return wasserstein1d(qa, qb);
  }
  if (!la.density || !lb.density) throw InvalidParameter("metrics kl, tv and l2pinv need two density files");
  switch (m) {
    case CompareMetric::kl:
      return kl_divergence(*la.density, *lb.density);
    case CompareMetric::tv:
      return tv_distance(*la.density, *lb.density);
    default:
      return l2_pi_inv_norm(*la.density, *lb.density);
  }
}

}  // namespace gradflow
