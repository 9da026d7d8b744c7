// Acceptance run: executes the checked-in recipes and prints one PASS/FAIL
// line per criterion. Exit status is nonzero when any criterion fails.

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "gradflow/config.hpp"
#include "gradflow/csv.hpp"
#include "gradflow/experiment.hpp"
#include "gradflow/potentials.hpp"
#include "gradflow/sample.hpp"

namespace fs = std::filesystem;
using namespace gradflow;

namespace {

const fs::path kRecipes = GRADFLOW_RECIPES_DIR;
const fs::path kOut = fs::absolute("acceptance_out");

struct Outcome {
  bool pass = true;
  std::string detail;

  void require(bool ok, const std::string& what) {
    pass = pass && ok;
    if (!detail.empty()) detail += "; ";
    detail += what + (ok ? "" : " [violated]");
  }
};

std::string num(double v, int prec = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*g", prec, v);
  return buf;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

ExperimentConfig load(const std::string& recipe, const ConfigOverrides& o = {}) {
  return parse_config(slurp(kRecipes / (recipe + ".ini")), o);
}

std::map<std::string, RunReport> g_runs;

// Runs a recipe once (cached) and records its assertions and runtime.
const RunReport& run(const std::string& recipe) {
  auto it = g_runs.find(recipe);
  if (it != g_runs.end()) return it->second;
  RunOptions ro;
  ro.output_root = kOut / "workers_default";
  auto rep = run_experiment(load(recipe), ro);
  std::cerr << "  ran " << recipe << " in " << num(rep.wall_seconds, 3) << " s (exit " << rep.exit_code << ")\n";
  if (!rep.error.empty()) std::cerr << "  " << rep.error << '\n';
  return g_runs.emplace(recipe, std::move(rep)).first->second;
}

double metric(const RunReport& r, const std::string& name) {
  return r.metric(name).value_or(std::nan(""));
}

// Recipe ran cleanly, all its config assertions held, within the time limit.
void recipe_ok(Outcome& o, const std::string& recipe, double max_seconds) {
  const auto& r = run(recipe);
  o.require(r.exit_code == exit_code::ok, recipe + " exit " + std::to_string(r.exit_code));
  o.require(r.wall_seconds < max_seconds, recipe + " " + num(r.wall_seconds, 3) + " s < " + num(max_seconds) + " s");
}

// ---------------------------------------------------------------------------

Outcome basins() {
  Outcome o;
  recipe_ok(o, "fig2_double_well_gd", 1.0);
  const auto& r = run("fig2_double_well_gd");
  const double expected[] = {1, 1, 1, -1, -1};
  double worst = 0.0;
  for (int i = 0; i < 5; ++i) {
    worst = std::max(worst, std::abs(metric(r, "final_theta_" + std::to_string(i) + "_0") - expected[i]));
  }
  o.require(worst <= 1e-6, "max endpoint error " + num(worst) + " <= 1e-6");
  return o;
}

Outcome linear_rate() {
  Outcome o;
  recipe_ok(o, "quadratic_linear_rate", 1.0);
  const auto& r = run("quadratic_linear_rate");
  o.require(metric(r, "min_margin_0") >= 0 && metric(r, "min_margin_1") >= 0,
            "min margin " + num(std::min(metric(r, "min_margin_0"), metric(r, "min_margin_1"))) + " >= 0");
  // Closed form for tau = 1/L = 1/2: theta_n = (1 - 2 a_i tau)^n theta_0.
  const auto cfg = load("quadratic_linear_rate");
  const double factor[] = {1.0 - 2 * 0.05 * 0.5, 1.0 - 2 * 1.0 * 0.5};
  double worst = 0.0;
  for (std::size_t i = 0; i < cfg.init.points.size(); ++i) {
    const auto t = csv::read((r.output_dir / ("trajectory_" + std::to_string(i) + ".csv")).string());
    for (const auto& row : t.rows) {
      const double n = row[t.column("step")];
      for (int c = 0; c < 2; ++c) {
        const double exact = std::pow(factor[c], n) * cfg.init.points[i][c];
        const double got = row[t.column("theta_" + std::to_string(c))];
        worst = std::max(worst, std::abs(got - exact) / std::max(1.0, std::abs(exact)));
      }
    }
  }
  o.require(worst <= 1e-12, "closed-form deviation " + num(worst) + " <= 1e-12");
  return o;
}

Outcome langevin_target() {
  Outcome o;
  recipe_ok(o, "fig3_ula_double_well", 300.0);
  const auto& r = run("fig3_ula_double_well");
  const double a = metric(r, "tv_pi@0.25"), b = metric(r, "tv_pi@0.5"), c = metric(r, "tv_pi@50");
  o.require(c < 0.05, "TV(t=50) " + num(c) + " < 0.05");
  o.require(a > b && b > c, "TV " + num(a) + " > " + num(b) + " > " + num(c));
  return o;
}

Outcome ula_bias() {
  Outcome o;
  recipe_ok(o, "ou_ula_bias", 60.0);
  recipe_ok(o, "ou_mala_exact", 60.0);
  const auto& u = run("ou_ula_bias");
  const auto& m = run("ou_mala_exact");
  const double uv = metric(u, "longrun_var_0"), us = metric(u, "longrun_var_se_0");
  const double mv = metric(m, "longrun_var_0"), ms = metric(m, "longrun_var_se_0");
  const double target = 1.0 / (1.0 - 0.2 / 2);
  o.require(std::abs(uv - target) <= 3 * us, "ULA var " + num(uv, 6) + " vs " + num(target, 6) + " (" +
                                                  num(std::abs(uv - target) / us, 3) + " SE)");
  o.require(std::abs(mv - 1.0) <= 3 * ms, "MALA var " + num(mv, 6) + " vs 1 (" + num(std::abs(mv - 1) / ms, 3) + " SE)");
  return o;
}

// Brute-force detailed balance with an independently written proposal density.
Outcome detailed_balance() {
  Outcome o;
  std::mt19937_64 gen(5);
  std::normal_distribution<double> nd(0.0, 1.0);
  const double tau = 0.1;
  double worst = 0.0;
  double worst_shift = 0.0;
  const Potential pots[] = {make_double_well(), make_quadratic({0.05, 1.0})};
  for (const auto& p : pots) {
    const int d = p.dim();
    const Potential shifted = p.shifted(-std::log(3.7));  // π̃ → 3.7·π̃
    auto log_q = [&](const Vector& from, const Vector& to) {
      const Vector r = to - from + tau * p.gradient(from);
      return -r.squaredNorm() / (4 * tau);
    };
    for (int k = 0; k < 500; ++k) {
      Vector x(d), y(d);
      for (int i = 0; i < d; ++i) {
        x[i] = 1.5 * nd(gen);
        y[i] = x[i] + std::sqrt(2 * tau) * nd(gen);
      }
      const double axy = mala_acceptance(p, x, y, tau);
      const double ayx = mala_acceptance(p, y, x, tau);
      // Probability fluxes π(x) q(x→y) a(x, y) in both directions, compared
      // through their log ratio so that tiny fluxes do not underflow.
      const double lhs = -p.value(x) + log_q(x, y) + std::log(axy);
      const double rhs = -p.value(y) + log_q(y, x) + std::log(ayx);
      if (std::isinf(lhs) || std::isinf(rhs)) {
        worst = std::max(worst, lhs == rhs ? 0.0 : 1.0);
      } else {
        worst = std::max(worst, std::abs(std::expm1(lhs - rhs)));
      }
      worst_shift = std::max(worst_shift, std::abs(mala_acceptance(shifted, x, y, tau) - axy));
    }
  }
  o.require(worst <= 1e-10, "max relative imbalance " + num(worst) + " over 1000 pairs <= 1e-10");
  o.require(worst_shift <= 1e-12, "acceptance change under pi -> c pi " + num(worst_shift));
  return o;
}

Outcome poincare() {
  Outcome o;
  recipe_ok(o, "ou_poincare_decay", 60.0);
  const auto& r = run("ou_poincare_decay");
  o.require(metric(r, "envelope_l2_ok") == 1, "L2 envelope at t = 0.5, 1, 2, 4");
  o.require(metric(r, "l2_margin_min") > 0, "min margin " + num(metric(r, "l2_margin_min")) + " > 0");
  return o;
}

Outcome kl_decay() {
  Outcome o;
  recipe_ok(o, "ou_poincare_decay", 60.0);
  const auto& r = run("ou_poincare_decay");
  o.require(metric(r, "envelope_kl_ok") == 1, "KL envelope at t = 0.5, 1, 2, 4");
  o.require(metric(r, "kl_margin_min") > 0, "min margin " + num(metric(r, "kl_margin_min")) + " > 0");
  return o;
}

Outcome stationarity() {
  Outcome o;
  for (const char* v : {"fpe", "fpe_weighted", "fpe_bdl"}) {
    const std::string recipe = std::string("stationary_") + v;
    recipe_ok(o, recipe, 60.0);
    const auto& r = run(recipe);
    o.require(metric(r, "tv_drift_max") < 1e-6 && metric(r, "steps_taken") >= 1000,
              std::string(v) + " drift " + num(metric(r, "tv_drift_max")) + " over " +
                  num(metric(r, "steps_taken"), 6) + " steps");
  }
  return o;
}

Outcome particle_pde() {
  Outcome o;
  recipe_ok(o, "particle_pde_agreement", 300.0);
  const auto& r = run("particle_pde_agreement");
  for (const char* t : {"0.25", "0.5"}) {
    const double v = metric(r, std::string("tv_ref@") + t);
    o.require(v < 0.02, std::string("TV(t=") + t + ") " + num(v) + " < 0.02");
  }
  return o;
}

Outcome ensemble() {
  Outcome o;
  recipe_ok(o, "ensemble_posterior", 300.0);
  recipe_ok(o, "ensemble_anisotropic", 300.0);
  recipe_ok(o, "ula_anisotropic", 300.0);
  const auto& p = run("ensemble_posterior");
  const double m = metric(p, "mean_0@100"), v = metric(p, "var_0@100");
  o.require(std::abs(m - 1) <= 0.05, "mean " + num(m) + " within 0.05 of 1");
  o.require(std::abs(v - 0.5) <= 0.05, "var " + num(v) + " within 10% of 0.5");
  const double re = metric(run("ensemble_anisotropic"), "iat_ratio");
  const double ru = metric(run("ula_anisotropic"), "iat_ratio");
  o.require(re <= 2, "ensemble IAT ratio " + num(re) + " <= 2");
  o.require(ru >= 10, "ULA IAT ratio " + num(ru) + " >= 10");
  return o;
}

Outcome birth_death() {
  Outcome o;
  recipe_ok(o, "bdl_grid_mixture", 300.0);
  recipe_ok(o, "bdl_particles_mixture", 300.0);
  recipe_ok(o, "ula_particles_mixture", 300.0);
  const double ex = metric(run("bdl_grid_mixture"), "kl_excess_max");
  o.require(ex <= 1e-6, "max KL(bdl) - KL(fpe) " + num(ex) + " <= 1e-6");
  const double b = metric(run("bdl_particles_mixture"), "frac_positive@10");
  const double u = metric(run("ula_particles_mixture"), "frac_positive@10");
  o.require(std::abs(b - 0.5) <= 0.1, "BDL right-mode mass " + num(b) + " within 0.1 of 0.5");
  o.require(u < 0.2, "ULA right-mode mass " + num(u) + " < 0.2");
  return o;
}

// Reruns every particle recipe with another worker count and compares the
// written sample files byte for byte.
Outcome determinism() {
  Outcome o;
  const char* recipes[] = {"fig3_ula_double_well", "ou_ula_bias",          "ou_mala_exact",
                           "particle_pde_agreement", "ensemble_posterior", "ensemble_anisotropic",
                           "ula_anisotropic",      "bdl_particles_mixture", "ula_particles_mixture"};
  int identical = 0;
  for (const char* name : recipes) {
    const auto& first = run(name);
    const auto cfg = load(name);
    ConfigOverrides ov;
    ov.workers = cfg.workers == 3 ? 2 : 3;
    RunOptions ro;
    ro.output_root = kOut / "workers_other";
    const auto second = run_experiment(load(name, ov), ro);
    std::cerr << "  reran " << name << " with " << *ov.workers << " workers in " << num(second.wall_seconds, 3)
              << " s\n";
    const fs::path a = first.output_dir / cfg.outputs.samples;
    const fs::path b = second.output_dir / cfg.outputs.samples;
    const bool same = second.exit_code == first.exit_code && fs::exists(a) && slurp(a) == slurp(b);
    if (same) {
      ++identical;
    } else {
      o.require(false, std::string(name) + " samples differ");
    }
  }
  o.require(identical == static_cast<int>(std::size(recipes)),
            std::to_string(identical) + "/" + std::to_string(std::size(recipes)) + " sample files byte-identical");
  return o;
}

}  // namespace

int main() {
  fs::remove_all(kOut);
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"1 basins of attraction", basins},
      {"2 discrete linear rate", linear_rate},
      {"3 Langevin reaches the target", langevin_target},
      {"4 ULA bias and MALA correction", ula_bias},
      {"5 MALA detailed balance", detailed_balance},
      {"6 Poincare decay", poincare},
      {"7 KL decay", kl_decay},
      {"8 stationarity of FP variants", stationarity},
      {"9 particle-PDE agreement", particle_pde},
      {"10 ensemble preconditioning", ensemble},
      {"11 BDL on bimodal targets", birth_death},
      {"12 determinism across worker counts", determinism},
  };
  int failed = 0;
  for (const auto& [name, fn] : criteria) {
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail = std::string("exception: ") + e.what();
    }
    if (!o.pass) ++failed;
    std::cout << (o.pass ? "PASS " : "FAIL ") << name << ": " << o.detail << std::endl;
  }
  std::cout << (failed == 0 ? "all criteria passed" : std::to_string(failed) + " criteria failed") << std::endl;
  return failed == 0 ? 0 : 1;
}
