#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "gradflow/density.hpp"
#include "gradflow/potentials.hpp"

namespace gradflow {

/// Face coefficients of the Chang-Cooper (Scharfetter-Gummel) flux for a
/// fixed potential and grid. Shared between states of one solve.
struct FpeOperator {
  Grid1D grid;
  std::vector<double> v;         // V at cell centers
  std::vector<double> b_plus;    // B(ΔV) on face k+½, weight of ρ_k
  std::vector<double> b_minus;   // B(−ΔV) on face k+½, weight of ρ_{k+1}
  std::vector<double> log_pi;    // normalized log Gibbs density on the grid
  double max_dt = 0.0;           // stability bound at unit mobility
};

/// Density of the Fokker-Planck solve ∂ρ = ∂ₓ(ρ ∂ₓV + ∂ₓρ) on a truncated
/// domain with zero-flux boundaries.
struct FpeState {
  GridDensity density;
  double time = 0.0;
  Potential potential;
  std::shared_ptr<const FpeOperator> op;
  /// Total mass after every step, starting with the initial mass.
  std::vector<double> mass_log;

  /// Builds the operator for `p` on `rho0.grid`. p must be one-dimensional.
  FpeState(Potential p, GridDensity rho0);
};

/// dx² / (2 (1 + dx·G)) with G = max over faces of |ΔV|/dx: the explicit
/// step that keeps every update coefficient nonnegative at unit mobility.
double fpe_max_dt(const FpeState& s);

/// One explicit step of the Chang-Cooper finite-volume scheme. Conserves mass
/// to rounding, preserves nonnegativity, and leaves the discrete Gibbs
/// density exp(−V) fixed. Throws StabilityError when dt > fpe_max_dt.
FpeState fpe_step(const FpeState& s, double dt);

/// Same scheme with mobility var(ρ), the variance recomputed from the current
/// density (1-D covariance preconditioning, the mean-field limit of
/// ensemble_langevin_step). The stability bound becomes fpe_max_dt / var.
/// Throws DomainError when the variance is below 1e-12.
FpeState weighted_fpe_step(const FpeState& s, double dt);

/// Strang splitting of birth-death accelerated Langevin: half reaction step
/// ρ ← ρ + (dt/2) ρ (log π − log ρ − ⟨log π − log ρ⟩_ρ) with renormalization,
/// a full fpe_step, and a second half reaction step. Cells below 1e-300 take
/// no reaction update.
FpeState bdl_fpe_step(const FpeState& s, double dt);

enum class FpeVariant { standard, weighted, birth_death };

/// Advances to each output time in turn and returns one state per output
/// time. Standard and birth-death variants use the largest uniform step not
/// exceeding min(dt_max, fpe_max_dt) that lands exactly on the output times;
/// the weighted variant takes min(dt_max, 0.9·fpe_max_dt/var) per step and
/// shortens the last step of each interval.
std::vector<FpeState> fpe_solve(const FpeState& s0, FpeVariant variant, const std::vector<double>& output_times,
                                double dt_max);

struct DecayRow {
  double time;
  double l2_pi_inv;
  double kl;
  double envelope_l2;  // e^{−αt} ‖ρ₀ − π‖
  double envelope_kl;  // e^{−2αt} KL(ρ₀‖π)
  bool l2_ok;
  bool kl_ok;
};

struct DecayReport {
  /// False when no valid strong-convexity constant was supplied.
  bool applicable = false;
  /// ρ₀/π grows toward both ends of the grid, so ρ₀ likely has heavier tails
  /// than π and the L² envelope is not guaranteed.
  bool heavy_tails_flag = false;
  std::vector<DecayRow> rows;

  bool all_l2_ok() const;
  bool all_kl_ok() const;
  /// CSV with columns time,l2_pi_inv,kl,envelope_l2,envelope_kl.
  std::string to_csv() const;
};

/// Evaluates ‖ρₜ − π‖_{L²(π⁻¹)} and KL(ρₜ‖π) along `trajectory` (first entry
/// is ρ₀) and checks the exponential envelopes for the given α.
DecayReport decay_report(const std::vector<FpeState>& trajectory, const GridDensity& pi, std::optional<double> alpha);

std::string to_string(FpeVariant v);

}  // namespace gradflow
