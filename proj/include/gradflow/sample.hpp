#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "gradflow/potentials.hpp"
#include "gradflow/rng.hpp"

namespace gradflow {

/// J particles in R^dim, stored one particle per column (dim × J).
/// Weights are uniform. `step` is the global step counter that keys the RNG
/// substreams, so resuming from a saved ensemble continues the same streams.
struct Ensemble {
  Matrix particles;
  std::int64_t step = 0;
  RngStream rng;

  int size() const { return static_cast<int>(particles.cols()); }
  int dim() const { return static_cast<int>(particles.rows()); }

  static Ensemble single(ConstVecRef theta, std::uint64_t seed);
  /// J independent draws from N(mean, cov) using the `init` substreams.
  static Ensemble gaussian(const GaussianSpec& g, int count, std::uint64_t seed);
};

struct ChainStats {
  std::int64_t n_steps = 0;
  std::int64_t proposed = 0;
  std::int64_t accepted = 0;
  double acceptance_rate = 1.0;
  /// Moments over every recorded particle state.
  std::int64_t n_recorded = 0;
  Vector mean;
  Matrix covariance;

  /// Flat "key = value" block, one entry per line.
  std::string to_text() const;
};

// ---------------------------------------------------------------------------
// Single-chain kernels

/// θ − τ∇V(θ) + √(2τ)·noise
Vector ula_step(const Potential& p, ConstVecRef theta, double tau, ConstVecRef noise);

/// Metropolis-Hastings acceptance probability for a ULA proposal θ → θ*,
/// computed in log space from the unnormalized density exp(−V).
double mala_acceptance(const Potential& p, ConstVecRef theta, ConstVecRef proposal, double tau);

struct MalaResult {
  Vector state;
  bool accepted = false;
};

/// One MALA transition with explicit randomness: proposal from `noise`,
/// accepted iff u < acceptance probability.
MalaResult mala_step(const Potential& p, ConstVecRef theta, double tau, ConstVecRef noise, double u);

/// One MALA transition drawing from the substreams keyed by (particle, step).
MalaResult mala_step(const Potential& p, ConstVecRef theta, double tau, const RngStream& rng,
                     std::uint64_t particle, std::uint64_t step);

// ---------------------------------------------------------------------------
// Interacting ensembles

/// (1/J) Σ (θ⁽ʲ⁾ − θ̄)(θ⁽ʲ⁾ − θ̄)ᵀ
Matrix ensemble_covariance(const Matrix& particles);
inline Matrix ensemble_covariance(const Ensemble& e) { return ensemble_covariance(e.particles); }

/// Default ridge: 1e-6 · trace(H) / dim.
double default_ridge(const Matrix& covariance);

/// One step of covariance-preconditioned Langevin dynamics. With
/// C = ensemble covariance + ridge·I shared by all particles,
///   θ⁽ʲ⁾ ← θ⁽ʲ⁾ − τC∇V(θ⁽ʲ⁾) + √(2τ) C^(1/2) ξ⁽ʲ⁾,
/// so C plays the role of the inverse preconditioner H⁻¹ (a Newton-like
/// choice for Gaussian targets, where the Hessian is the inverse covariance).
/// Throws PreconditionerError when the smallest eigenvalue of C is ≤ 1e-14.
Ensemble ensemble_langevin_step(const Potential& p, const Ensemble& e, double tau,
                                std::optional<double> ridge = std::nullopt, int workers = 1);

using LogDensityFn = std::function<double(ConstVecRef)>;

struct BdlOptions {
  /// Kernel bandwidth (all coordinates). Silverman's rule per coordinate when
  /// empty.
  std::optional<double> bandwidth;
  /// Replaces the kernel density estimate of log ρ when set.
  LogDensityFn log_density;
  int workers = 1;
};

struct BdlStats {
  int kills = 0;
  int duplications = 0;
  Vector bandwidths;
  bool bandwidth_floored = false;
};

/// Centered birth-death rates βᵢ = rᵢ − mean(r) with rᵢ = log ρ(θᵢ) + V(θᵢ).
Vector bdl_rates(const Potential& p, const Matrix& particles, const LogDensityFn& log_density);

/// log of the Gaussian-kernel density estimate at every particle, with one
/// bandwidth per coordinate.
Vector kde_log_density_at_particles(const Matrix& particles, const Vector& bandwidths);

/// Birth-death accelerated Langevin: a ULA substep for every particle, then
/// exponential-clock kills (βᵢ > 0) and duplications (βᵢ < 0) with a uniformly
/// chosen partner. J is conserved.
Ensemble bdl_step(const Potential& p, const Ensemble& e, double tau, const BdlOptions& opts = {},
                  BdlStats* stats = nullptr);

// ---------------------------------------------------------------------------
// Driver

enum class SamplerMethod { ula, mala, ensemble, bdl };

struct SamplerOptions {
  /// Record every `thin`-th state (step 0 included).
  int thin = 1;
  /// When non-empty, record exactly these step indices instead of thinning.
  std::vector<std::int64_t> record_steps;
  int workers = 1;
  std::optional<double> ridge;      // ensemble
  std::optional<double> bandwidth;  // bdl
};

struct Snapshot {
  std::int64_t step;
  double time;
  Matrix particles;
};

struct SamplerResult {
  std::vector<Snapshot> samples;
  ChainStats stats;
  Ensemble final_state;
};

/// Runs `n_steps` steps of `method`. For ula and mala every particle is an
/// independent chain. Output depends only on the seed, never on `workers`.
/// Throws DivergenceError on the first non-finite particle.
SamplerResult run_sampler(SamplerMethod method, const Potential& p, Ensemble init, double tau, std::int64_t n_steps,
                          const SamplerOptions& opts = {});

/// CSV with columns step,time,particle,theta_0..theta_{d-1}.
std::string samples_csv(const std::vector<Snapshot>& samples);

/// Integrated autocorrelation time 1 + 2Σρ(k) pooled over equal-length
/// chains, with Sokal's adaptive window (M ≥ c·τ(M)).
double integrated_autocorrelation_time(const std::vector<std::vector<double>>& chains, double window_c = 5.0);

std::string to_string(SamplerMethod m);

/// Runs fn(begin, end) over [0, n) split into `workers` contiguous blocks.
void parallel_for(int n, int workers, const std::function<void(int, int)>& fn);

}  // namespace gradflow
