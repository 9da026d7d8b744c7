#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "gradflow/potentials.hpp"

namespace gradflow {

/// Uniform 1-D grid of n cells with centers x0 + k·dx.
struct Grid1D {
  double x0 = 0.0;
  double dx = 1.0;
  int n = 2;

  /// n equal cells covering [lo, hi].
  static Grid1D cells(double lo, double hi, int n);
  /// n centers from lo to hi inclusive (dx = (hi − lo)/(n − 1)).
  static Grid1D nodes(double lo, double hi, int n);

  double center(int k) const { return x0 + k * dx; }
  double lower() const { return x0 - 0.5 * dx; }
  double upper() const { return x0 + (n - 0.5) * dx; }
  /// Throws InvalidParameter if n < 2 or dx ≤ 0.
  void validate() const;
  bool same_as(const Grid1D& other) const;
};

/// Nonnegative density per unit length on a Grid1D. Integrals use the
/// midpoint rule on cell centers.
struct GridDensity {
  Grid1D grid;
  std::vector<double> values;
  /// log of the mass divided out by normalize().
  double log_z = 0.0;

  double mass() const;
  double mean() const;
  double variance() const;
};

/// Divides by the midpoint-rule mass and records log Z. Throws
/// InvalidParameter on zero mass or negative / non-finite input.
GridDensity normalize(std::span<const double> values, const Grid1D& grid);

/// Evaluates f at the cell centers.
std::vector<double> tabulate(const Grid1D& grid, const std::function<double(double)>& f);

/// Normalized exp(−V) on the grid, computed with a max-shift so that large V
/// does not underflow. log_z is exact for the shifted sum.
GridDensity gibbs_density(const Potential& p, const Grid1D& grid);

struct Histogram {
  GridDensity density;
  /// Samples outside [grid.lower(), grid.upper()); excluded from the mass.
  std::size_t out_of_range = 0;
};

/// Bin counts / (N_in·dx) on the grid cells.
Histogram histogram(std::span<const double> samples, const Grid1D& grid);

/// Gaussian-kernel density estimate N⁻¹ Σ φ_h(x − θⱼ) at each eval point.
std::vector<double> kde(std::span<const double> samples, double bandwidth, std::span<const double> eval_points);

struct Bandwidth {
  double value;
  /// True when the sample spread was degenerate and the floor was applied.
  bool floored = false;
};

/// 1.06 · std · N^(−1/5) with the sample standard deviation. Throws for
/// N < 2. Degenerate (zero-spread) samples get an absolute floor of 1e-8 and
/// are flagged.
Bandwidth silverman_bandwidth(std::span<const double> samples);

/// Σ ρ log(ρ/π) dx with 0·log 0 = 0; +∞ when ρ > 0 somewhere π = 0.
double kl_divergence(const GridDensity& rho, const GridDensity& pi);

/// ½ Σ |ρ − π| dx
double tv_distance(const GridDensity& rho, const GridDensity& pi);

/// √(Σ (ρ − π)²/π dx). Throws DomainError if π ≤ 1e-300 in any cell.
double l2_pi_inv_norm(const GridDensity& rho, const GridDensity& pi);

/// 2-Wasserstein distance of two 1-D empirical measures via sorted samples.
/// Unequal sizes are compared at common quantile levels (k + ½)/M.
double wasserstein1d(std::span<const double> a, std::span<const double> b);

struct Moments {
  Vector mean;
  Matrix covariance;  // unbiased, divisor N − 1
};

/// Moments of samples stored one per column (dim × N). Throws for N < 2.
Moments moments(const Matrix& samples);
Moments moments(std::span<const double> samples);

/// Averages blocks of `factor` consecutive cells (n must be divisible).
GridDensity coarsen(const GridDensity& d, int factor);

/// CSV with columns x,value.
std::string density_csv(const GridDensity& d);
/// Reads a density CSV written by density_csv. The grid is reconstructed from
/// the x column, which must be uniformly spaced.
GridDensity read_density_csv(const std::string& path);

}  // namespace gradflow
