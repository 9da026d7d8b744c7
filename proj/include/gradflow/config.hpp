#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "gradflow/errors.hpp"

namespace gradflow {

enum class MethodKind { flow, sampler, grid };

/// Method name → family. Throws InvalidParameter for an unknown name.
MethodKind method_kind(const std::string& method);
const std::vector<std::string>& known_methods();

struct InitSpec {
  /// points: explicit states (flows use every point as its own trajectory,
  /// samplers start every particle at the first point); gaussian: independent
  /// N(mean, diag(variance)) draws or, on a grid, the tabulated density;
  /// gibbs: the discretized target (grid methods only).
  std::string kind = "points";
  std::vector<std::vector<double>> points;
  std::vector<double> mean;
  std::vector<double> variance;

  bool operator==(const InitSpec&) const = default;
};

struct GridSpec {
  double lo = 0.0;
  double hi = 1.0;
  int n = 2;
  /// cells: n equal cells covering [lo, hi]; nodes: n cell centers from lo
  /// to hi inclusive.
  std::string layout = "cells";
  /// Particle methods: the reference solve runs on a grid `refine` times finer
  /// and is averaged back onto this grid.
  int refine = 1;
  /// "none", or a grid method (fpe, fpe_weighted, fpe_bdl) solved from the
  /// same initial density for comparison.
  std::string reference = "none";

  bool operator==(const GridSpec&) const = default;
};

struct DiagnosticsSpec {
  /// Long-run moments over snapshots every `longrun_every` steps after
  /// `longrun_burn_in` steps. Disabled when longrun_every is 0.
  std::int64_t longrun_burn_in = 0;
  std::int64_t longrun_every = 0;
  /// Per-coordinate integrated autocorrelation time from states recorded every
  /// `iat_every` steps after `iat_burn_in`, over the first `iat_particles`
  /// particles (all when 0). Disabled when iat_every is 0.
  std::int64_t iat_burn_in = 0;
  std::int64_t iat_every = 0;
  int iat_particles = 0;

  bool operator==(const DiagnosticsSpec&) const = default;
};

/// Artifact file names, relative to the output directory. Empty disables the
/// artifact. "{i}" expands to a trajectory index and "{t}" to a snapshot time;
/// without a placeholder a suffix is inserted before the extension whenever
/// several files are written.
struct OutputSpec {
  std::string dir;
  std::string trajectory;
  std::string histogram;
  std::string density;
  std::string samples;
  std::string metrics = "metrics.csv";
  std::string rates;
  std::string decay;
  /// Normalized exp(−V) on the [grid].
  std::string target;

  bool operator==(const OutputSpec&) const = default;
};

/// One check on a named metric, e.g. "< 0.05" or "near 1 3*longrun_var_se_0".
struct Assertion {
  std::string metric;
  std::string op;  // <, <=, >, >=, ==, near
  double value = 0.0;
  /// near only: tolerance = tol_scale · (tol_metric when set, else 1).
  double tol_scale = 0.0;
  std::string tol_metric;
  int line = 0;

  /// The right-hand side as written in a config.
  std::string expression() const;
  bool operator==(const Assertion& o) const {
    return metric == o.metric && op == o.op && value == o.value && tol_scale == o.tol_scale &&
           tol_metric == o.tol_metric;
  }
};

struct ExperimentConfig {
  std::string name;
  std::string description;
  std::string potential;
  std::string method;
  double tau = 0.0;  // step size; the maximal time step for grid methods
  std::optional<double> horizon;
  std::optional<std::int64_t> steps;
  std::optional<std::uint64_t> seed;
  int particles = 1;
  int workers = 1;
  int thin = 1;
  std::optional<double> ridge;
  std::optional<double> bandwidth;
  std::string mirror_map = "quadratic";
  InitSpec init;
  std::optional<GridSpec> grid;
  std::vector<double> snapshot_times;
  DiagnosticsSpec diagnostics;
  OutputSpec outputs;
  std::vector<Assertion> asserts;

  bool operator==(const ExperimentConfig&) const = default;

  /// Number of steps implied by `steps` or round(horizon / tau).
  std::int64_t step_count() const;
};

struct ConfigIssue {
  int line = 0;  // 0 when the issue is not tied to one line
  std::string field;
  std::string message;

  std::string to_string() const;
};

/// Every problem found while reading a config.
class ConfigError : public Error {
 public:
  explicit ConfigError(std::vector<ConfigIssue> issues);
  const std::vector<ConfigIssue>& issues() const noexcept { return issues_; }

 private:
  std::vector<ConfigIssue> issues_;
};

/// Values that replace the file's settings before validation.
struct ConfigOverrides {
  std::optional<std::uint64_t> seed;
  std::optional<int> workers;
};

/// Parses and validates the INI-style config text described in the README.
/// Unknown sections or keys, malformed values and missing required fields are
/// all collected and thrown together as one ConfigError.
ExperimentConfig parse_config(std::string_view text, const ConfigOverrides& overrides = {});

/// Inverse of parse_config: parse_config(serialize(c)) == c.
std::string serialize(const ExperimentConfig& c);

}  // namespace gradflow
