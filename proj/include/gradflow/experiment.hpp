#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "gradflow/config.hpp"

namespace gradflow {

inline constexpr const char* kVersion = "0.1.0";

/// Process exit codes shared by the CLI and run_experiment.
namespace exit_code {
inline constexpr int ok = 0;
inline constexpr int config_error = 2;
inline constexpr int runtime_error = 3;
inline constexpr int assertion_failed = 4;
}  // namespace exit_code

struct AssertionResult {
  Assertion assertion;
  bool passed = false;
  /// NaN when the metric was not produced.
  double actual = 0.0;
  std::string message;
};

struct RunOptions {
  /// Artifacts go to output_root / config.outputs.dir.
  std::filesystem::path output_root = ".";
  bool write_manifest = true;
};

struct RunReport {
  int exit_code = exit_code::ok;
  std::string error;
  std::vector<std::pair<std::string, double>> metrics;
  std::vector<std::filesystem::path> artifacts;
  std::vector<AssertionResult> assertions;
  std::filesystem::path output_dir;
  double wall_seconds = 0.0;

  std::optional<double> metric(const std::string& name) const;
};

/// $GRADFLOW_OUTPUT_ROOT when set and non-empty, otherwise the working
/// directory.
std::filesystem::path output_root_from_env();

/// Runs one experiment: builds the potential and method, writes the declared
/// artifacts plus manifest.json, and evaluates the [assert] section. Library
/// errors are caught and reported through exit_code / error, never thrown.
RunReport run_experiment(const ExperimentConfig& c, const RunOptions& opts = {});

/// Metric names for a snapshot time, e.g. "tv_pi@0.25".
std::string metric_at(const std::string& base, double t);

enum class CompareMetric { kl, tv, l2pinv, w2 };

/// Parses "kl", "tv", "l2pinv" or "w2". Throws InvalidParameter otherwise.
CompareMetric parse_compare_metric(const std::string& name);

/// Compares two CSV artifacts. Density files (x,value) support every metric;
/// sample files (theta_0 column; the last recorded step is used) support w2
/// only. Throws GridMismatch for densities on different grids.
double compare_files(const std::string& a, const std::string& b, CompareMetric m);

}  // namespace gradflow
