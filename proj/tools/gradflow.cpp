// Command-line front end: run, validate, compare, list-potentials.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "gradflow/config.hpp"
#include "gradflow/csv.hpp"
#include "gradflow/experiment.hpp"
#include "gradflow/potentials.hpp"

namespace {

using namespace gradflow;

// A config file, or a manifest.json whose echoed config is rerun.
std::string read_config_text(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InvalidParameter("cannot open '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  std::string text = ss.str();
  const auto first = text.find_first_not_of(" \t\r\n");
  if (first != std::string::npos && text[first] == '{') {
    const auto j = nlohmann::json::parse(text, nullptr, false);
    if (j.is_discarded() || !j.contains("config") || !j["config"].is_string()) {
      throw InvalidParameter("'" + path + "' is JSON but not a gradflow manifest");
    }
    return j["config"].get<std::string>();
  }
  return text;
}

ConfigOverrides overrides(const std::optional<std::uint64_t>& seed, const std::optional<int>& workers) {
  ConfigOverrides o;
  o.seed = seed;
  o.workers = workers;
  return o;
}

int cmd_validate(const std::string& path, const ConfigOverrides& o) {
  try {
    const auto c = parse_config(read_config_text(path), o);
    std::cout << "ok: " << c.name << " (" << c.method << " on " << c.potential << ")\n";
    return exit_code::ok;
  } catch (const ConfigError& e) {
    std::cerr << path << ": " << e.what() << '\n';
  } catch (const Error& e) {
    std::cerr << path << ": " << e.what() << '\n';
  }
  return exit_code::config_error;
}

int cmd_run(const std::string& path, const ConfigOverrides& o, bool quiet) {
  ExperimentConfig c;
  try {
    c = parse_config(read_config_text(path), o);
  } catch (const Error& e) {
    std::cerr << path << ": " << e.what() << '\n';
    return exit_code::config_error;
  }
  RunOptions ro;
  ro.output_root = output_root_from_env();
  const RunReport rep = run_experiment(c, ro);
  if (!quiet) {
    for (const auto& [k, v] : rep.metrics) std::cout << k << " = " << csv::format_real(v) << '\n';
    for (const auto& a : rep.assertions) std::cout << (a.passed ? "PASS " : "FAIL ") << a.message << '\n';
    std::cout << "artifacts in " << rep.output_dir.string() << " (" << rep.wall_seconds << " s)\n";
  }
  if (rep.exit_code != exit_code::ok) std::cerr << "error: " << rep.error << '\n';
  return rep.exit_code;
}

int cmd_compare(const std::string& a, const std::string& b, const std::string& metric) {
  try {
    const double v = compare_files(a, b, parse_compare_metric(metric));
    std::printf("%.17g\n", v);
    return exit_code::ok;
  } catch (const InvalidParameter& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_code::config_error;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_code::runtime_error;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"gradflow: gradient-flow optimization and sampling experiments"};
  app.require_subcommand(1);
  app.set_version_flag("--version", gradflow::kVersion);

  std::optional<std::uint64_t> seed;
  std::optional<int> workers;
  bool quiet = false;

  std::string run_path;
  auto* run = app.add_subcommand("run", "Run an experiment config (or rerun a manifest.json)");
  run->add_option("config", run_path, "Config file")->required();
  run->add_option("--seed", seed, "Override the config's seed");
  run->add_option("--workers", workers, "Override the worker count")->check(CLI::PositiveNumber);
  run->add_flag("-q,--quiet", quiet, "Print only errors");

  std::string validate_path;
  auto* validate = app.add_subcommand("validate", "Check a config without running it");
  validate->add_option("config", validate_path, "Config file")->required();
  validate->add_option("--seed", seed, "Override the config's seed");

  std::string file_a, file_b, metric = "tv";
  auto* compare = app.add_subcommand("compare", "Print a distance between two CSV artifacts");
  compare->add_option("a", file_a, "First file")->required();
  compare->add_option("b", file_b, "Second file")->required();
  compare->add_option("--metric,-m", metric, "kl, tv, l2pinv or w2")->capture_default_str();

  auto* list = app.add_subcommand("list-potentials", "List potential identifiers");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : exit_code::config_error;
  }

  if (*run) return cmd_run(run_path, overrides(seed, workers), quiet);
  if (*validate) return cmd_validate(validate_path, overrides(seed, std::nullopt));
  if (*compare) return cmd_compare(file_a, file_b, metric);
  if (*list) {
    for (const auto& [id, desc] : potential_catalog()) std::cout << id << "\t" << desc << '\n';
    return exit_code::ok;
  }
  return exit_code::config_error;
}
