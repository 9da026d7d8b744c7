#include "gradflow/config.hpp"

#include <algorithm>
#include <cerrno>
#include <cmath>
#include <cstdlib>
#include <functional>
#include <map>
#include <set>
#include <sstream>

#include "gradflow/csv.hpp"
#include "gradflow/potentials.hpp"

namespace gradflow {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split(std::string_view s, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = s.find(sep, start);
    out.push_back(trim(s.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

std::optional<double> to_real(const std::string& s) {
  if (s.empty()) return std::nullopt;
  errno = 0;
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (end != s.c_str() + s.size() || errno == ERANGE || !std::isfinite(v)) return std::nullopt;
  return v;
}

std::optional<std::int64_t> to_int(const std::string& s) {
  if (s.empty()) return std::nullopt;
  errno = 0;
  char* end = nullptr;
  const long long v = std::strtoll(s.c_str(), &end, 10);
  if (end != s.c_str() + s.size() || errno == ERANGE) return std::nullopt;
  return v;
}

std::optional<std::uint64_t> to_uint(const std::string& s) {
  if (s.empty() || s[0] == '-' || s[0] == '+') return std::nullopt;
  errno = 0;
  char* end = nullptr;
  const unsigned long long v = std::strtoull(s.c_str(), &end, 10);
  if (end != s.c_str() + s.size() || errno == ERANGE) return std::nullopt;
  return v;
}

std::string join_reals(const std::vector<double>& v, const char* sep = ", ") {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += sep;
    out += csv::format_shortest(v[i]);
  }
  return out;
}

bool is_grid_method(const std::string& m) { return m == "fpe" || m == "fpe_weighted" || m == "fpe_bdl"; }

class Reader {
 public:
  std::vector<ConfigIssue> issues;

  void issue(int line, std::string field, std::string message) {
    issues.push_back({line, std::move(field), std::move(message)});
  }

  std::optional<double> real(int line, const std::string& field, const std::string& v) {
    auto r = to_real(v);
    if (!r) issue(line, field, "expected a finite number, got '" + v + "'");
    return r;
  }

  std::optional<std::int64_t> integer(int line, const std::string& field, const std::string& v) {
    auto r = to_int(v);
    if (!r) issue(line, field, "expected an integer, got '" + v + "'");
    return r;
  }

  std::optional<std::vector<double>> reals(int line, const std::string& field, const std::string& v) {
    std::vector<double> out;
    if (v.empty()) return out;
    for (const auto& part : split(v, ',')) {
      auto r = to_real(part);
      if (!r) {
        issue(line, field, "expected a comma-separated list of numbers, got '" + v + "'");
        return std::nullopt;
      }
      out.push_back(*r);
    }
    return out;
  }
};

std::optional<Assertion> parse_assertion(Reader& rd, int line, const std::string& metric, const std::string& expr) {
  std::istringstream in(expr);
  std::vector<std::string> tok;
  for (std::string t; in >> t;) tok.push_back(t);
  const std::string field = "assert." + metric;
  Assertion a;
  a.metric = metric;
  a.line = line;
  static const std::set<std::string> cmp = {"<", "<=", ">", ">=", "=="};
  if (tok.size() == 2 && cmp.count(tok[0])) {
    auto v = to_real(tok[1]);
    if (!v) {
      rd.issue(line, field, "expected a number after '" + tok[0] + "', got '" + tok[1] + "'");
      return std::nullopt;
    }
    a.op = tok[0];
    a.value = *v;
    return a;
  }
  if (tok.size() == 3 && tok[0] == "near") {
    auto target = to_real(tok[1]);
    if (!target) {
      rd.issue(line, field, "expected a target number after 'near', got '" + tok[1] + "'");
      return std::nullopt;
    }
    a.op = "near";
    a.value = *target;
    const auto star = tok[2].find('*');
    std::string scale = star == std::string::npos ? tok[2] : tok[2].substr(0, star);
    if (star == std::string::npos) {
      if (auto s = to_real(scale)) {
        a.tol_scale = *s;
      } else {
        a.tol_scale = 1.0;
        a.tol_metric = tok[2];
      }
    } else {
      auto s = to_real(scale);
      a.tol_metric = tok[2].substr(star + 1);
      if (!s || a.tol_metric.empty()) {
        rd.issue(line, field, "tolerance must be a number, a metric name, or <number>*<metric>");
        return std::nullopt;
      }
      a.tol_scale = *s;
    }
    if (!(a.tol_scale >= 0)) {
      rd.issue(line, field, "tolerance must be nonnegative");
      return std::nullopt;
    }
    return a;
  }
  rd.issue(line, field, "expected '<op> <number>' with op in <, <=, >, >=, == or 'near <target> <tolerance>', got '" +
                            expr + "'");
  return std::nullopt;
}

using Setter = std::function<void(Reader&, int, const std::string&, ExperimentConfig&)>;

std::map<std::string, std::map<std::string, Setter>> key_table() {
  std::map<std::string, std::map<std::string, Setter>> t;
  auto str = [](std::string ExperimentConfig::*m) {
    return Setter([m](Reader&, int, const std::string& v, ExperimentConfig& c) { c.*m = v; });
  };
  auto real_opt = [](std::optional<double> ExperimentConfig::*m, const char* f) {
    return Setter([m, f](Reader& rd, int l, const std::string& v, ExperimentConfig& c) {
      if (auto r = rd.real(l, f, v)) c.*m = *r;
    });
  };
  auto int_field = [](auto setter, const char* f) {
    return Setter([setter, f](Reader& rd, int l, const std::string& v, ExperimentConfig& c) {
      if (auto r = rd.integer(l, f, v)) setter(c, *r);
    });
  };

  t["experiment"]["name"] = str(&ExperimentConfig::name);
  t["experiment"]["description"] = str(&ExperimentConfig::description);
  t["problem"]["potential"] = str(&ExperimentConfig::potential);

  auto& m = t["method"];
  m["name"] = str(&ExperimentConfig::method);
  auto step = [](Reader& rd, int l, const std::string& v, ExperimentConfig& c) {
    if (auto r = rd.real(l, "method.tau", v)) c.tau = *r;
  };
  m["tau"] = step;
  m["dt"] = step;
  m["horizon"] = real_opt(&ExperimentConfig::horizon, "method.horizon");
  m["steps"] = int_field([](ExperimentConfig& c, std::int64_t v) { c.steps = v; }, "method.steps");
  m["seed"] = [](Reader& rd, int l, const std::string& v, ExperimentConfig& c) {
    if (auto r = to_uint(v)) {
      c.seed = *r;
    } else {
      rd.issue(l, "method.seed", "expected a nonnegative 64-bit integer, got '" + v + "'");
    }
  };
  m["particles"] = int_field([](ExperimentConfig& c, std::int64_t v) { c.particles = static_cast<int>(v); },
                             "method.particles");
  m["workers"] = int_field([](ExperimentConfig& c, std::int64_t v) { c.workers = static_cast<int>(v); },
                           "method.workers");
  m["thin"] = int_field([](ExperimentConfig& c, std::int64_t v) { c.thin = static_cast<int>(v); }, "method.thin");
  m["ridge"] = real_opt(&ExperimentConfig::ridge, "method.ridge");
  m["bandwidth"] = real_opt(&ExperimentConfig::bandwidth, "method.bandwidth");
  m["mirror_map"] = str(&ExperimentConfig::mirror_map);

  auto& in = t["init"];
  in["kind"] = [](Reader&, int, const std::string& v, ExperimentConfig& c) { c.init.kind = v; };
  in["points"] = [](Reader& rd, int l, const std::string& v, ExperimentConfig& c) {
    c.init.points.clear();
    for (const auto& p : split(v, ';')) {
      auto r = rd.reals(l, "init.points", p);
      if (!r) return;
      if (r->empty()) {
        rd.issue(l, "init.points", "empty point in '" + v + "'");
        return;
      }
      c.init.points.push_back(*r);
    }
  };
  in["mean"] = [](Reader& rd, int l, const std::string& v, ExperimentConfig& c) {
    if (auto r = rd.reals(l, "init.mean", v)) c.init.mean = *r;
  };
  in["variance"] = [](Reader& rd, int l, const std::string& v, ExperimentConfig& c) {
    if (auto r = rd.reals(l, "init.variance", v)) c.init.variance = *r;
  };

  auto& g = t["grid"];
  auto grid = [](ExperimentConfig& c) -> GridSpec& {
    if (!c.grid) c.grid = GridSpec{};
    return *c.grid;
  };
  g["lo"] = [grid](Reader& rd, int l, const std::string& v, ExperimentConfig& c) {
    if (auto r = rd.real(l, "grid.lo", v)) grid(c).lo = *r;
  };
  g["hi"] = [grid](Reader& rd, int l, const std::string& v, ExperimentConfig& c) {
    if (auto r = rd.real(l, "grid.hi", v)) grid(c).hi = *r;
  };
  g["n"] = int_field([grid](ExperimentConfig& c, std::int64_t v) { grid(c).n = static_cast<int>(v); }, "grid.n");
  g["refine"] =
      int_field([grid](ExperimentConfig& c, std::int64_t v) { grid(c).refine = static_cast<int>(v); }, "grid.refine");
  g["layout"] = [grid](Reader&, int, const std::string& v, ExperimentConfig& c) { grid(c).layout = v; };
  g["reference"] = [grid](Reader&, int, const std::string& v, ExperimentConfig& c) { grid(c).reference = v; };

  t["snapshots"]["times"] = [](Reader& rd, int l, const std::string& v, ExperimentConfig& c) {
    if (auto r = rd.reals(l, "snapshots.times", v)) c.snapshot_times = *r;
  };

  auto& d = t["diagnostics"];
  d["longrun_burn_in"] =
      int_field([](ExperimentConfig& c, std::int64_t v) { c.diagnostics.longrun_burn_in = v; }, "diagnostics.longrun_burn_in");
  d["longrun_every"] =
      int_field([](ExperimentConfig& c, std::int64_t v) { c.diagnostics.longrun_every = v; }, "diagnostics.longrun_every");
  d["iat_burn_in"] =
      int_field([](ExperimentConfig& c, std::int64_t v) { c.diagnostics.iat_burn_in = v; }, "diagnostics.iat_burn_in");
  d["iat_every"] =
      int_field([](ExperimentConfig& c, std::int64_t v) { c.diagnostics.iat_every = v; }, "diagnostics.iat_every");
  d["iat_particles"] = int_field(
      [](ExperimentConfig& c, std::int64_t v) { c.diagnostics.iat_particles = static_cast<int>(v); },
      "diagnostics.iat_particles");

  auto& o = t["outputs"];
  auto out = [](std::string OutputSpec::*f) {
    return Setter([f](Reader&, int, const std::string& v, ExperimentConfig& c) { c.outputs.*f = v; });
  };
  o["dir"] = out(&OutputSpec::dir);
  o["trajectory"] = out(&OutputSpec::trajectory);
  o["histogram"] = out(&OutputSpec::histogram);
  o["density"] = out(&OutputSpec::density);
  o["samples"] = out(&OutputSpec::samples);
  o["metrics"] = out(&OutputSpec::metrics);
  o["rates"] = out(&OutputSpec::rates);
  o["decay"] = out(&OutputSpec::decay);
  o["target"] = out(&OutputSpec::target);
  return t;
}

// Checks that need the whole config.
void validate(Reader& rd, ExperimentConfig& c, const std::map<std::string, int>& lines) {
  auto line_of = [&](const std::string& key) {
    auto it = lines.find(key);
    return it == lines.end() ? 0 : it->second;
  };
  auto bad = [&](const std::string& key, const std::string& msg) { rd.issue(line_of(key), key, msg); };

  if (c.name.empty()) c.name = "experiment";
  if (c.outputs.dir.empty()) c.outputs.dir = c.name;

  int dim = 0;
  if (c.potential.empty()) {
    bad("problem.potential", "required field is missing");
  } else {
    try {
      dim = potential_from_id(c.potential).dim();
    } catch (const Error& e) {
      bad("problem.potential", e.what());
    }
  }

  std::optional<MethodKind> kind;
  if (c.method.empty()) {
    bad("method.name", "required field is missing");
  } else {
    try {
      kind = method_kind(c.method);
    } catch (const Error& e) {
      bad("method.name", e.what());
    }
  }

  if (lines.count("method.tau") && lines.count("method.dt")) bad("method.dt", "give either tau or dt, not both");
  if (kind == MethodKind::grid) {
    if (lines.count("method.tau")) bad("method.tau", "grid methods take 'dt' (maximal time step), not 'tau'");
    if (c.tau < 0 || (lines.count("method.dt") && !(c.tau > 0))) bad("method.dt", "must be positive");
  } else if (kind) {
    if (lines.count("method.dt")) bad("method.dt", "method " + c.method + " takes 'tau', not 'dt'");
    if (!lines.count("method.tau") && !lines.count("method.dt")) {
      bad("method.tau", "required field is missing");
    } else if (!(c.tau > 0)) {
      bad("method.tau", "must be positive");
    }
  }

  if (c.horizon && !(*c.horizon > 0)) bad("method.horizon", "must be positive");
  if (c.steps && *c.steps < 0) bad("method.steps", "must be nonnegative");
  if (c.horizon && c.steps) bad("method.steps", "give either steps or horizon, not both");
  if (c.particles < 1) bad("method.particles", "must be at least 1");
  if (c.workers < 1) bad("method.workers", "must be at least 1");
  if (c.thin < 1) bad("method.thin", "must be at least 1");
  if (c.ridge && !(*c.ridge >= 0)) bad("method.ridge", "must be nonnegative");
  if (c.bandwidth && !(*c.bandwidth > 0)) bad("method.bandwidth", "must be positive");
  if (c.mirror_map != "quadratic" && c.mirror_map != "negative_entropy") {
    bad("method.mirror_map", "unknown mirror map '" + c.mirror_map + "' (quadratic, negative_entropy)");
  }

  for (std::size_t i = 1; i < c.snapshot_times.size(); ++i) {
    if (!(c.snapshot_times[i] > c.snapshot_times[i - 1])) {
      bad("snapshots.times", "times must be strictly increasing");
      break;
    }
  }
  if (!c.snapshot_times.empty() && c.snapshot_times.front() < 0) bad("snapshots.times", "times must be nonnegative");

  // Init.
  const auto& ik = c.init.kind;
  if (ik != "points" && ik != "gaussian" && ik != "gibbs") {
    bad("init.kind", "unknown kind '" + ik + "' (points, gaussian, gibbs)");
  } else if (ik == "points") {
    if (c.init.points.empty()) bad("init.points", "required field is missing for init kind 'points'");
    for (const auto& p : c.init.points) {
      if (dim > 0 && static_cast<int>(p.size()) != dim) {
        bad("init.points", "every point needs " + std::to_string(dim) + " coordinates");
        break;
      }
    }
  } else if (ik == "gaussian") {
    if (c.init.mean.empty()) bad("init.mean", "required field is missing for init kind 'gaussian'");
    if (c.init.variance.empty()) bad("init.variance", "required field is missing for init kind 'gaussian'");
    if (dim > 0 && !c.init.mean.empty() && static_cast<int>(c.init.mean.size()) != dim) {
      bad("init.mean", "needs " + std::to_string(dim) + " entries");
    }
    if (dim > 0 && !c.init.variance.empty() && static_cast<int>(c.init.variance.size()) != dim) {
      bad("init.variance", "needs " + std::to_string(dim) + " entries");
    }
    for (double v : c.init.variance) {
      if (!(v > 0)) {
        bad("init.variance", "variances must be positive");
        break;
      }
    }
  }

  if (c.grid) {
    const auto& g = *c.grid;
    if (!(g.hi > g.lo)) bad("grid.hi", "must exceed grid.lo");
    if (g.n < 2) bad("grid.n", "must be at least 2");
    if (g.layout != "cells" && g.layout != "nodes") bad("grid.layout", "unknown layout '" + g.layout + "' (cells, nodes)");
    if (g.refine < 1) bad("grid.refine", "must be at least 1");
    if (g.refine > 1 && g.layout != "cells") bad("grid.refine", "refinement needs the cells layout");
    if (g.reference != "none" && !is_grid_method(g.reference)) {
      bad("grid.reference", "unknown reference '" + g.reference + "' (none, fpe, fpe_weighted, fpe_bdl)");
    }
    if (dim > 1) bad("grid.n", "grids are one-dimensional but the potential has dimension " + std::to_string(dim));
  }

  const auto& o = c.outputs;
  auto only_for = [&](const std::string& value, const std::string& key, bool allowed, const std::string& why) {
    if (!value.empty() && !allowed) bad(key, why);
  };
  const bool has_ref = c.grid && c.grid->reference != "none";

  if (kind == MethodKind::flow) {
    if (c.init.kind != "points") bad("init.kind", "flow methods start from explicit points");
    if (!c.steps && !c.horizon) bad("method.steps", "give steps or horizon");
    if (c.grid) bad("grid.n", "flow methods do not use a grid");
    if (!c.snapshot_times.empty()) bad("snapshots.times", "flow methods record every step; remove snapshots");
    if (c.mirror_map == "negative_entropy" && c.method == "mirror") {
      for (const auto& p : c.init.points) {
        if (std::any_of(p.begin(), p.end(), [](double x) { return !(x > 0); })) {
          bad("init.points", "negative_entropy mirror map needs positive starting points");
          break;
        }
      }
    }
  } else if (kind == MethodKind::sampler) {
    if (!c.seed) bad("method.seed", "required for stochastic method " + c.method);
    if (c.init.kind == "gibbs") bad("init.kind", "particle methods start from 'points' or 'gaussian'");
    if (!c.steps && !c.horizon && c.snapshot_times.empty()) bad("method.steps", "give steps, horizon or snapshot times");
    if ((c.method == "ensemble" || c.method == "bdl") && c.particles < 2) {
      bad("method.particles", "interacting methods need at least 2 particles");
    }
    if (c.steps && !c.snapshot_times.empty() && kind) {
      const double end = static_cast<double>(*c.steps) * c.tau;
      if (c.snapshot_times.back() > end * (1 + 1e-12)) bad("snapshots.times", "snapshot after the last step");
    }
    if (c.horizon && !c.snapshot_times.empty() && c.snapshot_times.back() > *c.horizon * (1 + 1e-12)) {
      bad("snapshots.times", "snapshot after the horizon");
    }
    if (c.tau > 0) {
      for (double t : c.snapshot_times) {
        const double k = t / c.tau;
        if (std::abs(k - std::round(k)) > 1e-9 * std::max(1.0, k)) {
          bad("snapshots.times", "time " + csv::format_shortest(t) + " is not a multiple of tau");
          break;
        }
      }
    }
    const auto& dg = c.diagnostics;
    if (dg.longrun_every < 0 || dg.longrun_burn_in < 0) bad("diagnostics.longrun_every", "must be nonnegative");
    if (dg.iat_every < 0 || dg.iat_burn_in < 0 || dg.iat_particles < 0) bad("diagnostics.iat_every", "must be nonnegative");
    if (c.grid && c.grid->reference != "none" && c.init.kind == "points") {
      bad("grid.reference", "a reference solve needs a gaussian initial density");
    }
  } else if (kind == MethodKind::grid) {
    if (!c.grid) bad("grid.n", "grid methods need a [grid] section");
    if (c.snapshot_times.empty()) bad("snapshots.times", "grid methods need output times");
    if (c.steps) bad("method.steps", "grid methods run to the output times; remove steps");
    if (c.init.kind == "points") bad("init.kind", "grid methods start from 'gaussian' or 'gibbs'");
    if (c.grid && c.grid->refine != 1) bad("grid.refine", "refinement applies to particle methods only");
    if (dim > 1) bad("problem.potential", "grid methods need a one-dimensional potential");
  }
  if (kind != MethodKind::sampler) {
    const auto& dg = c.diagnostics;
    if (dg.longrun_every || dg.longrun_burn_in || dg.iat_every || dg.iat_burn_in || dg.iat_particles) {
      bad("diagnostics.longrun_every", "diagnostics apply to particle methods only");
    }
  }

  if (kind) {
    only_for(o.trajectory, "outputs.trajectory", kind == MethodKind::flow, "trajectories come from flow methods");
    only_for(o.rates, "outputs.rates", kind == MethodKind::flow, "rate reports come from flow methods");
    only_for(o.samples, "outputs.samples", kind == MethodKind::sampler, "samples come from particle methods");
    only_for(o.histogram, "outputs.histogram", kind == MethodKind::sampler && c.grid.has_value(),
             "histograms need a particle method and a [grid]");
    only_for(o.density, "outputs.density", kind == MethodKind::grid || has_ref,
             "densities come from grid methods or a reference solve");
    only_for(o.decay, "outputs.decay", kind == MethodKind::grid, "decay reports come from grid methods");
    only_for(o.target, "outputs.target", c.grid.has_value(), "the target density needs a [grid]");
  }
  for (const auto& [key, value] :
       {std::pair{"outputs.trajectory", &o.trajectory}, std::pair{"outputs.histogram", &o.histogram},
        std::pair{"outputs.density", &o.density}, std::pair{"outputs.samples", &o.samples},
        std::pair{"outputs.metrics", &o.metrics}, std::pair{"outputs.rates", &o.rates},
        std::pair{"outputs.decay", &o.decay}, std::pair{"outputs.target", &o.target}}) {
    if (value->find('/') != std::string::npos || *value == "." || *value == "..") {
      bad(key, "file names must not contain directories");
    }
  }
  if (o.dir.find("..") != std::string::npos) bad("outputs.dir", "must not leave the output root");
}

}  // namespace

const std::vector<std::string>& known_methods() {
  static const std::vector<std::string> m = {"gd",  "gd_implicit", "newton", "bfgs", "mirror",       "ula",
                                             "mala", "ensemble",   "bdl",    "fpe",  "fpe_weighted", "fpe_bdl"};
  return m;
}

MethodKind method_kind(const std::string& method) {
  if (method == "gd" || method == "gd_implicit" || method == "newton" || method == "bfgs" || method == "mirror") {
    return MethodKind::flow;
  }
  if (method == "ula" || method == "mala" || method == "ensemble" || method == "bdl") return MethodKind::sampler;
  if (is_grid_method(method)) return MethodKind::grid;
  std::string all;
  for (const auto& m : known_methods()) all += (all.empty() ? "" : ", ") + m;
  throw InvalidParameter("unknown method '" + method + "' (" + all + ")");
}

std::int64_t ExperimentConfig::step_count() const {
  if (steps) return *steps;
  const double end = horizon.value_or(snapshot_times.empty() ? 0.0 : snapshot_times.back());
  return tau > 0 ? static_cast<std::int64_t>(std::llround(end / tau)) : 0;
}

std::string Assertion::expression() const {
  if (op != "near") return op + " " + csv::format_shortest(value);
  std::string tol = tol_metric.empty() ? csv::format_shortest(tol_scale)
                    : tol_scale == 1.0 ? tol_metric
                                       : csv::format_shortest(tol_scale) + "*" + tol_metric;
  return "near " + csv::format_shortest(value) + " " + tol;
}

std::string ConfigIssue::to_string() const {
  std::string s;
  if (line > 0) s += "line " + std::to_string(line) + ": ";
  if (!field.empty()) s += field + ": ";
  return s + message;
}

namespace {

std::string join_issues(const std::vector<ConfigIssue>& issues) {
  std::string s = "invalid config (" + std::to_string(issues.size()) + " problem" + (issues.size() == 1 ? "" : "s") + ")";
  for (const auto& i : issues) s += "\n  " + i.to_string();
  return s;
}

}  // namespace

ConfigError::ConfigError(std::vector<ConfigIssue> issues) : Error(join_issues(issues)), issues_(std::move(issues)) {}

ExperimentConfig parse_config(std::string_view text, const ConfigOverrides& overrides) {
  static const auto table = key_table();
  Reader rd;
  ExperimentConfig c;
  std::map<std::string, int> seen;  // "section.key" → line
  std::string section;
  bool section_known = false;
  int line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto nl = text.find('\n', pos);
    const std::string_view raw = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
    pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
    ++line_no;
    std::string line = trim(raw.substr(0, raw.find('#')));
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') {
        rd.issue(line_no, "", "malformed section header '" + line + "'");
        section_known = false;
        continue;
      }
      section = trim(std::string_view(line).substr(1, line.size() - 2));
      section_known = section == "assert" || table.count(section);
      if (!section_known) rd.issue(line_no, section, "unknown section [" + section + "]");
      if (seen.count("[" + section + "]")) rd.issue(line_no, section, "section [" + section + "] appears twice");
      seen["[" + section + "]"] = line_no;
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      rd.issue(line_no, "", "expected 'key = value', got '" + line + "'");
      continue;
    }
    const std::string key = trim(std::string_view(line).substr(0, eq));
    const std::string value = trim(std::string_view(line).substr(eq + 1));
    if (section.empty()) {
      rd.issue(line_no, key, "key outside of any section");
      continue;
    }
    if (!section_known) continue;  // already reported
    const std::string full = section + "." + key;
    if (key.empty()) {
      rd.issue(line_no, section, "empty key");
      continue;
    }
    if (seen.count(full)) {
      rd.issue(line_no, full, "duplicate key (first set on line " + std::to_string(seen[full]) + ")");
      continue;
    }
    seen[full] = line_no;
    if (section == "assert") {
      if (auto a = parse_assertion(rd, line_no, key, value)) c.asserts.push_back(*a);
      continue;
    }
    const auto& keys = table.at(section);
    auto it = keys.find(key);
    if (it == keys.end()) {
      std::string known;
      for (const auto& [k, _] : keys) known += (known.empty() ? "" : ", ") + k;
      rd.issue(line_no, full, "unknown key (allowed in [" + section + "]: " + known + ")");
      continue;
    }
    it->second(rd, line_no, value, c);
  }
  if (overrides.seed) c.seed = overrides.seed;
  if (overrides.workers) c.workers = *overrides.workers;
  validate(rd, c, seen);
  if (!rd.issues.empty()) throw ConfigError(std::move(rd.issues));
  return c;
}

std::string serialize(const ExperimentConfig& c) {
  std::ostringstream o;
  auto kv = [&](const char* k, const std::string& v) { o << k << " = " << v << '\n'; };
  auto real = [](double v) { return csv::format_shortest(v); };

  o << "[experiment]\n";
  kv("name", c.name);
  if (!c.description.empty()) kv("description", c.description);
  o << "\n[problem]\n";
  kv("potential", c.potential);

  o << "\n[method]\n";
  kv("name", c.method);
  const bool grid_method = is_grid_method(c.method);
  if (grid_method) {
    if (c.tau > 0) kv("dt", real(c.tau));
  } else {
    kv("tau", real(c.tau));
  }
  if (c.horizon) kv("horizon", real(*c.horizon));
  if (c.steps) kv("steps", std::to_string(*c.steps));
  if (c.seed) kv("seed", std::to_string(*c.seed));
  kv("particles", std::to_string(c.particles));
  kv("workers", std::to_string(c.workers));
  kv("thin", std::to_string(c.thin));
  if (c.ridge) kv("ridge", real(*c.ridge));
  if (c.bandwidth) kv("bandwidth", real(*c.bandwidth));
  kv("mirror_map", c.mirror_map);

  o << "\n[init]\n";
  kv("kind", c.init.kind);
  if (!c.init.points.empty()) {
    std::string pts;
    for (std::size_t i = 0; i < c.init.points.size(); ++i) {
      if (i) pts += "; ";
      pts += join_reals(c.init.points[i]);
    }
    kv("points", pts);
  }
  if (!c.init.mean.empty()) kv("mean", join_reals(c.init.mean));
  if (!c.init.variance.empty()) kv("variance", join_reals(c.init.variance));

  if (c.grid) {
    o << "\n[grid]\n";
    kv("lo", real(c.grid->lo));
    kv("hi", real(c.grid->hi));
    kv("n", std::to_string(c.grid->n));
    kv("layout", c.grid->layout);
    kv("refine", std::to_string(c.grid->refine));
    kv("reference", c.grid->reference);
  }
  if (!c.snapshot_times.empty()) {
    o << "\n[snapshots]\n";
    kv("times", join_reals(c.snapshot_times));
  }
  if (c.diagnostics != DiagnosticsSpec{}) {
    const auto& d = c.diagnostics;
    o << "\n[diagnostics]\n";
    kv("longrun_burn_in", std::to_string(d.longrun_burn_in));
    kv("longrun_every", std::to_string(d.longrun_every));
    kv("iat_burn_in", std::to_string(d.iat_burn_in));
    kv("iat_every", std::to_string(d.iat_every));
    kv("iat_particles", std::to_string(d.iat_particles));
  }

  o << "\n[outputs]\n";
  kv("dir", c.outputs.dir);
  const std::pair<const char*, const std::string*> files[] = {
      {"trajectory", &c.outputs.trajectory}, {"histogram", &c.outputs.histogram}, {"density", &c.outputs.density},
      {"samples", &c.outputs.samples},       {"metrics", &c.outputs.metrics},     {"rates", &c.outputs.rates},
      {"decay", &c.outputs.decay},           {"target", &c.outputs.target}};
  for (const auto& [k, v] : files) kv(k, *v);

  if (!c.asserts.empty()) {
    o << "\n[assert]\n";
    for (const auto& a : c.asserts) o << a.metric << " = " << a.expression() << '\n';
  }
  return o.str();
}

}  // namespace gradflow
