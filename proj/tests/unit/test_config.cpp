#include <algorithm>
#include <string>

#include <gtest/gtest.h>

#include "gradflow/config.hpp"

using namespace gradflow;

namespace {

const char* kUla = R"(# comment line
[experiment]
name = fig3
description = ULA on the double well

[problem]
potential = double_well

[method]
name = ula
tau = 0.01   # trailing comment
seed = 7
particles = 1000

[init]
kind = gaussian
mean = 0.1
variance = 0.01

[grid]
lo = -3
hi = 3
n = 120

[snapshots]
times = 0.25, 0.5, 50

[outputs]
histogram = histogram_{t}.csv
samples = samples.csv

[assert]
tv_pi@50 = < 0.05
longrun_var_0 = near 1.1111 3*longrun_var_se_0
mean_0@50 = near 0 0.1
)";

bool has_issue(const ConfigError& e, const std::string& field, int line = -1) {
  return std::any_of(e.issues().begin(), e.issues().end(), [&](const ConfigIssue& i) {
    return i.field == field && (line < 0 || i.line == line);
  });
}

ConfigError error_of(const std::string& text, const ConfigOverrides& o = {}) {
  try {
    parse_config(text, o);
  } catch (const ConfigError& e) {
    return e;
  }
  ADD_FAILURE() << "config unexpectedly valid:\n" << text;
  return ConfigError({});
}

}  // namespace

TEST(Config, ParsesFields) {
  const auto c = parse_config(kUla);
  EXPECT_EQ(c.name, "fig3");
  EXPECT_EQ(c.method, "ula");
  EXPECT_DOUBLE_EQ(c.tau, 0.01);
  EXPECT_EQ(*c.seed, 7u);
  EXPECT_EQ(c.particles, 1000);
  EXPECT_EQ(c.init.kind, "gaussian");
  ASSERT_TRUE(c.grid.has_value());
  EXPECT_EQ(c.grid->n, 120);
  EXPECT_EQ(c.snapshot_times, (std::vector<double>{0.25, 0.5, 50}));
  EXPECT_EQ(c.outputs.dir, "fig3");
  EXPECT_EQ(c.outputs.metrics, "metrics.csv");
  ASSERT_EQ(c.asserts.size(), 3u);
  EXPECT_EQ(c.asserts[0].metric, "tv_pi@50");
  EXPECT_EQ(c.asserts[0].op, "<");
  EXPECT_EQ(c.asserts[1].op, "near");
  EXPECT_DOUBLE_EQ(c.asserts[1].tol_scale, 3.0);
  EXPECT_EQ(c.asserts[1].tol_metric, "longrun_var_se_0");
  EXPECT_EQ(c.asserts[2].tol_metric, "");
  EXPECT_EQ(c.step_count(), 5000);
}

TEST(Config, RoundTrip) {
  const auto c = parse_config(kUla);
  const auto text = serialize(c);
  EXPECT_EQ(parse_config(text), c);
  EXPECT_EQ(serialize(parse_config(text)), text);
}

TEST(Config, RoundTripFlowAndGrid) {
  const char* flow = R"([problem]
potential = quadratic:0.05,1
[method]
name = gd
tau = 0.5
steps = 500
[init]
points = 10, 10; -3, 7
[outputs]
trajectory = trajectory_{i}.csv
)";
  const char* grid = R"([problem]
potential = quadratic:0.5
[method]
name = fpe
[init]
kind = gaussian
mean = 0
variance = 4
[grid]
lo = -8
hi = 8
n = 1601
layout = nodes
[snapshots]
times = 0.5, 1
)";
  for (const char* t : {flow, grid}) {
    const auto c = parse_config(t);
    EXPECT_EQ(parse_config(serialize(c)), c) << serialize(c);
  }
  const auto g = parse_config(grid);
  EXPECT_EQ(g.tau, 0.0);
  EXPECT_EQ(g.grid->layout, "nodes");
  EXPECT_EQ(parse_config(flow).init.points[1], (std::vector<double>{-3, 7}));
}

TEST(Config, SamplersNeedSeed) {
  std::string t = kUla;
  t.erase(t.find("seed = 7\n"), 9);
  const auto e = error_of(t);
  EXPECT_TRUE(has_issue(e, "method.seed"));
  ConfigOverrides o;
  o.seed = 99;
  EXPECT_EQ(*parse_config(t, o).seed, 99u);
}

TEST(Config, OverridesReplaceFileValues) {
  ConfigOverrides o;
  o.seed = 3;
  o.workers = 4;
  const auto c = parse_config(kUla, o);
  EXPECT_EQ(*c.seed, 3u);
  EXPECT_EQ(c.workers, 4);
}

TEST(Config, UnknownKeyAndSectionWithLines) {
  const std::string t = std::string(kUla) + "[bogus]\nx = 1\n";
  std::string u = kUla;
  u.insert(u.find("particles"), "bandwith = 0.3\n");
  const auto e1 = error_of(t);
  EXPECT_TRUE(has_issue(e1, "bogus"));
  const auto e2 = error_of(u);
  EXPECT_TRUE(has_issue(e2, "method.bandwith", 13));
}

TEST(Config, CollectsEveryProblem) {
  const char* t = R"([problem]
potential = not_a_potential
[method]
name = ula
tau = -1
particles = 0
[init]
kind = gaussian
[assert]
x = ~ 3
)";
  const auto e = error_of(t);
  EXPECT_TRUE(has_issue(e, "problem.potential", 2));
  EXPECT_TRUE(has_issue(e, "method.tau", 5));
  EXPECT_TRUE(has_issue(e, "method.particles", 6));
  EXPECT_TRUE(has_issue(e, "method.seed"));
  EXPECT_TRUE(has_issue(e, "init.mean"));
  EXPECT_TRUE(has_issue(e, "init.variance"));
  EXPECT_TRUE(has_issue(e, "assert.x", 10));
  EXPECT_GE(e.issues().size(), 7u);
  EXPECT_NE(std::string(e.what()).find("line 5"), std::string::npos);
}

TEST(Config, MalformedValues) {
  const char* t = R"([problem]
potential = double_well
[method]
name = gd
tau = abc
steps = 1.5
[init]
points = 1; ; 2
)";
  const auto e = error_of(t);
  EXPECT_TRUE(has_issue(e, "method.tau", 5));
  EXPECT_TRUE(has_issue(e, "method.steps", 6));
  EXPECT_TRUE(has_issue(e, "init.points", 8));
}

TEST(Config, DuplicateKeysAndSections) {
  const std::string t = std::string(kUla) + "[method]\n";
  EXPECT_TRUE(has_issue(error_of(t), "method"));
  std::string u = kUla;
  u.insert(u.find("particles"), "tau = 0.02\n");
  EXPECT_TRUE(has_issue(error_of(u), "method.tau"));
}

TEST(Config, CrossFieldRules) {
  // Snapshot time not on the step lattice.
  std::string t = kUla;
  t.replace(t.find("0.25, 0.5"), 9, "0.255, 0.5");
  EXPECT_TRUE(has_issue(error_of(t), "snapshots.times"));
  // Grid methods take dt, flows refuse gaussian starts, grids need 1-D.
  EXPECT_TRUE(has_issue(error_of("[problem]\npotential = double_well\n[method]\nname = fpe\ntau = 0.1\n"
                                 "[init]\nkind = gibbs\n[grid]\nlo = -1\nhi = 1\nn = 10\n[snapshots]\ntimes = 1\n"),
                        "method.tau"));
  EXPECT_TRUE(has_issue(error_of("[problem]\npotential = double_well\n[method]\nname = gd\ntau = 0.1\nsteps = 3\n"
                                 "[init]\nkind = gaussian\nmean = 0\nvariance = 1\n"),
                        "init.kind"));
  EXPECT_TRUE(has_issue(error_of("[problem]\npotential = quadratic:1,1\n[method]\nname = ula\ntau = 0.1\nseed = 1\n"
                                 "steps = 2\n[init]\npoints = 0, 0\n[grid]\nlo = -1\nhi = 1\nn = 10\n"),
                        "grid.n"));
}

TEST(Config, OutputsMustSuitMethod) {
  std::string t = kUla;
  t.insert(t.find("histogram ="), "trajectory = t.csv\n");
  EXPECT_TRUE(has_issue(error_of(t), "outputs.trajectory"));
}

TEST(Config, AssertionExpressions) {
  const auto c = parse_config(kUla);
  EXPECT_EQ(c.asserts[0].expression(), "< 0.05");
  EXPECT_EQ(c.asserts[1].expression(), "near 1.1111 3*longrun_var_se_0");
  EXPECT_EQ(c.asserts[2].expression(), "near 0 0.1");
}

TEST(Config, MethodCatalog) {
  for (const auto& m : known_methods()) EXPECT_NO_THROW(method_kind(m)) << m;
  EXPECT_EQ(method_kind("mala"), MethodKind::sampler);
  EXPECT_EQ(method_kind("fpe_bdl"), MethodKind::grid);
  EXPECT_EQ(method_kind("newton"), MethodKind::flow);
  EXPECT_THROW(method_kind("sgd"), InvalidParameter);
}
