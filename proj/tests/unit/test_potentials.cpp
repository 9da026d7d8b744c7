#include <cmath>
#include <numbers>
#include <random>

#include <gtest/gtest.h>

#include "gradflow/errors.hpp"
#include "gradflow/potentials.hpp"

using namespace gradflow;

namespace {

Vector v1(double x) { return Vector::Constant(1, x); }

}  // namespace

TEST(DoubleWell, CriticalPointsAndValues) {
  const auto p = make_double_well();
  EXPECT_EQ(p.dim(), 1);
  for (double x : {-1.0, 0.0, 1.0}) EXPECT_DOUBLE_EQ(p.gradient(v1(x))[0], 0.0);
  EXPECT_DOUBLE_EQ(p.value(v1(1.0)), -0.375);
  EXPECT_DOUBLE_EQ(p.value(v1(-1.0)), -0.375);
  EXPECT_DOUBLE_EQ(p.value(v1(2.0)), 3.0);
  EXPECT_DOUBLE_EQ(p.gradient(v1(2.0))[0], 9.0);
  EXPECT_DOUBLE_EQ(p.hessian(v1(0.0))(0, 0), -1.5);
  EXPECT_DOUBLE_EQ(*p.v_star(), -0.375);
  EXPECT_FALSE(p.alpha().has_value());
}

TEST(Quadratic, Constants) {
  const auto p = make_quadratic({0.05, 1.0});
  EXPECT_EQ(p.dim(), 2);
  EXPECT_DOUBLE_EQ(*p.alpha(), 0.1);
  EXPECT_DOUBLE_EQ(*p.lipschitz(), 2.0);
  EXPECT_DOUBLE_EQ(*p.v_star(), 0.0);
  const Vector t{{3.0, -2.0}};
  EXPECT_DOUBLE_EQ(p.value(t), 0.05 * 9 + 4.0);
  EXPECT_DOUBLE_EQ(p.gradient(t)[0], 0.3);
  EXPECT_DOUBLE_EQ(p.gradient(t)[1], -4.0);
  EXPECT_NEAR(*p.log_partition(), 0.5 * std::log(std::numbers::pi / 0.05) + 0.5 * std::log(std::numbers::pi), 1e-14);
}

TEST(Quadratic, RejectsNonPositiveCoefficients) {
  EXPECT_THROW(make_quadratic({1.0, 0.0}), InvalidParameter);
  EXPECT_THROW(make_quadratic({-1.0}), InvalidParameter);
  EXPECT_THROW(make_quadratic(std::span<const double>{}), InvalidParameter);
}

TEST(PlNotConvex, PlButSingularHessian) {
  const auto p = make_pl_not_convex();
  const Matrix h = p.hessian(Vector::Zero(2));
  EXPECT_DOUBLE_EQ(h(1, 1), 0.0);
  std::vector<Vector> probes;
  std::mt19937_64 gen(1);
  std::normal_distribution<double> nd;
  for (int i = 0; i < 100; ++i) probes.push_back(Vector{{nd(gen), nd(gen)}});
  EXPECT_NEAR(estimate_pl_constant(p, probes), 1.0, 1e-12);
}

TEST(GaussianPosterior, MatchesConjugateFormula) {
  // Prior N(0, 1), y = 2 observed with unit noise: posterior N(1, 1/2).
  GaussianSpec prior{v1(0.0), Matrix::Identity(1, 1)};
  const auto r = make_gaussian_posterior(prior, Matrix::Identity(1, 1), Matrix::Identity(1, 1), v1(2.0));
  EXPECT_NEAR(r.posterior.mean[0], 1.0, 1e-14);
  EXPECT_NEAR(r.posterior.covariance(0, 0), 0.5, 1e-14);
  EXPECT_NEAR(r.potential.gradient(v1(1.0))[0], 0.0, 1e-14);
  EXPECT_NEAR(*r.potential.alpha(), 2.0, 1e-14);
  // V differences are the log posterior ratio: (x − 1)²/(2·½).
  EXPECT_NEAR(r.potential.value(v1(3.0)) - r.potential.value(v1(1.0)), 4.0, 1e-12);
}

TEST(GaussianPosterior, MultivariateAgainstDirectSolve) {
  Matrix a{{1.0, 2.0}, {0.5, -1.0}, {0.0, 3.0}};
  Matrix noise = 0.3 * Matrix::Identity(3, 3);
  Vector y{{1.0, -0.5, 2.0}};
  GaussianSpec prior{Vector{{0.1, -0.2}}, Matrix{{2.0, 0.3}, {0.3, 1.0}}};
  const auto r = make_gaussian_posterior(prior, a, noise, y);
  const Matrix prec = a.transpose() * noise.inverse() * a + prior.covariance.inverse();
  const Vector mean = prec.inverse() * (a.transpose() * noise.inverse() * y + prior.covariance.inverse() * prior.mean);
  EXPECT_LT((r.posterior.mean - mean).norm(), 1e-12);
  EXPECT_LT((r.posterior.covariance - prec.inverse()).norm(), 1e-12);
  EXPECT_LT(r.potential.gradient(mean).norm(), 1e-12);
  EXPECT_LT((r.potential.hessian(Vector::Zero(2)) - prec).norm(), 1e-12);
}

TEST(GaussianPosterior, DimensionChecks) {
  GaussianSpec prior{Vector::Zero(2), Matrix::Identity(2, 2)};
  EXPECT_THROW(make_gaussian_posterior(prior, Matrix::Identity(3, 3), Matrix::Identity(3, 3), Vector::Zero(3)),
               DimensionMismatch);
  GaussianSpec bad{Vector::Zero(2), Matrix{{1.0, 2.0}, {2.0, 1.0}}};
  EXPECT_THROW(bad.validate(), InvalidParameter);
}

TEST(Mixture, SymmetricBimodal) {
  const auto p = potential_from_id("mixture:0.5,-2,0.25;0.5,2,0.25");
  EXPECT_NEAR(p.gradient(v1(0.0))[0], 0.0, 1e-14);
  EXPECT_NEAR(p.value(v1(1.3)), p.value(v1(-1.3)), 1e-13);
  // Near a mode the other component is negligible: V ≈ −log(½ N(x; 2, ¼)).
  const double x = 2.1;
  const double expected = -std::log(0.5 / std::sqrt(2 * std::numbers::pi * 0.25)) + (x - 2) * (x - 2) / 0.5;
  EXPECT_NEAR(p.value(v1(x)), expected, 1e-12);
  EXPECT_DOUBLE_EQ(*p.log_partition(), 0.0);
}

TEST(Mixture, FarTailsStayFinite) {
  const auto p = potential_from_id("mixture:0.5,-2,0.25;0.5,2,0.25");
  EXPECT_TRUE(std::isfinite(p.value(v1(60.0))));
  EXPECT_TRUE(std::isfinite(p.gradient(v1(-60.0))[0]));
  EXPECT_NEAR(p.gradient(v1(60.0))[0], (60.0 - 2.0) / 0.25, 1e-9);
}

TEST(Mixture, WeightsMustSumToOne) {
  EXPECT_THROW(potential_from_id("mixture:0.5,-2,1;0.6,2,1"), InvalidParameter);
  EXPECT_THROW(potential_from_id("mixture:0.5,-2"), InvalidParameter);
}

TEST(Boltzmann, SeparableSum) {
  const auto u = make_double_well();
  const auto k = make_quadratic({0.5});
  const auto b = make_boltzmann(u, k, 2.0);
  const Vector qp{{0.7, -1.2}};
  EXPECT_NEAR(b.value(qp), 2.0 * (u.value(v1(0.7)) + 0.5 * 1.44), 1e-14);
  EXPECT_NEAR(b.gradient(qp)[1], 2.0 * -1.2, 1e-14);
  EXPECT_THROW(make_boltzmann(u, k, 0.0), InvalidParameter);
}

TEST(Potential, ShiftChangesValueOnly) {
  const auto p = make_quadratic({1.0});
  const auto s = p.shifted(2.5);
  EXPECT_DOUBLE_EQ(s.value(v1(1.0)), 3.5);
  EXPECT_DOUBLE_EQ(s.gradient(v1(1.0))[0], 2.0);
  EXPECT_DOUBLE_EQ(*s.v_star(), 2.5);
  EXPECT_NEAR(*s.log_partition(), *p.log_partition() - 2.5, 1e-15);
}

TEST(Potential, FunctionsWithoutHessian) {
  const auto p = Potential::from_functions(
      1, [](const Vector& t) { return std::cosh(t[0]); }, [](const Vector& t) { return v1(std::sinh(t[0])); });
  EXPECT_FALSE(p.has_hessian());
  EXPECT_THROW(p.hessian(v1(0.0)), Unsupported);
}

TEST(Potential, AlphaAboveLipschitzRejected) {
  PotentialInfo info;
  info.alpha = 3.0;
  info.lipschitz = 1.0;
  EXPECT_THROW(Potential::from_functions(
                   1, [](const Vector&) { return 0.0; }, [](const Vector&) { return v1(0.0); }, {}, info),
               InvalidParameter);
}

// Property: analytic gradients agree with centered differences everywhere.
TEST(Potential, GradientsMatchFiniteDifferences) {
  const char* ids[] = {"double_well", "quadratic:0.05,1,3", "pl_not_convex", "posterior:0,1,1,1,2",
                       "mixture:0.3,-1,0.5;0.7,1.5,2", "boltzmann:1.7"};
  std::mt19937_64 gen(7);
  std::normal_distribution<double> nd(0.0, 1.5);
  for (const char* id : ids) {
    const auto p = potential_from_id(id);
    for (int k = 0; k < 50; ++k) {
      Vector t(p.dim());
      for (int i = 0; i < p.dim(); ++i) t[i] = nd(gen);
      const Vector g = p.gradient(t);
      const Vector fd = finite_diff_grad(p, t, 1e-6);
      EXPECT_LT((g - fd).norm(), 1e-6 * std::max(1.0, g.norm())) << id;
    }
  }
}

TEST(Catalog, EveryEntryResolvesOrDocumentsGrammar) {
  const auto cat = potential_catalog();
  EXPECT_GE(cat.size(), 6u);
  EXPECT_NO_THROW(potential_from_id("double_well"));
  EXPECT_THROW(potential_from_id("double_well:1"), InvalidParameter);
  EXPECT_THROW(potential_from_id("nope"), InvalidParameter);
  EXPECT_THROW(potential_from_id("posterior:0,1,1"), InvalidParameter);
}

TEST(EstimatePl, NeedsInfimum) {
  const auto p = potential_from_id("mixture:0.5,-2,0.25;0.5,2,0.25");
  std::vector<Vector> probes{v1(1.0)};
  EXPECT_THROW(estimate_pl_constant(p, probes), Unsupported);
}
