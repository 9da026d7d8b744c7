#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <random>

#include <gtest/gtest.h>

#include "gradflow/density.hpp"
#include "gradflow/errors.hpp"
#include "gradflow/potentials.hpp"

using namespace gradflow;

namespace {

GridDensity gaussian_on(const Grid1D& g, double m, double v) {
  return normalize(tabulate(g, [&](double x) { return std::exp(-(x - m) * (x - m) / (2 * v)); }), g);
}

}  // namespace

TEST(Grid, Layouts) {
  const auto c = Grid1D::cells(-3, 3, 120);
  EXPECT_DOUBLE_EQ(c.dx, 0.05);
  EXPECT_DOUBLE_EQ(c.center(0), -2.975);
  EXPECT_NEAR(c.upper(), 3.0, 1e-14);
  const auto n = Grid1D::nodes(-8, 8, 1601);
  EXPECT_DOUBLE_EQ(n.dx, 0.01);
  EXPECT_DOUBLE_EQ(n.center(0), -8.0);
  EXPECT_NEAR(n.center(1600), 8.0, 1e-12);
  EXPECT_THROW(Grid1D::cells(1, 0, 10), InvalidParameter);
  EXPECT_THROW(Grid1D::cells(0, 1, 1), InvalidParameter);
}

TEST(GridDensity, MomentsOfGaussian) {
  const auto g = Grid1D::cells(-10, 10, 2000);
  const auto d = gaussian_on(g, 0.7, 2.0);
  EXPECT_NEAR(d.mass(), 1.0, 1e-14);
  EXPECT_NEAR(d.mean(), 0.7, 1e-9);  // tails beyond ±10 are cut off
  EXPECT_NEAR(d.variance(), 2.0, 1e-5);  // midpoint rule adds dx²/12
  EXPECT_NEAR(d.log_z, 0.5 * std::log(2 * std::numbers::pi * 2.0), 1e-10);
}

TEST(GridDensity, NormalizeRejectsBadInput) {
  const auto g = Grid1D::cells(0, 1, 3);
  EXPECT_THROW(normalize(std::vector<double>{0, 0, 0}, g), InvalidParameter);
  EXPECT_THROW(normalize(std::vector<double>{1, -1, 1}, g), InvalidParameter);
  EXPECT_THROW(normalize(std::vector<double>{1, NAN, 1}, g), InvalidParameter);
  EXPECT_THROW(normalize(std::vector<double>{1, 1}, g), DimensionMismatch);
}

// ∫ exp(−V) for the double well, computed independently to 30 digits.
TEST(Gibbs, DoubleWellPartitionFunction) {
  const auto d = gibbs_density(make_double_well(), Grid1D::cells(-6, 6, 3000));
  EXPECT_NEAR(d.log_z, 1.3842880513712289543, 1e-10);
  EXPECT_NEAR(d.variance(), 0.94394086792349059082, 1e-5);
  EXPECT_NEAR(d.mean(), 0.0, 1e-14);
}

TEST(Gibbs, NoUnderflowForLargeEnergies) {
  const auto p = make_double_well().shifted(5000.0);
  const auto d = gibbs_density(p, Grid1D::cells(-3, 3, 300));
  EXPECT_NEAR(d.mass(), 1.0, 1e-13);
  EXPECT_NEAR(d.log_z, 1.3842880513712289543 - 5000.0, 1e-6);
}

TEST(Histogram, NormalizedOverInRangeSamples) {
  const auto g = Grid1D::cells(0, 4, 4);
  const std::vector<double> s{0.5, 0.5, 1.5, 3.99, -1.0, 4.0, 100.0};
  const auto h = histogram(s, g);
  EXPECT_EQ(h.out_of_range, 3u);
  EXPECT_DOUBLE_EQ(h.density.values[0], 0.5);
  EXPECT_DOUBLE_EQ(h.density.values[1], 0.25);
  EXPECT_DOUBLE_EQ(h.density.values[2], 0.0);
  EXPECT_DOUBLE_EQ(h.density.values[3], 0.25);
  EXPECT_NEAR(h.density.mass(), 1.0, 1e-15);
  EXPECT_THROW(histogram(std::vector<double>{10.0}, g), InvalidParameter);
}

TEST(Kde, SinglePointIsKernel) {
  const std::vector<double> s{0.0};
  const std::vector<double> x{0.0, 1.0};
  const auto k = kde(s, 1.0, x);
  EXPECT_NEAR(k[0], 1 / std::sqrt(2 * std::numbers::pi), 1e-16);
  EXPECT_NEAR(k[1], std::exp(-0.5) / std::sqrt(2 * std::numbers::pi), 1e-16);
  EXPECT_THROW(kde(s, 0.0, x), InvalidParameter);
}

TEST(Silverman, RuleAndFloor) {
  const std::vector<double> s{1.0, 2.0, 3.0, 4.0};
  // Sample standard deviation √(5/3).
  EXPECT_NEAR(silverman_bandwidth(s).value, 1.06 * std::sqrt(5.0 / 3) * std::pow(4.0, -0.2), 1e-15);
  const auto f = silverman_bandwidth(std::vector<double>{2.0, 2.0, 2.0});
  EXPECT_TRUE(f.floored);
  EXPECT_EQ(f.value, 1e-8);
  EXPECT_THROW(silverman_bandwidth(std::vector<double>{1.0}), InvalidParameter);
}

TEST(Divergences, GaussianOracles) {
  const auto g = Grid1D::cells(-15, 15, 6000);
  const auto a = gaussian_on(g, 0, 1), b = gaussian_on(g, 1, 1), c = gaussian_on(g, 0, 2);
  // TV(N(0,1), N(1,1)) = 2Φ(½) − 1
  EXPECT_NEAR(tv_distance(a, b), 0.38292492254802620728, 1e-6);
  // KL(N(0,1) ‖ N(0,2)) = log √2 + ¼ − ½
  EXPECT_NEAR(kl_divergence(a, c), 0.09657359027997265471, 1e-6);
  // ‖N(1,1) − N(0,1)‖²_{L²(1/π)} = e − 1
  EXPECT_NEAR(l2_pi_inv_norm(b, a), std::sqrt(std::exp(1.0) - 1), 1e-6);
  EXPECT_EQ(tv_distance(a, a), 0.0);
  EXPECT_EQ(kl_divergence(a, a), 0.0);
}

TEST(Divergences, DisjointSupports) {
  const auto g = Grid1D::cells(0, 2, 2);
  const auto a = normalize(std::vector<double>{1, 0}, g), b = normalize(std::vector<double>{0, 1}, g);
  EXPECT_DOUBLE_EQ(tv_distance(a, b), 1.0);
  EXPECT_TRUE(std::isinf(kl_divergence(a, b)));
  EXPECT_THROW(l2_pi_inv_norm(a, b), DomainError);
}

TEST(Divergences, GridMismatch) {
  const auto a = gaussian_on(Grid1D::cells(-5, 5, 100), 0, 1);
  const auto b = gaussian_on(Grid1D::cells(-5, 5, 101), 0, 1);
  EXPECT_THROW(tv_distance(a, b), GridMismatch);
  EXPECT_THROW(kl_divergence(a, b), GridMismatch);
}

// Property: TV is a metric bounded by 1 and Pinsker's inequality holds.
TEST(Divergences, PinskerAndTriangle) {
  std::mt19937_64 gen(2);
  std::uniform_real_distribution<double> u(0.01, 1.0);
  const auto g = Grid1D::cells(0, 1, 16);
  for (int k = 0; k < 100; ++k) {
    std::vector<double> x(16), y(16), z(16);
    for (int i = 0; i < 16; ++i) x[i] = u(gen), y[i] = u(gen), z[i] = u(gen);
    const auto a = normalize(x, g), b = normalize(y, g), c = normalize(z, g);
    const double tv = tv_distance(a, b);
    EXPECT_LE(tv, 1.0);
    EXPECT_LE(tv, std::sqrt(kl_divergence(a, b) / 2) + 1e-15);
    EXPECT_LE(tv, tv_distance(a, c) + tv_distance(c, b) + 1e-15);
    EXPECT_NEAR(tv, tv_distance(b, a), 1e-15);
    EXPECT_GE(kl_divergence(a, b), 0.0);
  }
}

TEST(Wasserstein, Examples) {
  const std::vector<double> a{0.0, 1.0, 2.0};
  const std::vector<double> b{3.0, 5.0, 4.0};
  EXPECT_DOUBLE_EQ(wasserstein1d(a, b), 3.0);
  EXPECT_DOUBLE_EQ(wasserstein1d(a, a), 0.0);
  // Unequal sizes: quantiles at (k + ½)/M.
  const std::vector<double> one{1.0};
  EXPECT_NEAR(wasserstein1d(a, one), std::sqrt(2.0 / 3), 1e-15);
}

TEST(Moments, UnbiasedCovariance) {
  const Matrix s{{1.0, 2.0, 3.0}, {2.0, 4.0, 9.0}};
  const auto m = moments(s);
  EXPECT_DOUBLE_EQ(m.mean[0], 2.0);
  EXPECT_DOUBLE_EQ(m.mean[1], 5.0);
  EXPECT_DOUBLE_EQ(m.covariance(0, 0), 1.0);
  EXPECT_DOUBLE_EQ(m.covariance(0, 1), 3.5);
  EXPECT_DOUBLE_EQ(m.covariance(1, 1), 13.0);
  EXPECT_THROW(moments(Matrix::Zero(1, 1)), InvalidParameter);
}

TEST(Coarsen, BlockAverages) {
  const auto g = Grid1D::cells(0, 4, 4);
  const auto d = normalize(std::vector<double>{1, 3, 2, 2}, g);
  const auto c = coarsen(d, 2);
  EXPECT_EQ(c.grid.n, 2);
  EXPECT_DOUBLE_EQ(c.grid.dx, 2.0);
  EXPECT_DOUBLE_EQ(c.grid.center(0), 1.0);
  EXPECT_DOUBLE_EQ(c.values[0], 0.25);
  EXPECT_DOUBLE_EQ(c.values[1], 0.25);
  EXPECT_NEAR(c.mass(), 1.0, 1e-15);
  EXPECT_THROW(coarsen(d, 3), InvalidParameter);
}

TEST(DensityCsv, RoundTrip) {
  const auto d = gaussian_on(Grid1D::cells(-2.5, 3.5, 37), 0.3, 0.8);
  const auto path = std::filesystem::temp_directory_path() / "gradflow_density_roundtrip.csv";
  std::ofstream(path) << density_csv(d);
  const auto r = read_density_csv(path.string());
  EXPECT_TRUE(r.grid.same_as(d.grid));
  EXPECT_EQ(r.values, d.values);
  std::filesystem::remove(path);
}
