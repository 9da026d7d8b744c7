#include "gradflow/density.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

#include "gradflow/csv.hpp"
#include "gradflow/errors.hpp"

namespace gradflow {

namespace {

void require_same_grid(const GridDensity& a, const GridDensity& b) {
  if (!a.grid.same_as(b.grid) || a.values.size() != b.values.size()) {
    throw GridMismatch("densities live on different grids");
  }
}

}  // namespace

Grid1D Grid1D::cells(double lo, double hi, int n) {
  if (!(hi > lo) || n < 2) throw InvalidParameter("grid needs hi > lo and at least two cells");
  const double dx = (hi - lo) / n;
  return {lo + 0.5 * dx, dx, n};
}

Grid1D Grid1D::nodes(double lo, double hi, int n) {
  if (!(hi > lo) || n < 2) throw InvalidParameter("grid needs hi > lo and at least two nodes");
  return {lo, (hi - lo) / (n - 1), n};
}

void Grid1D::validate() const {
  if (n < 2) throw InvalidParameter("grid needs at least two cells");
  if (!(dx > 0) || !std::isfinite(dx) || !std::isfinite(x0)) throw InvalidParameter("grid spacing must be positive");
}

bool Grid1D::same_as(const Grid1D& o) const {
  const double tol = 1e-9 * std::min(dx, o.dx);
  return n == o.n && std::abs(x0 - o.x0) <= tol && std::abs(dx - o.dx) * n <= tol;
}

double GridDensity::mass() const {
  double s = 0.0;
  for (double v : values) s += v;
  return s * grid.dx;
}

double GridDensity::mean() const {
  double s = 0.0;
  double m = 0.0;
  for (int k = 0; k < grid.n; ++k) {
    s += values[k];
    m += values[k] * grid.center(k);
  }
  return m / s;
}

double GridDensity::variance() const {
  const double mu = mean();
  double s = 0.0;
  double v = 0.0;
  for (int k = 0; k < grid.n; ++k) {
    const double d = grid.center(k) - mu;
    s += values[k];
    v += values[k] * d * d;
  }
  return v / s;
}

GridDensity normalize(std::span<const double> values, const Grid1D& grid) {
  grid.validate();
  if (values.size() != static_cast<std::size_t>(grid.n)) throw DimensionMismatch("values do not match the grid size");
  double s = 0.0;
  for (double v : values) {
    if (!(v >= 0) || !std::isfinite(v)) throw InvalidParameter("density values must be finite and nonnegative");
    s += v;
  }
  const double mass = s * grid.dx;
  if (!(mass > 0)) throw InvalidParameter("cannot normalize a zero density");
  GridDensity d{grid, std::vector<double>(values.begin(), values.end()), std::log(mass)};
  for (double& v : d.values) v /= mass;
  return d;
}

std::vector<double> tabulate(const Grid1D& grid, const std::function<double(double)>& f) {
  grid.validate();
  std::vector<double> out(grid.n);
  for (int k = 0; k < grid.n; ++k) out[k] = f(grid.center(k));
  return out;
}

GridDensity gibbs_density(const Potential& p, const Grid1D& grid) {
  if (p.dim() != 1) throw DimensionMismatch("grid densities are one-dimensional");
  grid.validate();
  std::vector<double> v(grid.n);
  Vector x(1);
  double vmin = std::numeric_limits<double>::infinity();
  for (int k = 0; k < grid.n; ++k) {
    x[0] = grid.center(k);
    v[k] = p.value(x);
    vmin = std::min(vmin, v[k]);
  }
  if (!std::isfinite(vmin)) throw InvalidParameter("potential is not finite on the grid");
  for (double& e : v) e = std::exp(vmin - e);
  GridDensity d = normalize(v, grid);
  d.log_z -= vmin;
  return d;
}

Histogram histogram(std::span<const double> samples, const Grid1D& grid) {
  grid.validate();
  if (samples.empty()) throw InvalidParameter("histogram of an empty sample");
  std::vector<double> counts(grid.n, 0.0);
  std::size_t out = 0;
  const double lo = grid.lower();
  for (double x : samples) {
    const double pos = (x - lo) / grid.dx;
    if (!(pos >= 0) || pos >= grid.n) {
      ++out;
      continue;
    }
    ++counts[static_cast<std::size_t>(pos)];
  }
  const std::size_t inside = samples.size() - out;
  if (inside == 0) throw InvalidParameter("no samples fall inside the histogram grid");
  Histogram h{GridDensity{grid, std::move(counts), 0.0}, out};
  const double scale = 1.0 / (static_cast<double>(inside) * grid.dx);
  for (double& c : h.density.values) c *= scale;
  h.density.log_z = std::log(static_cast<double>(inside) * grid.dx);
  return h;
}

std::vector<double> kde(std::span<const double> samples, double bandwidth, std::span<const double> eval_points) {
  if (!(bandwidth > 0)) throw InvalidParameter("bandwidth must be positive");
  if (samples.empty()) throw InvalidParameter("kernel density estimate of an empty sample");
  const double norm = 1.0 / (static_cast<double>(samples.size()) * bandwidth * std::sqrt(2.0 * std::numbers::pi));
  const double inv2h2 = 1.0 / (2.0 * bandwidth * bandwidth);
  std::vector<double> out(eval_points.size());
  for (std::size_t i = 0; i < eval_points.size(); ++i) {
    double s = 0.0;
    for (double y : samples) {
      const double d = eval_points[i] - y;
      s += std::exp(-d * d * inv2h2);
    }
    out[i] = s * norm;
  }
  return out;
}

Bandwidth silverman_bandwidth(std::span<const double> samples) {
  if (samples.size() < 2) throw InvalidParameter("Silverman bandwidth needs at least two samples");
  const double sd = std::sqrt(moments(samples).covariance(0, 0));
  const double h = 1.06 * sd * std::pow(static_cast<double>(samples.size()), -0.2);
  constexpr double kFloor = 1e-8;
  if (!(h > kFloor)) return {kFloor, true};
  return {h, false};
}

double kl_divergence(const GridDensity& rho, const GridDensity& pi) {
  require_same_grid(rho, pi);
  double s = 0.0;
  for (std::size_t k = 0; k < rho.values.size(); ++k) {
    const double r = rho.values[k];
    if (r <= 0) continue;
    const double q = pi.values[k];
    if (q <= 0) return std::numeric_limits<double>::infinity();
    s += r * std::log(r / q);
  }
  return std::max(0.0, s * rho.grid.dx);
}

double tv_distance(const GridDensity& rho, const GridDensity& pi) {
  require_same_grid(rho, pi);
  double s = 0.0;
  for (std::size_t k = 0; k < rho.values.size(); ++k) s += std::abs(rho.values[k] - pi.values[k]);
  return 0.5 * s * rho.grid.dx;
}

double l2_pi_inv_norm(const GridDensity& rho, const GridDensity& pi) {
  require_same_grid(rho, pi);
  double s = 0.0;
  for (std::size_t k = 0; k < rho.values.size(); ++k) {
    const double q = pi.values[k];
    if (!(q > 1e-300)) throw DomainError("reference density vanishes on the grid; L2(1/pi) norm undefined");
    const double d = rho.values[k] - q;
    s += d * d / q;
  }
  return std::sqrt(s * rho.grid.dx);
}

double wasserstein1d(std::span<const double> a, std::span<const double> b) {
  if (a.empty() || b.empty()) throw InvalidParameter("Wasserstein distance of an empty sample");
  std::vector<double> sa(a.begin(), a.end());
  std::vector<double> sb(b.begin(), b.end());
  std::sort(sa.begin(), sa.end());
  std::sort(sb.begin(), sb.end());
  const std::size_t m = std::max(sa.size(), sb.size());
  // Empirical quantile at level q: element ceil(q·n) − 1.
  auto quantile = [](const std::vector<double>& s, std::size_t k, std::size_t levels) {
    if (s.size() == levels) return s[k];
    const double q = (static_cast<double>(k) + 0.5) / static_cast<double>(levels);
    auto idx = static_cast<std::size_t>(std::ceil(q * static_cast<double>(s.size())));
    idx = std::clamp<std::size_t>(idx, 1, s.size());
    return s[idx - 1];
  };
  double acc = 0.0;
  for (std::size_t k = 0; k < m; ++k) {
    const double d = quantile(sa, k, m) - quantile(sb, k, m);
    acc += d * d;
  }
  return std::sqrt(acc / static_cast<double>(m));
}

Moments moments(const Matrix& samples) {
  const Eigen::Index n = samples.cols();
  if (n < 2) throw InvalidParameter("moments need at least two samples");
  Moments m;
  m.mean = samples.rowwise().mean();
  const Matrix centered = samples.colwise() - m.mean;
  m.covariance = centered * centered.transpose() / static_cast<double>(n - 1);
  return m;
}

Moments moments(std::span<const double> samples) {
  return moments(Matrix(Eigen::Map<const Eigen::RowVectorXd>(samples.data(), static_cast<Eigen::Index>(samples.size()))));
}

GridDensity coarsen(const GridDensity& d, int factor) {
  if (factor < 1 || d.grid.n % factor != 0 || d.grid.n / factor < 2) {
    throw InvalidParameter("coarsening factor must divide the grid size");
  }
  const int n = d.grid.n / factor;
  Grid1D g{d.grid.x0 + 0.5 * (factor - 1) * d.grid.dx, d.grid.dx * factor, n};
  std::vector<double> v(n, 0.0);
  for (int k = 0; k < d.grid.n; ++k) v[k / factor] += d.values[k];
  for (double& x : v) x /= factor;
  return GridDensity{g, std::move(v), d.log_z};
}

std::string density_csv(const GridDensity& d) {
  std::ostringstream out;
  out << "x,value\n";
  for (int k = 0; k < d.grid.n; ++k) {
    out << csv::format_real(d.grid.center(k)) << ',' << csv::format_real(d.values[k]) << '\n';
  }
  return out.str();
}

GridDensity read_density_csv(const std::string& path) {
  const auto t = csv::read(path);
  const auto xc = t.column("x");
  const auto vc = t.column("value");
  const int n = static_cast<int>(t.rows.size());
  if (n < 2) throw InvalidParameter("density file '" + path + "' needs at least two rows");
  const double x0 = t.rows.front()[xc];
  const double dx = (t.rows.back()[xc] - x0) / (n - 1);
  GridDensity d{Grid1D{x0, dx, n}, std::vector<double>(n), 0.0};
  d.grid.validate();
  for (int k = 0; k < n; ++k) {
    if (std::abs(t.rows[k][xc] - d.grid.center(k)) > 1e-9 * dx) {
      throw GridMismatch("density file '" + path + "' is not on a uniform grid");
    }
    d.values[k] = t.rows[k][vc];
  }
  return d;
}

}  // namespace gradflow
