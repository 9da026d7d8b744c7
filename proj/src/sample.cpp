#include "gradflow/sample.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <sstream>
#include <thread>

#include "gradflow/csv.hpp"
#include "gradflow/density.hpp"
#include "gradflow/errors.hpp"

namespace gradflow {

namespace {

void require_positive(double v, const char* what) {
  if (!(v > 0)) throw InvalidParameter(std::string(what) + " must be positive");
}

// θ ← θ − τ g + s·ξ, written once so that every ULA-type update rounds the
// same way.
inline void langevin_update(VecRef theta, ConstVecRef grad, ConstVecRef noise, double tau, double noise_scale) {
  theta = theta - tau * grad + noise_scale * noise;
}

// log q(x → y) up to the constant, for the ULA proposal N(x − τ∇V(x), 2τ I).
double log_proposal(ConstVecRef from, ConstVecRef to, ConstVecRef grad_from, double tau) {
  return -(to - from + tau * grad_from).squaredNorm() / (4.0 * tau);
}

bool finite_column(const Matrix& m, Eigen::Index j) { return m.col(j).allFinite(); }

void check_finite(const Matrix& particles, std::int64_t step) {
  for (Eigen::Index j = 0; j < particles.cols(); ++j) {
    if (!finite_column(particles, j)) throw DivergenceError(step, j);
  }
}

}  // namespace

void parallel_for(int n, int workers, const std::function<void(int, int)>& fn) {
  workers = std::clamp(workers, 1, std::max(1, n));
  if (workers == 1) {
    fn(0, n);
    return;
  }
  std::vector<std::thread> threads;
  threads.reserve(workers);
  std::vector<std::exception_ptr> errors(workers);
  for (int w = 0; w < workers; ++w) {
    const int begin = static_cast<int>(static_cast<long long>(n) * w / workers);
    const int end = static_cast<int>(static_cast<long long>(n) * (w + 1) / workers);
    threads.emplace_back([&, w, begin, end] {
      try {
        fn(begin, end);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : threads) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

Ensemble Ensemble::single(ConstVecRef theta, std::uint64_t seed) {
  Ensemble e;
  e.particles = theta;
  e.rng.seed = seed;
  return e;
}

Ensemble Ensemble::gaussian(const GaussianSpec& g, int count, std::uint64_t seed) {
  g.validate();
  if (count < 1) throw InvalidParameter("ensemble needs at least one particle");
  const Matrix l = g.covariance.llt().matrixL();
  Ensemble e;
  e.rng.seed = seed;
  e.particles.resize(g.dim(), count);
  Vector z(g.dim());
  for (int j = 0; j < count; ++j) {
    auto s = e.rng.substream(static_cast<std::uint64_t>(j), 0, DrawPurpose::init);
    s.fill_normal(z);
    e.particles.col(j) = g.mean + l * z;
  }
  return e;
}

std::string ChainStats::to_text() const {
  std::ostringstream out;
  out << "n_steps = " << n_steps << '\n';
  out << "proposed = " << proposed << '\n';
  out << "accepted = " << accepted << '\n';
  out << "acceptance_rate = " << csv::format_real(acceptance_rate) << '\n';
  out << "n_recorded = " << n_recorded << '\n';
  for (Eigen::Index i = 0; i < mean.size(); ++i) out << "mean_" << i << " = " << csv::format_real(mean[i]) << '\n';
  for (Eigen::Index i = 0; i < covariance.rows(); ++i) {
    for (Eigen::Index j = i; j < covariance.cols(); ++j) {
      out << "cov_" << i << '_' << j << " = " << csv::format_real(covariance(i, j)) << '\n';
    }
  }
  return out.str();
}

Vector ula_step(const Potential& p, ConstVecRef theta, double tau, ConstVecRef noise) {
  require_positive(tau, "step size");
  if (theta.size() != p.dim() || noise.size() != p.dim()) throw DimensionMismatch("ULA state/noise dimension mismatch");
  Vector out = theta;
  const Vector g = p.gradient(theta);
  langevin_update(out, g, noise, tau, std::sqrt(2.0 * tau));
  return out;
}

double mala_acceptance(const Potential& p, ConstVecRef theta, ConstVecRef proposal, double tau) {
  require_positive(tau, "step size");
  const double v0 = p.value(theta);
  const double v1 = p.value(proposal);
  if (std::isnan(v1) || v1 == std::numeric_limits<double>::infinity()) return 0.0;
  if (v0 == std::numeric_limits<double>::infinity()) return 1.0;
  const Vector g0 = p.gradient(theta);
  const Vector g1 = p.gradient(proposal);
  const double log_ratio =
      (v0 - v1) + log_proposal(proposal, theta, g1, tau) - log_proposal(theta, proposal, g0, tau);
  if (std::isnan(log_ratio)) return 0.0;
  return log_ratio >= 0 ? 1.0 : std::exp(log_ratio);
}

MalaResult mala_step(const Potential& p, ConstVecRef theta, double tau, ConstVecRef noise, double u) {
  Vector prop = ula_step(p, theta, tau, noise);
  const double a = mala_acceptance(p, theta, prop, tau);
  if (u < a) return {std::move(prop), true};
  return {theta, false};
}

MalaResult mala_step(const Potential& p, ConstVecRef theta, double tau, const RngStream& rng, std::uint64_t particle,
                     std::uint64_t step) {
  Vector noise(theta.size());
  rng.substream(particle, step, DrawPurpose::noise).fill_normal(noise);
  const double u = rng.substream(particle, step, DrawPurpose::accept).uniform();
  return mala_step(p, theta, tau, noise, u);
}

Matrix ensemble_covariance(const Matrix& particles) {
  const Eigen::Index j = particles.cols();
  if (j < 1) throw InvalidParameter("ensemble is empty");
  const Vector mean = particles.rowwise().mean();
  const Matrix c = particles.colwise() - mean;
  Matrix h = c * c.transpose() / static_cast<double>(j);
  return 0.5 * (h + h.transpose());
}

double default_ridge(const Matrix& covariance) {
  return 1e-6 * covariance.trace() / static_cast<double>(covariance.rows());
}

Ensemble ensemble_langevin_step(const Potential& p, const Ensemble& e, double tau, std::optional<double> ridge,
                                int workers) {
  require_positive(tau, "step size");
  if (e.size() < 1) throw InvalidParameter("ensemble is empty");
  if (e.dim() != p.dim()) throw DimensionMismatch("ensemble dimension does not match the potential");
  const int d = e.dim();
  // The covariance acts as the mobility: drift C∇V and noise C^(1/2)ξ.
  Matrix c = ensemble_covariance(e.particles);
  const double r = ridge ? *ridge : default_ridge(c);
  if (r < 0) throw InvalidParameter("ridge must be nonnegative");
  c.diagonal().array() += r;

  Eigen::SelfAdjointEigenSolver<Matrix> eig(c);
  const Vector lambda = eig.eigenvalues();
  if (!(lambda.minCoeff() > 1e-14)) {
    throw PreconditionerError("ensemble covariance is singular (smallest eigenvalue " +
                              std::to_string(lambda.minCoeff()) + "); increase the ridge or the ensemble size");
  }
  const Matrix& q = eig.eigenvectors();
  const Matrix c_sqrt = q * lambda.cwiseSqrt().asDiagonal() * q.transpose();

  Ensemble out = e;
  const double scale = std::sqrt(2.0 * tau);
  const auto step = static_cast<std::uint64_t>(e.step);
  parallel_for(e.size(), workers, [&](int begin, int end) {
    Vector g(d), xi(d);
    for (int j = begin; j < end; ++j) {
      p.gradient(e.particles.col(j), g);
      e.rng.substream(static_cast<std::uint64_t>(j), step).fill_normal(xi);
      const Vector drift = c * g;
      const Vector noise = c_sqrt * xi;
      langevin_update(out.particles.col(j), drift, noise, tau, scale);
    }
  });
  ++out.step;
  return out;
}

Vector bdl_rates(const Potential& p, const Matrix& particles, const LogDensityFn& log_density) {
  const Eigen::Index j = particles.cols();
  Vector r(j);
  for (Eigen::Index i = 0; i < j; ++i) r[i] = log_density(particles.col(i)) + p.value(particles.col(i));
  return r.array() - r.mean();
}

Vector kde_log_density_at_particles(const Matrix& particles, const Vector& bandwidths) {
  const Eigen::Index d = particles.rows();
  const Eigen::Index n = particles.cols();
  if (bandwidths.size() != d) throw DimensionMismatch("one bandwidth per coordinate is required");
  if (!(bandwidths.array() > 0).all()) throw InvalidParameter("bandwidth must be positive");
  const double log_norm = -std::log(static_cast<double>(n)) -
                          0.5 * static_cast<double>(d) * std::log(2.0 * std::numbers::pi) -
                          bandwidths.array().log().sum();
  Vector out(n);
  if (d == 1) {
    // Sorted sweep; kernel terms beyond 9 bandwidths are below 3e-18 of the
    // peak and are dropped.
    const double h = bandwidths[0];
    const double cutoff = 9.0 * h;
    const double inv2h2 = 1.0 / (2.0 * h * h);
    std::vector<Eigen::Index> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](auto a, auto b) { return particles(0, a) < particles(0, b); });
    std::vector<double> xs(n);
    for (Eigen::Index k = 0; k < n; ++k) xs[k] = particles(0, order[k]);
    Eigen::Index lo = 0;
    Eigen::Index hi = 0;
    for (Eigen::Index k = 0; k < n; ++k) {
      while (xs[lo] < xs[k] - cutoff) ++lo;
      while (hi < n && xs[hi] <= xs[k] + cutoff) ++hi;
      double s = 0.0;
      for (Eigen::Index m = lo; m < hi; ++m) {
        const double diff = xs[k] - xs[m];
        s += std::exp(-diff * diff * inv2h2);
      }
      out[order[k]] = log_norm + std::log(s);
    }
    return out;
  }
  const Vector inv_h = bandwidths.cwiseInverse();
  for (Eigen::Index i = 0; i < n; ++i) {
    double s = 0.0;
    for (Eigen::Index m = 0; m < n; ++m) {
      const double q = (particles.col(i) - particles.col(m)).cwiseProduct(inv_h).squaredNorm();
      s += std::exp(-0.5 * q);
    }
    out[i] = log_norm + std::log(s);
  }
  return out;
}

Ensemble bdl_step(const Potential& p, const Ensemble& e, double tau, const BdlOptions& opts, BdlStats* stats) {
  require_positive(tau, "step size");
  if (e.size() < 2) throw InvalidParameter("birth-death dynamics need at least two particles");
  if (e.dim() != p.dim()) throw DimensionMismatch("ensemble dimension does not match the potential");
  if (opts.bandwidth && !(*opts.bandwidth > 0)) throw InvalidParameter("bandwidth must be positive");
  const int d = e.dim();
  const int n = e.size();
  const auto step = static_cast<std::uint64_t>(e.step);
  const double scale = std::sqrt(2.0 * tau);

  // Langevin substep.
  Ensemble out = e;
  parallel_for(n, opts.workers, [&](int begin, int end) {
    Vector g(d), xi(d);
    for (int j = begin; j < end; ++j) {
      p.gradient(e.particles.col(j), g);
      e.rng.substream(static_cast<std::uint64_t>(j), step).fill_normal(xi);
      langevin_update(out.particles.col(j), g, xi, tau, scale);
    }
  });
  check_finite(out.particles, e.step + 1);

  // Birth-death rates.
  Vector beta;
  BdlStats local;
  if (opts.log_density) {
    beta = bdl_rates(p, out.particles, opts.log_density);
  } else {
    Vector h(d);
    for (int i = 0; i < d; ++i) {
      if (opts.bandwidth) {
        h[i] = *opts.bandwidth;
      } else {
        const Eigen::RowVectorXd row = out.particles.row(i);
        const auto bw = silverman_bandwidth(std::span<const double>(row.data(), static_cast<std::size_t>(n)));
        h[i] = bw.value;
        local.bandwidth_floored = local.bandwidth_floored || bw.floored;
      }
    }
    local.bandwidths = h;
    const Vector log_rho = kde_log_density_at_particles(out.particles, h);
    Vector r(n);
    for (int j = 0; j < n; ++j) r[j] = log_rho[j] + p.value(out.particles.col(j));
    beta = r.array() - r.mean();
  }

  // Jumps, serially in particle order. Sources are read from the pre-jump
  // ensemble so the outcome does not depend on earlier jumps in this step.
  const Matrix source = out.particles;
  for (int i = 0; i < n; ++i) {
    const double b = beta[i];
    if (b == 0.0) continue;
    auto s = e.rng.substream(static_cast<std::uint64_t>(i), step, DrawPurpose::birth_death);
    const double u = s.uniform();
    const double prob = -std::expm1(-std::abs(b) * tau);
    if (!(u < prob)) continue;
    auto partner = static_cast<int>(s.below(static_cast<std::uint64_t>(n - 1)));
    if (partner >= i) ++partner;
    if (b > 0) {
      out.particles.col(i) = source.col(partner);
      ++local.kills;
    } else {
      out.particles.col(partner) = source.col(i);
      ++local.duplications;
    }
  }
  ++out.step;
  if (stats) *stats = std::move(local);
  return out;
}

namespace {

struct MomentAccumulator {
  std::int64_t n = 0;
  Vector mean;
  Matrix m2;

  void add(const Matrix& particles) {
    if (mean.size() == 0) {
      mean = Vector::Zero(particles.rows());
      m2 = Matrix::Zero(particles.rows(), particles.rows());
    }
    for (Eigen::Index j = 0; j < particles.cols(); ++j) {
      ++n;
      const Vector delta = particles.col(j) - mean;
      mean += delta / static_cast<double>(n);
      m2 += delta * (particles.col(j) - mean).transpose();
    }
  }
};

}  // namespace

SamplerResult run_sampler(SamplerMethod method, const Potential& p, Ensemble init, double tau, std::int64_t n_steps,
                          const SamplerOptions& opts) {
  require_positive(tau, "step size");
  if (n_steps < 0) throw InvalidParameter("number of steps must be nonnegative");
  if (opts.thin < 1) throw InvalidParameter("thin must be at least 1");
  if (init.size() < 1) throw InvalidParameter("initial ensemble is empty");
  if (init.dim() != p.dim()) throw DimensionMismatch("ensemble dimension does not match the potential");
  check_finite(init.particles, init.step);

  std::vector<std::int64_t> record = opts.record_steps;
  std::sort(record.begin(), record.end());
  record.erase(std::unique(record.begin(), record.end()), record.end());
  auto should_record = [&](std::int64_t k) {
    if (!record.empty()) return std::binary_search(record.begin(), record.end(), k);
    return k % opts.thin == 0;
  };

  SamplerResult res;
  MomentAccumulator acc;
  auto snap = [&](const Ensemble& e, std::int64_t k) {
    res.samples.push_back({k, static_cast<double>(k) * tau, e.particles});
    acc.add(e.particles);
  };

  Ensemble cur = std::move(init);
  const int n = cur.size();
  const int d = cur.dim();
  const double scale = std::sqrt(2.0 * tau);
  std::int64_t total_accepted = 0;

  if (should_record(0)) snap(cur, 0);
  for (std::int64_t k = 1; k <= n_steps; ++k) {
    const auto key = static_cast<std::uint64_t>(cur.step);
    switch (method) {
      case SamplerMethod::ula:
        parallel_for(n, opts.workers, [&](int begin, int end) {
          Vector g(d), xi(d);
          for (int j = begin; j < end; ++j) {
            auto col = cur.particles.col(j);
            p.gradient(col, g);
            cur.rng.substream(static_cast<std::uint64_t>(j), key).fill_normal(xi);
            langevin_update(col, g, xi, tau, scale);
          }
        });
        ++cur.step;
        total_accepted += n;
        break;
      case SamplerMethod::mala: {
        std::vector<char> acc_flags(static_cast<std::size_t>(n), 0);
        parallel_for(n, opts.workers, [&](int begin, int end) {
          for (int j = begin; j < end; ++j) {
            auto r = mala_step(p, cur.particles.col(j), tau, cur.rng, static_cast<std::uint64_t>(j), key);
            if (r.accepted) {
              cur.particles.col(j) = r.state;
              acc_flags[static_cast<std::size_t>(j)] = 1;
            }
          }
        });
        for (char f : acc_flags) total_accepted += f;
        ++cur.step;
        break;
      }
      case SamplerMethod::ensemble:
        cur = ensemble_langevin_step(p, cur, tau, opts.ridge, opts.workers);
        total_accepted += n;
        break;
      case SamplerMethod::bdl: {
        BdlOptions bo;
        bo.bandwidth = opts.bandwidth;
        bo.workers = opts.workers;
        cur = bdl_step(p, cur, tau, bo);
        total_accepted += n;
        break;
      }
    }
    check_finite(cur.particles, k);
    if (should_record(k)) snap(cur, k);
  }

  res.stats.n_steps = n_steps;
  res.stats.proposed = n_steps * n;
  res.stats.accepted = total_accepted;
  res.stats.acceptance_rate =
      res.stats.proposed > 0 ? static_cast<double>(total_accepted) / static_cast<double>(res.stats.proposed) : 1.0;
  res.stats.n_recorded = acc.n;
  res.stats.mean = acc.mean;
  if (acc.n >= 2) {
    res.stats.covariance = acc.m2 / static_cast<double>(acc.n - 1);
  } else {
    res.stats.covariance = Matrix::Zero(d, d);
  }
  res.final_state = std::move(cur);
  return res;
}

std::string samples_csv(const std::vector<Snapshot>& samples) {
  std::ostringstream out;
  const Eigen::Index d = samples.empty() ? 0 : samples.front().particles.rows();
  out << "step,time,particle";
  for (Eigen::Index i = 0; i < d; ++i) out << ",theta_" << i;
  out << '\n';
  for (const auto& s : samples) {
    const std::string head = std::to_string(s.step) + ',' + csv::format_real(s.time) + ',';
    for (Eigen::Index j = 0; j < s.particles.cols(); ++j) {
      out << head << j;
      for (Eigen::Index i = 0; i < d; ++i) out << ',' << csv::format_real(s.particles(i, j));
      out << '\n';
    }
  }
  return out.str();
}

double integrated_autocorrelation_time(const std::vector<std::vector<double>>& chains, double window_c) {
  if (chains.empty() || chains.front().size() < 4) throw InvalidParameter("autocorrelation needs non-trivial chains");
  const std::size_t len = chains.front().size();
  for (const auto& c : chains) {
    if (c.size() != len) throw InvalidParameter("chains must have equal length");
  }
  double mean = 0.0;
  for (const auto& c : chains) mean += std::accumulate(c.begin(), c.end(), 0.0);
  mean /= static_cast<double>(len * chains.size());
  std::vector<std::vector<double>> centered;
  centered.reserve(chains.size());
  for (const auto& c : chains) {
    std::vector<double> v(len);
    for (std::size_t t = 0; t < len; ++t) v[t] = c[t] - mean;
    centered.push_back(std::move(v));
  }
  auto autocov = [&](std::size_t lag) {
    double s = 0.0;
    for (const auto& v : centered) {
      for (std::size_t t = 0; t + lag < len; ++t) s += v[t] * v[t + lag];
    }
    return s / static_cast<double>(chains.size() * (len - lag));
  };
  const double c0 = autocov(0);
  if (!(c0 > 0)) throw InvalidParameter("chains have zero variance");
  double tau_int = 1.0;
  for (std::size_t lag = 1; lag < len / 2; ++lag) {
    tau_int += 2.0 * autocov(lag) / c0;
    if (static_cast<double>(lag) >= window_c * tau_int) return tau_int;
  }
  return tau_int;
}

std::string to_string(SamplerMethod m) {
  switch (m) {
    case SamplerMethod::ula:
      return "ula";
    case SamplerMethod::mala:
      return "mala";
    case SamplerMethod::ensemble:
      return "ensemble";
    case SamplerMethod::bdl:
      return "bdl";
  }
  return "unknown";
}

}  // namespace gradflow
