#include "gradflow/potentials.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

#include "gradflow/errors.hpp"

namespace gradflow {

void EnergyModel::hessian(ConstVecRef, MatRef) const {
  throw Unsupported("potential has no Hessian");
}

Potential::Potential(int dim, std::shared_ptr<const EnergyModel> model, PotentialInfo info)
    : dim_(dim), model_(std::move(model)), info_(std::move(info)) {
  if (dim_ < 1) throw InvalidParameter("potential dimension must be positive");
  if (!model_) throw InvalidParameter("potential model is null");
  if (info_.alpha && *info_.alpha <= 0) throw InvalidParameter("alpha must be positive");
  if (info_.lipschitz && *info_.lipschitz <= 0) throw InvalidParameter("lipschitz must be positive");
  if (info_.alpha && info_.lipschitz && *info_.alpha > *info_.lipschitz * (1 + 1e-12)) {
    throw InvalidParameter("alpha must not exceed the Lipschitz constant");
  }
}

namespace {

class FunctionModel final : public EnergyModel {
 public:
  FunctionModel(Potential::ValueFn v, Potential::GradFn g, Potential::HessFn h)
      : value_(std::move(v)), grad_(std::move(g)), hess_(std::move(h)) {}

  double value(ConstVecRef theta) const override { return value_(theta); }
  void gradient(ConstVecRef theta, VecRef out) const override { out = grad_(theta); }
  bool has_hessian() const override { return static_cast<bool>(hess_); }
  void hessian(ConstVecRef theta, MatRef out) const override {
    if (!hess_) EnergyModel::hessian(theta, out);
    out = hess_(theta);
  }

 private:
  Potential::ValueFn value_;
  Potential::GradFn grad_;
  Potential::HessFn hess_;
};

class ShiftedModel final : public EnergyModel {
 public:
  ShiftedModel(std::shared_ptr<const EnergyModel> base, double c) : base_(std::move(base)), c_(c) {}

  double value(ConstVecRef theta) const override { return base_->value(theta) + c_; }
  void gradient(ConstVecRef theta, VecRef out) const override { base_->gradient(theta, out); }
  bool has_hessian() const override { return base_->has_hessian(); }
  void hessian(ConstVecRef theta, MatRef out) const override { base_->hessian(theta, out); }

 private:
  std::shared_ptr<const EnergyModel> base_;
  double c_;
};

class DoubleWell final : public EnergyModel {
 public:
  double value(ConstVecRef theta) const override {
    const double t2 = theta[0] * theta[0];
    return 0.375 * t2 * t2 - 0.75 * t2;
  }
  void gradient(ConstVecRef theta, VecRef out) const override {
    const double t = theta[0];
    out[0] = 1.5 * t * (t * t - 1.0);
  }
  bool has_hessian() const override { return true; }
  void hessian(ConstVecRef theta, MatRef out) const override {
    const double t = theta[0];
    out(0, 0) = 4.5 * t * t - 1.5;
  }
};

class Quadratic final : public EnergyModel {
 public:
  explicit Quadratic(Vector coeffs) : coeffs_(std::move(coeffs)) {}

  double value(ConstVecRef theta) const override {
    return (coeffs_.array() * theta.array().square()).sum();
  }
  void gradient(ConstVecRef theta, VecRef out) const override {
    out = 2.0 * coeffs_.cwiseProduct(theta);
  }
  bool has_hessian() const override { return true; }
  void hessian(ConstVecRef, MatRef out) const override {
    out.setZero();
    out.diagonal() = 2.0 * coeffs_;
  }

 private:
  Vector coeffs_;
};

// Data misfit plus prior term, each weighted by its precision.
class GaussianPosteriorModel final : public EnergyModel {
 public:
  GaussianPosteriorModel(Matrix design, Matrix noise_precision, Vector data, Matrix prior_precision,
                         Vector prior_mean)
      : design_(std::move(design)),
        noise_precision_(std::move(noise_precision)),
        data_(std::move(data)),
        prior_precision_(std::move(prior_precision)),
        prior_mean_(std::move(prior_mean)) {
    precision_ = design_.transpose() * noise_precision_ * design_ + prior_precision_;
    precision_ = 0.5 * (precision_ + precision_.transpose()).eval();
  }

  double value(ConstVecRef theta) const override {
    const Vector r = data_ - design_ * theta;
    const Vector d = theta - prior_mean_;
    return 0.5 * r.dot(noise_precision_ * r) + 0.5 * d.dot(prior_precision_ * d);
  }
  void gradient(ConstVecRef theta, VecRef out) const override {
    const Vector r = data_ - design_ * theta;
    out = -design_.transpose() * (noise_precision_ * r) + prior_precision_ * (theta - prior_mean_);
  }
  bool has_hessian() const override { return true; }
  void hessian(ConstVecRef, MatRef out) const override { out = precision_; }

  const Matrix& precision() const { return precision_; }

 private:
  Matrix design_;
  Matrix noise_precision_;
  Vector data_;
  Matrix prior_precision_;
  Vector prior_mean_;
  Matrix precision_;
};

class Mixture final : public EnergyModel {
 public:
  struct Component {
    double log_weight;
    Vector mean;
    Matrix precision;
    double log_norm;  // log of the Gaussian normalizing factor
  };

  explicit Mixture(std::vector<Component> comps) : comps_(std::move(comps)) {}

  double value(ConstVecRef theta) const override {
    double mx = -std::numeric_limits<double>::infinity();
    thread_local std::vector<double> logs;
    logs.resize(comps_.size());
    for (std::size_t i = 0; i < comps_.size(); ++i) {
      logs[i] = log_term(i, theta);
      mx = std::max(mx, logs[i]);
    }
    if (!std::isfinite(mx)) return std::numeric_limits<double>::infinity();
    double s = 0.0;
    for (double l : logs) s += std::exp(l - mx);
    return -(mx + std::log(s));
  }

  void gradient(ConstVecRef theta, VecRef out) const override {
    const auto resp = responsibilities(theta);
    out.setZero();
    for (std::size_t i = 0; i < comps_.size(); ++i) {
      out += resp[i] * (comps_[i].precision * (theta - comps_[i].mean));
    }
  }

  bool has_hessian() const override { return true; }
  void hessian(ConstVecRef theta, MatRef out) const override {
    const auto resp = responsibilities(theta);
    const Eigen::Index d = theta.size();
    Vector mean_g = Vector::Zero(d);
    out.setZero();
    for (std::size_t i = 0; i < comps_.size(); ++i) {
      const Vector g = comps_[i].precision * (theta - comps_[i].mean);
      out += resp[i] * (comps_[i].precision - g * g.transpose());
      mean_g += resp[i] * g;
    }
    out += mean_g * mean_g.transpose();
  }

 private:
  double log_term(std::size_t i, ConstVecRef theta) const {
    const auto& c = comps_[i];
    const Vector d = theta - c.mean;
    return c.log_weight + c.log_norm - 0.5 * d.dot(c.precision * d);
  }

  std::vector<double> responsibilities(ConstVecRef theta) const {
    std::vector<double> r(comps_.size());
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < comps_.size(); ++i) {
      r[i] = log_term(i, theta);
      mx = std::max(mx, r[i]);
    }
    double s = 0.0;
    for (double& v : r) {
      v = std::exp(v - mx);
      s += v;
    }
    for (double& v : r) v /= s;
    return r;
  }

  std::vector<Component> comps_;
};

class Boltzmann final : public EnergyModel {
 public:
  Boltzmann(Potential u, Potential k, double beta) : u_(std::move(u)), k_(std::move(k)), beta_(beta) {}

  double value(ConstVecRef theta) const override {
    return beta_ * (u_.value(theta.head(u_.dim())) + k_.value(theta.tail(k_.dim())));
  }
  void gradient(ConstVecRef theta, VecRef out) const override {
    u_.gradient(theta.head(u_.dim()), out.head(u_.dim()));
    k_.gradient(theta.tail(k_.dim()), out.tail(k_.dim()));
    out *= beta_;
  }
  bool has_hessian() const override { return u_.has_hessian() && k_.has_hessian(); }
  void hessian(ConstVecRef theta, MatRef out) const override {
    const int du = u_.dim();
    const int dk = k_.dim();
    out.setZero();
    out.topLeftCorner(du, du) = beta_ * u_.hessian(theta.head(du));
    out.bottomRightCorner(dk, dk) = beta_ * k_.hessian(theta.tail(dk));
  }

 private:
  Potential u_;
  Potential k_;
  double beta_;
};

Eigen::LLT<Matrix> checked_llt(const Matrix& m, const char* what) {
  if (m.rows() != m.cols()) throw DimensionMismatch(std::string(what) + " must be square");
  if (!m.isApprox(m.transpose(), 1e-12)) throw InvalidParameter(std::string(what) + " must be symmetric");
  Eigen::LLT<Matrix> llt(m);
  if (llt.info() != Eigen::Success) throw InvalidParameter(std::string(what) + " must be positive definite");
  return llt;
}

Matrix spd_inverse(const Matrix& m, const char* what) {
  auto llt = checked_llt(m, what);
  return llt.solve(Matrix::Identity(m.rows(), m.cols()));
}

std::vector<double> parse_numbers(const std::string& text, char sep, const std::string& id) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string tok;
  while (std::getline(ss, tok, sep)) {
    try {
      std::size_t pos = 0;
      out.push_back(std::stod(tok, &pos));
      while (pos < tok.size() && std::isspace(static_cast<unsigned char>(tok[pos]))) ++pos;
      if (pos != tok.size()) throw std::invalid_argument(tok);
    } catch (const std::exception&) {
      throw InvalidParameter("bad number '" + tok + "' in potential identifier '" + id + "'");
    }
  }
  return out;
}

}  // namespace

Potential Potential::from_functions(int dim, ValueFn value, GradFn gradient, HessFn hessian,
                                    PotentialInfo info) {
  if (!value || !gradient) throw InvalidParameter("value and gradient callables are required");
  return Potential(dim, std::make_shared<FunctionModel>(std::move(value), std::move(gradient), std::move(hessian)),
                   std::move(info));
}

Vector Potential::gradient(ConstVecRef theta) const {
  Vector g(dim_);
  model_->gradient(theta, g);
  return g;
}

Matrix Potential::hessian(ConstVecRef theta) const {
  if (!model_->has_hessian()) throw Unsupported("potential '" + info_.name + "' has no Hessian");
  Matrix h(dim_, dim_);
  model_->hessian(theta, h);
  return h;
}

Potential Potential::shifted(double c) const {
  PotentialInfo info = info_;
  if (info.v_star) *info.v_star += c;
  if (info.log_partition) *info.log_partition -= c;
  info.name += "+const";
  return Potential(dim_, std::make_shared<ShiftedModel>(model_, c), std::move(info));
}

Potential Potential::with_info(PotentialInfo info) const { return Potential(dim_, model_, std::move(info)); }

void GaussianSpec::validate() const {
  if (mean.size() == 0) throw InvalidParameter("Gaussian mean is empty");
  if (covariance.rows() != mean.size() || covariance.cols() != mean.size()) {
    throw DimensionMismatch("Gaussian covariance does not match the mean dimension");
  }
  checked_llt(covariance, "covariance");
}

Potential make_double_well() {
  PotentialInfo info;
  info.name = "double_well";
  info.v_star = -0.375;
  return Potential(1, std::make_shared<DoubleWell>(), info);
}

Potential make_quadratic(std::span<const double> coeffs) {
  if (coeffs.empty()) throw InvalidParameter("quadratic needs at least one coefficient");
  Vector a(static_cast<Eigen::Index>(coeffs.size()));
  for (std::size_t i = 0; i < coeffs.size(); ++i) {
    if (!(coeffs[i] > 0)) throw InvalidParameter("quadratic coefficients must be positive");
    a[static_cast<Eigen::Index>(i)] = coeffs[i];
  }
  PotentialInfo info;
  info.name = "quadratic";
  info.v_star = 0.0;
  info.alpha = 2.0 * a.minCoeff();
  info.lipschitz = 2.0 * a.maxCoeff();
  // ∫ exp(−a θ²) = √(π / a)
  double logz = 0.0;
  for (double ai : coeffs) logz += 0.5 * std::log(std::numbers::pi / ai);
  info.log_partition = logz;
  return Potential(static_cast<int>(a.size()), std::make_shared<Quadratic>(a), info);
}

Potential make_quadratic(std::initializer_list<double> coeffs) {
  return make_quadratic(std::span<const double>(coeffs.begin(), coeffs.size()));
}

Potential make_pl_not_convex() {
  PotentialInfo info;
  info.name = "pl_not_convex";
  info.v_star = 0.0;
  info.alpha = 1.0;
  info.lipschitz = 1.0;
  return Potential::from_functions(
      2, [](const Vector& t) { return 0.5 * t[0] * t[0]; },
      [](const Vector& t) { return Vector{{t[0], 0.0}}; },
      [](const Vector&) { return Matrix{{1.0, 0.0}, {0.0, 0.0}}; }, info);
}

PosteriorResult make_gaussian_posterior(const GaussianSpec& prior, const Matrix& design,
                                        const Matrix& noise_cov, const Vector& data) {
  prior.validate();
  const Eigen::Index d = prior.mean.size();
  if (design.cols() != d) throw DimensionMismatch("design matrix columns must equal the parameter dimension");
  if (design.rows() != data.size()) throw DimensionMismatch("design matrix rows must equal the data dimension");
  if (noise_cov.rows() != data.size() || noise_cov.cols() != data.size()) {
    throw DimensionMismatch("noise covariance must match the data dimension");
  }
  const Matrix noise_prec = spd_inverse(noise_cov, "noise covariance");
  const Matrix prior_prec = spd_inverse(prior.covariance, "prior covariance");

  auto model = std::make_shared<GaussianPosteriorModel>(design, noise_prec, data, prior_prec, prior.mean);
  const Matrix& post_prec = model->precision();
  Eigen::LLT<Matrix> llt(post_prec);
  if (llt.info() != Eigen::Success) throw InvalidParameter("posterior precision is not positive definite");

  GaussianSpec post;
  post.mean = llt.solve(design.transpose() * noise_prec * data + prior_prec * prior.mean);
  post.covariance = llt.solve(Matrix::Identity(d, d));
  post.covariance = 0.5 * (post.covariance + post.covariance.transpose()).eval();

  Eigen::SelfAdjointEigenSolver<Matrix> eig(post_prec, Eigen::EigenvaluesOnly);
  PotentialInfo info;
  info.name = "gaussian_posterior";
  info.alpha = eig.eigenvalues().minCoeff();
  info.lipschitz = eig.eigenvalues().maxCoeff();
  info.v_star = model->value(post.mean);
  // log ∫ exp(−V) = −V* + (d/2) log 2π − ½ log det P
  const double logdet = 2.0 * Eigen::MatrixXd(llt.matrixL()).diagonal().array().log().sum();
  info.log_partition = -*info.v_star + 0.5 * static_cast<double>(d) * std::log(2.0 * std::numbers::pi) - 0.5 * logdet;

  return {Potential(static_cast<int>(d), std::move(model), info), std::move(post)};
}

Potential make_gaussian_mixture(const std::vector<MixtureComponent>& components) {
  if (components.empty()) throw InvalidParameter("mixture needs at least one component");
  const int d = components.front().gaussian.dim();
  double wsum = 0.0;
  std::vector<Mixture::Component> comps;
  for (const auto& c : components) {
    if (!(c.weight > 0)) throw InvalidParameter("mixture weights must be positive");
    c.gaussian.validate();
    if (c.gaussian.dim() != d) throw DimensionMismatch("mixture components differ in dimension");
    wsum += c.weight;
    auto llt = checked_llt(c.gaussian.covariance, "component covariance");
    const double logdet = 2.0 * Matrix(llt.matrixL()).diagonal().array().log().sum();
    comps.push_back({std::log(c.weight), c.gaussian.mean, llt.solve(Matrix::Identity(d, d)),
                     -0.5 * d * std::log(2.0 * std::numbers::pi) - 0.5 * logdet});
  }
  if (std::abs(wsum - 1.0) > 1e-12) throw InvalidParameter("mixture weights must sum to 1");
  PotentialInfo info;
  info.name = "gaussian_mixture";
  info.log_partition = 0.0;
  return Potential(d, std::make_shared<Mixture>(std::move(comps)), info);
}

Potential make_boltzmann(const Potential& u, const Potential& k, double beta) {
  if (!(beta > 0)) throw InvalidParameter("inverse temperature beta must be positive");
  PotentialInfo info;
  info.name = "boltzmann";
  if (u.v_star() && k.v_star()) info.v_star = beta * (*u.v_star() + *k.v_star());
  if (u.alpha() && k.alpha()) info.alpha = beta * std::min(*u.alpha(), *k.alpha());
  if (u.lipschitz() && k.lipschitz()) info.lipschitz = beta * std::max(*u.lipschitz(), *k.lipschitz());
  return Potential(u.dim() + k.dim(), std::make_shared<Boltzmann>(u, k, beta), info);
}

Vector finite_diff_grad(const Potential& p, ConstVecRef theta, double h) {
  if (!(h > 0)) throw InvalidParameter("finite difference step must be positive");
  Vector g(theta.size());
  Vector x = theta;
  for (Eigen::Index i = 0; i < theta.size(); ++i) {
    const double xi = x[i];
    x[i] = xi + h;
    const double fp = p.value(x);
    x[i] = xi - h;
    const double fm = p.value(x);
    x[i] = xi;
    g[i] = (fp - fm) / (2.0 * h);
  }
  return g;
}

double estimate_pl_constant(const Potential& p, std::span<const Vector> probes) {
  if (!p.v_star()) throw Unsupported("PL estimation requires a known infimum V*");
  if (probes.empty()) throw InvalidParameter("PL estimation needs at least one probe");
  const double vstar = *p.v_star();
  double best = std::numeric_limits<double>::infinity();
  for (const auto& th : probes) {
    const double gap = p.value(th) - vstar;
    if (gap == 0.0) continue;
    best = std::min(best, p.gradient(th).squaredNorm() / (2.0 * gap));
  }
  return best;
}

Potential potential_from_id(const std::string& id) {
  const auto colon = id.find(':');
  const std::string head = id.substr(0, colon);
  const std::string args = colon == std::string::npos ? "" : id.substr(colon + 1);
  auto require_no_args = [&] {
    if (colon != std::string::npos) throw InvalidParameter("potential '" + head + "' takes no parameters");
  };

  if (head == "double_well") {
    require_no_args();
    return make_double_well();
  }
  if (head == "pl_not_convex") {
    require_no_args();
    return make_pl_not_convex();
  }
  if (head == "quadratic") {
    const auto a = parse_numbers(args, ',', id);
    return make_quadratic(std::span<const double>(a));
  }
  if (head == "posterior") {
    const auto v = parse_numbers(args, ',', id);
    if (v.size() != 5) throw InvalidParameter("posterior expects m0,v0,a,noise_var,y");
    GaussianSpec prior{Vector::Constant(1, v[0]), Matrix::Constant(1, 1, v[1])};
    return make_gaussian_posterior(prior, Matrix::Constant(1, 1, v[2]), Matrix::Constant(1, 1, v[3]),
                                   Vector::Constant(1, v[4]))
        .potential;
  }
  if (head == "mixture") {
    std::vector<MixtureComponent> comps;
    std::stringstream ss(args);
    std::string part;
    while (std::getline(ss, part, ';')) {
      const auto v = parse_numbers(part, ',', id);
      if (v.size() != 3) throw InvalidParameter("mixture component expects weight,mean,variance");
      comps.push_back({v[0], GaussianSpec{Vector::Constant(1, v[1]), Matrix::Constant(1, 1, v[2])}});
    }
    return make_gaussian_mixture(comps);
  }
  if (head == "boltzmann") {
    const auto v = parse_numbers(args, ',', id);
    if (v.size() != 1) throw InvalidParameter("boltzmann expects beta");
    return make_boltzmann(make_quadratic({0.5}), make_quadratic({0.5}), v[0]);
  }
  throw InvalidParameter("unknown potential '" + id + "'");
}

std::vector<std::pair<std::string, std::string>> potential_catalog() {
  return {
      {"double_well", "V = 3/8 t^4 - 3/4 t^2 on R (minima at -1 and +1)"},
      {"quadratic:a1,...,ad", "V = sum_i a_i t_i^2 (a_i > 0)"},
      {"pl_not_convex", "V = t1^2 / 2 on R^2 (PL with alpha = 1, not strongly convex)"},
      {"posterior:m0,v0,a,noise_var,y", "1-D linear-Gaussian posterior, prior N(m0, v0), y = a t + N(0, noise_var)"},
      {"mixture:w,m,v;w,m,v;...", "V = -log sum_i w_i N(t; m_i, v_i) in 1-D"},
      {"boltzmann:beta", "V = beta (q^2/2 + p^2/2) on R^2"},
  };
}

}  // namespace gradflow
