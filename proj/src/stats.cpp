#include "ctlab/stats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <random>

namespace ctlab::stats {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

void require_full_rank(const Eigen::MatrixXd& x) {
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(x);
  if (qr.rank() < x.cols()) {
    throw Error(ErrorCode::Singular, "design matrix is rank deficient (rank " +
                                         std::to_string(qr.rank()) + " of " +
                                         std::to_string(x.cols()) + ")");
  }
}

/// phi(z) / Phi(z), stable for very negative z.
double inverse_mills(double z) {
  if (z > -30.0) return normal_pdf(z) / normal_cdf(z);
  return std::exp(-0.5 * z * z - 0.5 * std::log(2.0 * std::numbers::pi) - log_normal_cdf(z));
}

Eigen::VectorXd solve_spd_or_throw(const Eigen::MatrixXd& a, const Eigen::VectorXd& b) {
  Eigen::LDLT<Eigen::MatrixXd> ldlt(a);
  if (ldlt.info() != Eigen::Success || !ldlt.isPositive()) {
    throw Error(ErrorCode::Singular, "information matrix is not positive definite");
  }
  return ldlt.solve(b);
}

/// Covariance from an information matrix, or nullopt if it is not invertible.
std::optional<Eigen::MatrixXd> invert_information(const Eigen::MatrixXd& info) {
  Eigen::LLT<Eigen::MatrixXd> llt(info);
  if (llt.info() != Eigen::Success) return std::nullopt;
  Eigen::MatrixXd cov = llt.solve(Eigen::MatrixXd::Identity(info.rows(), info.cols()));
  if (!cov.allFinite()) return std::nullopt;
  return cov;
}

}  // namespace

// --- Design matrix -----------------------------------------------------------

DesignMatrix DesignMatrix::from_columns(
    const std::vector<std::pair<std::string, std::vector<double>>>& cols, bool add_intercept) {
  DesignMatrix m;
  const std::size_t n = cols.empty() ? 0 : cols.front().second.size();
  const auto p = static_cast<Eigen::Index>(cols.size() + (add_intercept ? 1 : 0));
  m.values.resize(static_cast<Eigen::Index>(n), p);
  for (std::size_t j = 0; j < cols.size(); ++j) {
    if (cols[j].second.size() != n) {
      throw Error(ErrorCode::SchemaError, "column " + cols[j].first + " has the wrong length");
    }
    m.names.push_back(cols[j].first);
    for (std::size_t i = 0; i < n; ++i) {
      m.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = cols[j].second[i];
    }
  }
  if (add_intercept) {
    m.names.push_back("Intercept");
    m.values.col(p - 1).setOnes();
  }
  return m;
}

Eigen::Index DesignMatrix::index_of(const std::string& name) const {
  const auto it = std::find(names.begin(), names.end(), name);
  if (it == names.end()) throw Error(ErrorCode::SchemaError, "no regressor named " + name);
  return it - names.begin();
}

std::pair<DesignMatrix, Eigen::VectorXd> listwise_delete(const DesignMatrix& x,
                                                         const Eigen::VectorXd& y) {
  if (y.size() != x.rows()) throw Error(ErrorCode::SchemaError, "outcome length mismatch");
  std::vector<Eigen::Index> keep;
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    if (std::isfinite(y(i)) && x.values.row(i).allFinite()) keep.push_back(i);
  }
  DesignMatrix out;
  out.names = x.names;
  out.values.resize(static_cast<Eigen::Index>(keep.size()), x.cols());
  Eigen::VectorXd yk(static_cast<Eigen::Index>(keep.size()));
  for (std::size_t r = 0; r < keep.size(); ++r) {
    out.values.row(static_cast<Eigen::Index>(r)) = x.values.row(keep[r]);
    yk(static_cast<Eigen::Index>(r)) = y(keep[r]);
  }
  return {std::move(out), std::move(yk)};
}

std::string_view to_string(Convergence c) {
  switch (c) {
    case Convergence::Converged: return "Converged";
    case Convergence::MaxIterations: return "MaxIterations";
    case Convergence::Singular: return "Singular";
  }
  return "Converged";
}

double FitResult::coefficient(const std::string& name) const {
  const auto it = std::find(names.begin(), names.end(), name);
  if (it == names.end()) throw Error(ErrorCode::SchemaError, "no coefficient named " + name);
  return coefficients(it - names.begin());
}

double FitResult::standard_error(const std::string& name) const {
  const auto it = std::find(names.begin(), names.end(), name);
  if (it == names.end()) throw Error(ErrorCode::SchemaError, "no coefficient named " + name);
  return standard_errors(it - names.begin());
}

double FitResult::p_value(const std::string& name) const {
  return two_sided_p(coefficient(name) / standard_error(name));
}

// --- Normal distribution -----------------------------------------------------

double normal_pdf(double z) { return std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi); }

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

double log_normal_cdf(double z) {
  if (z > -30.0) return std::log(normal_cdf(z));
  // Asymptotic Mills-ratio expansion in the far lower tail.
  const double z2 = z * z;
  return -0.5 * z2 - 0.5 * std::log(2.0 * std::numbers::pi) - std::log(-z) +
         std::log1p(-1.0 / z2 + 3.0 / (z2 * z2) - 15.0 / (z2 * z2 * z2));
}

double two_sided_p(double z) {
  if (!std::isfinite(z)) return kNaN;
  return std::erfc(std::abs(z) / std::numbers::sqrt2);
}

std::string significance_stars(double p) {
  if (!(p >= 0.0)) return "";
  if (p < 0.001) return "***";
  if (p < 0.01) return "**";
  if (p < 0.05) return "*";
  return "";
}

// --- Tobit -------------------------------------------------------------------

double tobit_loglik(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, double lower, double upper,
                    const Eigen::VectorXd& beta, double sigma) {
  if (!(sigma > 0.0)) return -std::numeric_limits<double>::infinity();
  const Eigen::VectorXd eta = x * beta;
  const double log_sigma = std::log(sigma);
  const double log_root_2pi = 0.5 * std::log(2.0 * std::numbers::pi);
  double ll = 0.0;
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    if (y(i) <= lower) {
      ll += log_normal_cdf((lower - eta(i)) / sigma);
    } else if (y(i) >= upper) {
      ll += log_normal_cdf(-(upper - eta(i)) / sigma);
    } else {
      const double r = (y(i) - eta(i)) / sigma;
      ll += -0.5 * r * r - log_root_2pi - log_sigma;
    }
  }
  return ll;
}

Eigen::VectorXd tobit_gradient(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, double lower,
                               double upper, const Eigen::VectorXd& beta, double sigma) {
  const Eigen::Index p = x.cols();
  Eigen::VectorXd g = Eigen::VectorXd::Zero(p + 1);
  const Eigen::VectorXd eta = x * beta;
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    double d_eta = 0.0;  // d l_i / d eta_i
    double d_sigma = 0.0;
    if (y(i) <= lower) {
      const double a = (lower - eta(i)) / sigma;
      const double lam = inverse_mills(a);
      d_eta = -lam / sigma;
      d_sigma = -lam * a / sigma;
    } else if (y(i) >= upper) {
      const double b = (upper - eta(i)) / sigma;
      const double lam = inverse_mills(-b);
      d_eta = lam / sigma;
      d_sigma = lam * b / sigma;
    } else {
      const double r = (y(i) - eta(i)) / sigma;
      d_eta = r / sigma;
      d_sigma = (r * r - 1.0) / sigma;
    }
    g.head(p) += d_eta * x.row(i).transpose();
    g(p) += d_sigma;
  }
  return g;
}

FitResult tobit_fit(const DesignMatrix& design, const Eigen::VectorXd& y, double lower, double upper,
                    const TobitOptions& options) {
  if (!(lower < upper)) throw Error(ErrorCode::ConfigError, "tobit needs lower < upper");
  const Eigen::MatrixXd& x = design.values;
  const Eigen::Index n = x.rows();
  const Eigen::Index p = x.cols();
  if (y.size() != n) throw Error(ErrorCode::SchemaError, "outcome length mismatch");
  if (n <= p) throw Error(ErrorCode::InsufficientData, "fewer observations than parameters");
  if (!x.allFinite() || !y.allFinite()) {
    throw Error(ErrorCode::SchemaError, "missing values; apply listwise deletion first");
  }
  require_full_rank(x);

  Eigen::Index n_low = 0, n_high = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (y(i) < lower - 1e-12 || y(i) > upper + 1e-12) {
      throw Error(ErrorCode::SchemaError, "outcome outside censoring bounds");
    }
    n_low += y(i) <= lower;
    n_high += y(i) >= upper;
  }
  if (n_low == n || n_high == n) {
    throw Error(ErrorCode::Degenerate, "all observations censored at one bound");
  }

  // OLS start.
  Eigen::VectorXd beta = x.colPivHouseholderQr().solve(y);
  const Eigen::VectorXd resid = y - x * beta;
  double sigma = std::sqrt(resid.squaredNorm() / static_cast<double>(n));
  if (!(sigma > 1e-8)) sigma = 1e-3;

  // Minimise f(theta) = -loglik with theta = (beta, log sigma).
  auto unpack = [p](const Eigen::VectorXd& th, Eigen::VectorXd& b, double& s) {
    b = th.head(p);
    s = std::exp(th(p));
  };
  auto objective = [&](const Eigen::VectorXd& th) {
    Eigen::VectorXd b;
    double s;
    unpack(th, b, s);
    return -tobit_loglik(x, y, lower, upper, b, s);
  };
  auto grad_theta = [&](const Eigen::VectorXd& th) {
    Eigen::VectorXd b;
    double s;
    unpack(th, b, s);
    Eigen::VectorXd g = tobit_gradient(x, y, lower, upper, b, s);
    g(p) *= s;
    return Eigen::VectorXd(-g);
  };
  auto natural_gradient_norm = [&](const Eigen::VectorXd& th) {
    Eigen::VectorXd b;
    double s;
    unpack(th, b, s);
    return tobit_gradient(x, y, lower, upper, b, s).lpNorm<Eigen::Infinity>();
  };

  Eigen::VectorXd theta(p + 1);
  theta << beta, std::log(sigma);
  double f = objective(theta);
  Eigen::VectorXd g = grad_theta(theta);
  Eigen::MatrixXd h_inv = Eigen::MatrixXd::Identity(p + 1, p + 1) / std::max(1.0, g.norm());

  int iter = 0;
  bool converged = natural_gradient_norm(theta) < options.gradient_tolerance;
  bool stalled = false;
  for (; iter < options.max_iterations && !converged && !stalled; ++iter) {
    Eigen::VectorXd dir = -h_inv * g;
    if (dir.dot(g) >= 0.0) {
      h_inv = Eigen::MatrixXd::Identity(p + 1, p + 1) / std::max(1.0, g.norm());
      dir = -h_inv * g;
    }
    double step = 1.0;
    Eigen::VectorXd next;
    double f_next = 0.0;
    bool accepted = false;
    for (int ls = 0; ls < 60; ++ls) {
      next = theta + step * dir;
      f_next = objective(next);
      if (std::isfinite(f_next) && f_next <= f + 1e-4 * step * g.dot(dir)) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) {
      stalled = true;
      break;
    }
    const Eigen::VectorXd g_next = grad_theta(next);
    const Eigen::VectorXd s = next - theta;
    const Eigen::VectorXd yk = g_next - g;
    const double sy = s.dot(yk);
    if (sy > 1e-14) {
      if (iter == 0) h_inv = Eigen::MatrixXd::Identity(p + 1, p + 1) * (sy / yk.squaredNorm());
      const double rho = 1.0 / sy;
      const Eigen::MatrixXd id = Eigen::MatrixXd::Identity(p + 1, p + 1);
      h_inv = (id - rho * s * yk.transpose()) * h_inv * (id - rho * yk * s.transpose()) +
              rho * s * s.transpose();
    }
    theta = next;
    f = f_next;
    g = g_next;
    converged = natural_gradient_norm(theta) < options.gradient_tolerance;
  }

  // Observed information in (beta, sigma) by central differences of the
  // analytic gradient.
  auto observed_information = [&](const Eigen::VectorXd& b, double s) {
    Eigen::VectorXd point(p + 1);
    point << b, s;
    Eigen::MatrixXd info(p + 1, p + 1);
    for (Eigen::Index j = 0; j <= p; ++j) {
      const double hj = 1e-5 * std::max(1.0, std::abs(point(j)));
      Eigen::VectorXd up = point, dn = point;
      up(j) += hj;
      dn(j) -= hj;
      info.col(j) = -(tobit_gradient(x, y, lower, upper, up.head(p), up(p)) -
                      tobit_gradient(x, y, lower, upper, dn.head(p), dn(p))) /
                    (2.0 * hj);
    }
    return Eigen::MatrixXd(0.5 * (info + info.transpose()));
  };

  // Newton polish on (beta, sigma) when the quasi-Newton pass stops short.
  Eigen::VectorXd b;
  double s;
  unpack(theta, b, s);
  for (int polish = 0; polish < 50 && !converged; ++polish, ++iter) {
    const Eigen::MatrixXd info = observed_information(b, s);
    Eigen::LDLT<Eigen::MatrixXd> ldlt(info);
    if (ldlt.info() != Eigen::Success || !ldlt.isPositive()) break;
    const Eigen::VectorXd grad = tobit_gradient(x, y, lower, upper, b, s);
    const Eigen::VectorXd delta = ldlt.solve(grad);
    const double ll0 = tobit_loglik(x, y, lower, upper, b, s);
    double step = 1.0;
    bool moved = false;
    for (int ls = 0; ls < 40; ++ls) {
      const Eigen::VectorXd bn = b + step * delta.head(p);
      const double sn = s + step * delta(p);
      if (sn > 0.0 && tobit_loglik(x, y, lower, upper, bn, sn) >= ll0 - 1e-12) {
        b = bn;
        s = sn;
        moved = true;
        break;
      }
      step *= 0.5;
    }
    if (!moved) break;
    converged = tobit_gradient(x, y, lower, upper, b, s).lpNorm<Eigen::Infinity>() <
                options.gradient_tolerance;
  }

  FitResult fit;
  fit.names = design.names;
  fit.coefficients = b;
  fit.sigma = s;
  fit.loglik = tobit_loglik(x, y, lower, upper, b, s);
  fit.n = static_cast<int>(n);
  fit.iterations = iter;
  fit.convergence = converged ? Convergence::Converged : Convergence::MaxIterations;
  const auto cov = invert_information(observed_information(b, s));
  if (cov) {
    fit.standard_errors = cov->diagonal().head(p).cwiseSqrt();
    fit.sigma_se = std::sqrt((*cov)(p, p));
  } else {
    fit.standard_errors = Eigen::VectorXd::Constant(p, kNaN);
    fit.convergence = Convergence::Singular;
  }
  return fit;
}

// --- Logistic and probit -----------------------------------------------------

namespace {

double log1p_exp(double t) { return t > 0 ? t + std::log1p(std::exp(-t)) : std::log1p(std::exp(t)); }

double sigmoid(double t) {
  return t >= 0 ? 1.0 / (1.0 + std::exp(-t)) : std::exp(t) / (1.0 + std::exp(t));
}

void check_binary(const DesignMatrix& design, const Eigen::VectorXd& y) {
  if (y.size() != design.rows()) throw Error(ErrorCode::SchemaError, "outcome length mismatch");
  if (!design.values.allFinite() || !y.allFinite()) {
    throw Error(ErrorCode::SchemaError, "missing values; apply listwise deletion first");
  }
  bool has0 = false, has1 = false;
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    if (y(i) == 0.0) {
      has0 = true;
    } else if (y(i) == 1.0) {
      has1 = true;
    } else {
      throw Error(ErrorCode::SchemaError, "binary outcome must be 0/1");
    }
  }
  if (!has0 || !has1) throw Error(ErrorCode::Degenerate, "outcome has a single class");
  require_full_rank(design.values);
}

}  // namespace

double logit_loglik(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const Eigen::VectorXd& beta) {
  const Eigen::VectorXd eta = x * beta;
  double ll = 0.0;
  for (Eigen::Index i = 0; i < y.size(); ++i) ll += y(i) * eta(i) - log1p_exp(eta(i));
  return ll;
}

Eigen::VectorXd logit_gradient(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                               const Eigen::VectorXd& beta) {
  const Eigen::VectorXd eta = x * beta;
  Eigen::VectorXd resid(y.size());
  for (Eigen::Index i = 0; i < y.size(); ++i) resid(i) = y(i) - sigmoid(eta(i));
  return x.transpose() * resid;
}

FitResult logit_fit(const DesignMatrix& design, const Eigen::VectorXd& y,
                    const BinaryOptions& options) {
  check_binary(design, y);
  const Eigen::MatrixXd& x = design.values;
  const Eigen::Index n = x.rows(), p = x.cols();

  auto information = [&](const Eigen::VectorXd& beta) {
    const Eigen::VectorXd eta = x * beta;
    Eigen::VectorXd w(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      const double mu = sigmoid(eta(i));
      w(i) = mu * (1.0 - mu);
    }
    return Eigen::MatrixXd(x.transpose() * w.asDiagonal() * x);
  };
  auto separated = [&](const Eigen::VectorXd& beta) {
    const Eigen::VectorXd eta = x * beta;
    for (Eigen::Index i = 0; i < n; ++i) {
      if (std::abs(y(i) - sigmoid(eta(i))) > 1e-8) return false;
    }
    return true;
  };

  Eigen::VectorXd beta = Eigen::VectorXd::Zero(p);
  double ll = logit_loglik(x, y, beta);
  bool converged = false;
  int iter = 0;
  for (; iter < options.max_iterations; ++iter) {
    const Eigen::VectorXd grad = logit_gradient(x, y, beta);
    if (grad.lpNorm<Eigen::Infinity>() < options.gradient_tolerance) {
      converged = true;
      break;
    }
    if (separated(beta)) throw Error(ErrorCode::Separation, "outcome perfectly separated");
    Eigen::VectorXd step;
    try {
      step = solve_spd_or_throw(information(beta), grad);
    } catch (const Error&) {
      throw Error(ErrorCode::Separation, "information matrix collapsed (separation)");
    }
    double t = 1.0;
    Eigen::VectorXd next = beta + step;
    double ll_next = logit_loglik(x, y, next);
    for (int half = 0; half < 30 && !(ll_next >= ll - 1e-12); ++half) {
      t *= 0.5;
      next = beta + t * step;
      ll_next = logit_loglik(x, y, next);
    }
    beta = next;
    ll = ll_next;
  }
  if (!converged) {
    const Eigen::VectorXd eta = x * beta;
    if (eta.lpNorm<Eigen::Infinity>() > 15.0) {
      throw Error(ErrorCode::Separation, "coefficients diverging (quasi-separation)");
    }
  }

  FitResult fit;
  fit.names = design.names;
  fit.coefficients = beta;
  fit.loglik = ll;
  fit.n = static_cast<int>(n);
  fit.iterations = iter;
  fit.convergence = converged ? Convergence::Converged : Convergence::MaxIterations;
  const auto cov = invert_information(information(beta));
  if (cov) {
    fit.standard_errors = cov->diagonal().cwiseSqrt();
  } else {
    fit.standard_errors = Eigen::VectorXd::Constant(p, kNaN);
    fit.convergence = Convergence::Singular;
  }
  return fit;
}

double probit_loglik(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const Eigen::VectorXd& beta) {
  const Eigen::VectorXd eta = x * beta;
  double ll = 0.0;
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    ll += y(i) == 1.0 ? log_normal_cdf(eta(i)) : log_normal_cdf(-eta(i));
  }
  return ll;
}

FitResult probit_fit(const DesignMatrix& design, const Eigen::VectorXd& y,
                     const BinaryOptions& options) {
  check_binary(design, y);
  const Eigen::MatrixXd& x = design.values;
  const Eigen::Index n = x.rows(), p = x.cols();

  // Score and expected information (Fisher scoring).
  auto score_info = [&](const Eigen::VectorXd& beta, Eigen::VectorXd& grad, Eigen::MatrixXd& info) {
    const Eigen::VectorXd eta = x * beta;
    grad = Eigen::VectorXd::Zero(p);
    Eigen::VectorXd w(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      // Signed inverse Mills ratio keeps the score finite in both tails.
      const double q = 2.0 * y(i) - 1.0;
      grad += q * inverse_mills(q * eta(i)) * x.row(i).transpose();
      w(i) = inverse_mills(eta(i)) * inverse_mills(-eta(i));
    }
    info = x.transpose() * w.asDiagonal() * x;
  };

  Eigen::VectorXd beta = Eigen::VectorXd::Zero(p);
  double ll = probit_loglik(x, y, beta);
  bool converged = false;
  int iter = 0;
  Eigen::VectorXd grad;
  Eigen::MatrixXd info;
  for (; iter < options.max_iterations; ++iter) {
    score_info(beta, grad, info);
    if (grad.lpNorm<Eigen::Infinity>() < options.gradient_tolerance) {
      converged = true;
      break;
    }
    Eigen::VectorXd step;
    try {
      step = solve_spd_or_throw(info, grad);
    } catch (const Error&) {
      throw Error(ErrorCode::Separation, "information matrix collapsed (separation)");
    }
    double t = 1.0;
    Eigen::VectorXd next = beta + step;
    double ll_next = probit_loglik(x, y, next);
    for (int half = 0; half < 30 && !(ll_next >= ll - 1e-12); ++half) {
      t *= 0.5;
      next = beta + t * step;
      ll_next = probit_loglik(x, y, next);
    }
    beta = next;
    ll = ll_next;
    if ((x * beta).lpNorm<Eigen::Infinity>() > 37.0) {
      throw Error(ErrorCode::Separation, "coefficients diverging (separation)");
    }
  }
  score_info(beta, grad, info);

  FitResult fit;
  fit.names = design.names;
  fit.coefficients = beta;
  fit.loglik = ll;
  fit.n = static_cast<int>(n);
  fit.iterations = iter;
  fit.convergence = converged ? Convergence::Converged : Convergence::MaxIterations;
  const auto cov = invert_information(info);
  if (cov) {
    fit.standard_errors = cov->diagonal().cwiseSqrt();
  } else {
    fit.standard_errors = Eigen::VectorXd::Constant(p, kNaN);
    fit.convergence = Convergence::Singular;
  }
  return fit;
}

// --- Descriptive ---------------------------------------------------------------

Eigen::MatrixXd pearson_matrix(const DesignMatrix& design) {
  const Eigen::MatrixXd& x = design.values;
  const Eigen::Index n = x.rows(), p = x.cols();
  if (n < 2) throw Error(ErrorCode::InsufficientData, "need at least two rows");
  Eigen::MatrixXd centered = x.rowwise() - x.colwise().mean();
  Eigen::VectorXd norms = centered.colwise().norm();
  for (Eigen::Index j = 0; j < p; ++j) {
    if (!(norms(j) > 0.0)) throw Error(ErrorCode::ConstantColumn, design.names.at(j));
  }
  Eigen::MatrixXd r(p, p);
  for (Eigen::Index a = 0; a < p; ++a) {
    r(a, a) = 1.0;
    for (Eigen::Index b = a + 1; b < p; ++b) {
      const double v =
          std::clamp(centered.col(a).dot(centered.col(b)) / (norms(a) * norms(b)), -1.0, 1.0);
      r(a, b) = r(b, a) = v;
    }
  }
  return r;
}

namespace {

struct Moments {
  double n = 0, m2 = 0, m3 = 0, m4 = 0;
};

Moments central_moments(std::span<const double> s) {
  Moments m;
  m.n = static_cast<double>(s.size());
  const double mean = std::accumulate(s.begin(), s.end(), 0.0) / m.n;
  for (double v : s) {
    const double d = v - mean;
    m.m2 += d * d;
    m.m3 += d * d * d;
    m.m4 += d * d * d * d;
  }
  m.m2 /= m.n;
  m.m3 /= m.n;
  m.m4 /= m.n;
  // Treat round-off variance around a constant sample as zero.
  const double scale = std::max(1.0, std::abs(mean));
  if (m.m2 <= 1e-24 * scale * scale) m.m2 = 0.0;
  return m;
}

}  // namespace

double skewness(std::span<const double> sample, SkewnessMethod method) {
  if (sample.size() < 3) throw Error(ErrorCode::InsufficientData, "skewness needs n >= 3");
  const auto m = central_moments(sample);
  if (m.m2 == 0.0) throw Error(ErrorCode::ZeroVariance, "constant sample");
  const double g1 = m.m3 / std::pow(m.m2, 1.5);
  const double n = m.n;
  switch (method) {
    case SkewnessMethod::g1: return g1;
    case SkewnessMethod::G1: return g1 * std::sqrt(n * (n - 1.0)) / (n - 2.0);
    case SkewnessMethod::b1: return g1 * std::pow((n - 1.0) / n, 1.5);
  }
  return g1;
}

TestResult normality_test(std::span<const double> sample, NormalityTest test) {
  if (sample.size() < 8) throw Error(ErrorCode::InsufficientData, "normality tests need n >= 8");
  const auto m = central_moments(sample);
  if (m.m2 == 0.0) throw Error(ErrorCode::ZeroVariance, "constant sample");
  const double n = m.n;
  const double g1 = m.m3 / std::pow(m.m2, 1.5);
  const double b2 = m.m4 / (m.m2 * m.m2);

  TestResult out;
  if (test == NormalityTest::JarqueBera) {
    out.statistic = n / 6.0 * (g1 * g1 + 0.25 * (b2 - 3.0) * (b2 - 3.0));
  } else {
    // Skewness component (D'Agostino 1970).
    const double y = g1 * std::sqrt((n + 1.0) * (n + 3.0) / (6.0 * (n - 2.0)));
    const double beta2 = 3.0 * (n * n + 27.0 * n - 70.0) * (n + 1.0) * (n + 3.0) /
                         ((n - 2.0) * (n + 5.0) * (n + 7.0) * (n + 9.0));
    const double w2 = -1.0 + std::sqrt(2.0 * (beta2 - 1.0));
    const double delta = 1.0 / std::sqrt(0.5 * std::log(w2));
    const double alpha = std::sqrt(2.0 / (w2 - 1.0));
    const double ya = y / alpha;
    const double z1 = delta * std::log(ya + std::sqrt(ya * ya + 1.0));
    // Kurtosis component (Anscombe & Glynn 1983).
    const double e = 3.0 * (n - 1.0) / (n + 1.0);
    const double var = 24.0 * n * (n - 2.0) * (n - 3.0) /
                       ((n + 1.0) * (n + 1.0) * (n + 3.0) * (n + 5.0));
    const double xk = (b2 - e) / std::sqrt(var);
    const double sqrt_beta1 = 6.0 * (n * n - 5.0 * n + 2.0) / ((n + 7.0) * (n + 9.0)) *
                              std::sqrt(6.0 * (n + 3.0) * (n + 5.0) / (n * (n - 2.0) * (n - 3.0)));
    const double a = 6.0 + 8.0 / sqrt_beta1 *
                               (2.0 / sqrt_beta1 + std::sqrt(1.0 + 4.0 / (sqrt_beta1 * sqrt_beta1)));
    const double term = (1.0 - 2.0 / a) / (1.0 + xk * std::sqrt(2.0 / (a - 4.0)));
    const double z2 = ((1.0 - 2.0 / (9.0 * a)) - std::cbrt(term)) / std::sqrt(2.0 / (9.0 * a));
    out.statistic = z1 * z1 + z2 * z2;
  }
  // Chi-square with two degrees of freedom.
  out.p_value = std::exp(-0.5 * out.statistic);
  return out;
}

// --- LOWESS ----------------------------------------------------------------------

std::vector<double> lowess_at(std::span<const double> x, std::span<const double> y, double fraction,
                              std::span<const double> query) {
  if (x.size() != y.size()) throw Error(ErrorCode::SchemaError, "x and y differ in length");
  if (!(fraction > 0.0 && fraction <= 1.0)) {
    throw Error(ErrorCode::ConfigError, "lowess fraction must be in (0,1]");
  }
  const std::size_t n = x.size();
  if (n < 2) throw Error(ErrorCode::InsufficientData, "lowess needs at least two points");
  const auto k = std::clamp<std::size_t>(
      static_cast<std::size_t>(std::llround(fraction * static_cast<double>(n))), 2, n);

  std::vector<double> out(query.size());
  std::vector<double> dist(n), scratch(n);
  for (std::size_t q = 0; q < query.size(); ++q) {
    const double x0 = query[q];
    for (std::size_t i = 0; i < n; ++i) dist[i] = std::abs(x[i] - x0);
    scratch = dist;
    std::nth_element(scratch.begin(), scratch.begin() + static_cast<std::ptrdiff_t>(k - 1),
                     scratch.end());
    const double h = scratch[k - 1];
    double s0 = 0, s1 = 0, s2 = 0, t0 = 0, t1 = 0;
    for (std::size_t i = 0; i < n; ++i) {
      double w;
      if (h <= 0.0) {
        w = dist[i] == 0.0 ? 1.0 : 0.0;
      } else {
        const double u = dist[i] / h;
        if (u >= 1.0) continue;
        const double c = 1.0 - u * u * u;
        w = c * c * c;
      }
      const double dx = x[i] - x0;
      s0 += w;
      s1 += w * dx;
      s2 += w * dx * dx;
      t0 += w * y[i];
      t1 += w * dx * y[i];
    }
    s2 += 1e-8;
    const double det = s0 * s2 - s1 * s1;
    out[q] = det > 0.0 ? (s2 * t0 - s1 * t1) / det : (s0 > 0.0 ? t0 / s0 : kNaN);
  }
  return out;
}

namespace {

double quantile_sorted(const std::vector<double>& v, double prob) {
  const double pos = prob * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

}  // namespace

LowessBand lowess(std::span<const double> x, std::span<const double> y, double fraction, int n_boot,
                  std::uint64_t seed) {
  if (x.size() != y.size()) throw Error(ErrorCode::SchemaError, "x and y differ in length");
  if (x.size() < 10) throw Error(ErrorCode::InsufficientData, "lowess needs n >= 10");
  if (n_boot < 0) throw Error(ErrorCode::ConfigError, "negative bootstrap count");

  LowessBand band;
  band.x.assign(x.begin(), x.end());
  std::sort(band.x.begin(), band.x.end());
  band.x.erase(std::unique(band.x.begin(), band.x.end()), band.x.end());
  band.fitted = lowess_at(x, y, fraction, band.x);

  const std::size_t n = x.size();
  const std::size_t m = band.x.size();
  if (n_boot == 0) {
    band.lower = band.upper = band.fitted;
    return band;
  }
  std::vector<std::vector<double>> draws(m, std::vector<double>(static_cast<std::size_t>(n_boot)));
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), 0x10e55u};
  std::mt19937_64 rng(seq);
  std::uniform_int_distribution<std::size_t> pick(0, n - 1);
  std::vector<double> bx(n), by(n);
  for (int b = 0; b < n_boot; ++b) {
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t j = pick(rng);
      bx[i] = x[j];
      by[i] = y[j];
    }
    const auto fit = lowess_at(bx, by, fraction, band.x);
    for (std::size_t q = 0; q < m; ++q) draws[q][static_cast<std::size_t>(b)] = fit[q];
  }
  band.lower.resize(m);
  band.upper.resize(m);
  for (std::size_t q = 0; q < m; ++q) {
    auto& d = draws[q];
    d.erase(std::remove_if(d.begin(), d.end(), [](double v) { return !std::isfinite(v); }), d.end());
    if (d.empty()) {
      band.lower[q] = band.upper[q] = band.fitted[q];
      continue;
    }
    std::sort(d.begin(), d.end());
    band.lower[q] = quantile_sorted(d, 0.025);
    band.upper[q] = quantile_sorted(d, 0.975);
  }
  return band;
}

}  // namespace ctlab::stats
