#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "ctlab/core.hpp"

namespace ctlab::stats {

/// Named regressors. Missing cells are NaN until listwise deletion.
struct DesignMatrix {
  std::vector<std::string> names;
  Eigen::MatrixXd values;

  /// Builds a matrix from named columns of equal length, optionally appending
  /// an all-ones "Intercept" column last.
  static DesignMatrix from_columns(const std::vector<std::pair<std::string, std::vector<double>>>& cols,
                                   bool add_intercept);

  Eigen::Index rows() const { return values.rows(); }
  Eigen::Index cols() const { return values.cols(); }
  Eigen::Index index_of(const std::string& name) const;
};

/// Drops every row with a missing regressor or outcome.
std::pair<DesignMatrix, Eigen::VectorXd> listwise_delete(const DesignMatrix& x,
                                                         const Eigen::VectorXd& y);

enum class Convergence { Converged, MaxIterations, Singular };
std::string_view to_string(Convergence c);

struct FitResult {
  std::vector<std::string> names;
  Eigen::VectorXd coefficients;
  Eigen::VectorXd standard_errors;
  std::optional<double> sigma;     // tobit only
  std::optional<double> sigma_se;  // tobit only
  double loglik = 0.0;
  int n = 0;
  int iterations = 0;
  Convergence convergence = Convergence::Converged;

  double coefficient(const std::string& name) const;
  double standard_error(const std::string& name) const;
  /// Two-sided Wald p-value against the normal reference.
  double p_value(const std::string& name) const;
};

double normal_pdf(double z);
double normal_cdf(double z);
double log_normal_cdf(double z);
double two_sided_p(double z);

/// "*" p < .05, "**" p < .01, "***" p < .001.
std::string significance_stars(double p);

// --- Two-sided tobit -------------------------------------------------------

double tobit_loglik(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, double lower, double upper,
                    const Eigen::VectorXd& beta, double sigma);

/// Gradient with respect to (beta..., sigma).
Eigen::VectorXd tobit_gradient(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, double lower,
                               double upper, const Eigen::VectorXd& beta, double sigma);

struct TobitOptions {
  int max_iterations = 500;
  double gradient_tolerance = 1e-8;
};

FitResult tobit_fit(const DesignMatrix& x, const Eigen::VectorXd& y, double lower, double upper,
                    const TobitOptions& options = {});

// --- Binary outcomes -------------------------------------------------------

double logit_loglik(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const Eigen::VectorXd& beta);
Eigen::VectorXd logit_gradient(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                               const Eigen::VectorXd& beta);

struct BinaryOptions {
  int max_iterations = 100;
  double gradient_tolerance = 1e-8;
};

/// Newton-Raphson logistic MLE. Throws Separation on (quasi-)perfect
/// separation instead of iterating towards infinite coefficients.
FitResult logit_fit(const DesignMatrix& x, const Eigen::VectorXd& y, const BinaryOptions& options = {});

double probit_loglik(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const Eigen::VectorXd& beta);
FitResult probit_fit(const DesignMatrix& x, const Eigen::VectorXd& y, const BinaryOptions& options = {});

// --- Descriptive -----------------------------------------------------------

Eigen::MatrixXd pearson_matrix(const DesignMatrix& x);

enum class SkewnessMethod { g1, G1, b1 };
double skewness(std::span<const double> sample, SkewnessMethod method = SkewnessMethod::g1);

enum class NormalityTest { JarqueBera, DAgostinoK2 };
struct TestResult {
  double statistic = 0.0;
  double p_value = 1.0;
};
TestResult normality_test(std::span<const double> sample, NormalityTest test);

// --- LOWESS ----------------------------------------------------------------

/// Tricube-weighted local linear fit evaluated at each query point.
std::vector<double> lowess_at(std::span<const double> x, std::span<const double> y, double fraction,
                              std::span<const double> query);

struct LowessBand {
  std::vector<double> x;  // sorted distinct x values of the input
  std::vector<double> fitted;
  std::vector<double> lower;
  std::vector<double> upper;
};

/// LOWESS curve with a 95% percentile-bootstrap band over resampled pairs.
LowessBand lowess(std::span<const double> x, std::span<const double> y, double fraction = 2.0 / 3.0,
                  int n_boot = 500, std::uint64_t seed = 0);

}  // namespace ctlab::stats
