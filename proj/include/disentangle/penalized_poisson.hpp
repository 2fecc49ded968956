#pragma once

#include <array>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "disentangle/spline_smoothing.hpp"

namespace disentangle {

struct TimeSmoothSpec {
  int basis_dim = 10;
  int degree = 3;
  int penalty_order = 2;
};

struct SpaceSmoothSpec {
  std::array<int, 2> dims{5, 5};
  int degree = 3;
  int penalty_order = 2;
};

enum class OffsetRule { none, weighted_arrivals };

struct SmoothingOptions {
  /// Candidate smoothing parameters, searched coordinate-wise.
  std::vector<double> grid;
  /// When set, selection is skipped and these are used (one per penalty).
  std::optional<std::vector<double>> fixed;
  int max_iterations = 50;

  static std::vector<double> log_grid(double lo, double hi, int count);
};

/// Declarative description of one log-linear intensity model.
struct IntensityModelSpec {
  std::string name;
  bool intercept = true;
  /// Panel covariate names entering linearly (weekday dummies, log rates).
  std::vector<std::string> linear_terms;
  std::optional<TimeSmoothSpec> time_smooth;
  std::optional<SpaceSmoothSpec> space_smooth;
  OffsetRule offset_rule = OffsetRule::none;
  SmoothingOptions smoothing{SmoothingOptions::log_grid(1e-3, 1e5, 17), std::nullopt, 50};

  /// Number of smoothing parameters implied by the smooth terms.
  int penalty_count() const;
};

struct PenaltyBlock {
  std::string name;
  Eigen::Index first_column = 0;
  Eigen::MatrixXd matrix;  // square, sized to the smooth's constrained block
};

/// A constrained smooth term inside a design matrix, kept so fitted smooths
/// can be evaluated at new points.
struct SmoothTermLayout {
  std::string name;
  Eigen::Index first_column = 0;
  Eigen::Index columns = 0;
  std::variant<SmoothBasis1D, SmoothBasis2D> basis;
  ConstraintTransform constraint;

  Eigen::MatrixXd evaluate(std::span<const double> x, std::span<const double> y = {}) const;
};

struct ModelDesign {
  Eigen::MatrixXd matrix;
  std::vector<std::string> column_names;
  std::vector<PenaltyBlock> penalties;
  std::vector<SmoothTermLayout> smooths;

  Eigen::Index rows() const { return matrix.rows(); }
  Eigen::Index cols() const { return matrix.cols(); }
  /// Sum of lambda_j * S_j embedded in a cols() x cols() matrix.
  Eigen::MatrixXd total_penalty(std::span<const double> smoothing_params) const;
};

struct FitOptions {
  double tolerance = 1e-8;
  int max_iterations = 100;
  double ridge = 1e-8;
};

struct FitResult {
  std::vector<std::string> names;
  Eigen::VectorXd coefficients;
  Eigen::MatrixXd covariance;
  std::vector<double> smoothing_params;
  double deviance = 0.0;
  double penalized_deviance = 0.0;
  double log_likelihood = 0.0;
  double edf = 0.0;
  double score_norm = 0.0;
  bool converged = false;
  int iterations = 0;
  bool ridge_applied = false;
  std::vector<std::string> diagnostics;
  /// Penalized deviance after every accepted step.
  std::vector<double> deviance_path;
  Eigen::VectorXd fitted;
};

/// Penalized IRLS for a log-link Poisson model:
/// maximizes l(beta) - 1/2 sum_j lambda_j beta' S_j beta.
FitResult fit_poisson(const ModelDesign& design, const Eigen::VectorXd& response,
                      const Eigen::VectorXd& offset, std::span<const double> smoothing_params,
                      const FitOptions& options = {}, const Eigen::VectorXd* start = nullptr);

/// l(beta) - 1/2 beta' S beta at a given coefficient vector.
double penalized_log_likelihood(const ModelDesign& design, const Eigen::VectorXd& response,
                                const Eigen::VectorXd& offset, const Eigen::VectorXd& beta,
                                std::span<const double> smoothing_params);
/// Gradient of penalized_log_likelihood: X'(y - mu) - S beta.
Eigen::VectorXd penalized_score(const ModelDesign& design, const Eigen::VectorXd& response,
                                const Eigen::VectorXd& offset, const Eigen::VectorXd& beta,
                                std::span<const double> smoothing_params);

/// Chooses one smoothing parameter per penalty by minimizing the working-model
/// UBRE score inside the IRLS loop (performance iteration), searching the grid
/// one coordinate at a time.
std::vector<double> select_smoothing(const ModelDesign& design, const Eigen::VectorXd& response,
                                     const Eigen::VectorXd& offset, const SmoothingOptions& options,
                                     const FitOptions& fit_options = {});

Eigen::VectorXd predict_intensity(const FitResult& fit, const Eigen::MatrixXd& rows,
                                  const Eigen::VectorXd& offset);

/// Poisson deviance 2 * sum(y log(y/mu) - (y - mu)).
double poisson_deviance(const Eigen::VectorXd& response, const Eigen::VectorXd& mean);
double poisson_log_likelihood(const Eigen::VectorXd& response, const Eigen::VectorXd& mean);

}  // namespace disentangle
