#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>

namespace disentangle {

struct SemTrace;

/// Per-iteration estimates of one model's coefficients with their within-fit
/// variances (diagonal of the fit covariance), as stored in a trace.
struct CoefficientTrace {
  std::string model;
  std::vector<std::string> names;
  std::vector<Eigen::VectorXd> estimates;
  std::vector<Eigen::VectorXd> variances;
  /// Optional full covariances, aligned with estimates.
  std::vector<Eigen::MatrixXd> covariances;
};

struct PooledEstimate {
  std::string model;
  std::string name;
  double pooled_beta = 0.0;
  double median_beta = 0.0;
  double pooled_variance = 0.0;
  double within_variance = 0.0;
  double between_variance = 0.0;
  double exp_scale_estimate = 0.0;
  double exp_scale_sd = 0.0;

  double sd() const;
};

struct PooledModel {
  std::string model;
  std::vector<PooledEstimate> estimates;
  /// Full pooled covariance; empty when the trace only carries variances.
  Eigen::MatrixXd covariance;
  int pooled_iterations = 0;
  int burn_in = 0;
  int total_iterations = 0;

  const PooledEstimate& find(const std::string& name) const;
};

struct PooledResult {
  PooledModel incoming;
  PooledModel outgoing;
};

/// Rubin pooling over iterations burn_in+1..K (1-based):
///   beta = mean_k beta_k
///   Var  = mean_k Var_k + (1 + 1/m) / (m - 1) * sum_k (beta_k - beta)^2, m = K - burn_in.
/// With m == 1 the between term is 0.
PooledModel pool_coefficients(const CoefficientTrace& trace, int burn_in);

CoefficientTrace coefficient_trace(const SemTrace& trace, bool incoming);
PooledResult pool(const SemTrace& trace, int burn_in);

enum class ScaleTransform { identity, exponential };
enum class PoolingStatistic { mean, median };

ScaleTransform parse_transform(const std::string& text);
PoolingStatistic parse_statistic(const std::string& text);
std::string to_string(ScaleTransform t);
std::string to_string(PoolingStatistic s);

/// Display name for a linear coefficient ("Monday" -> "Monday Effect").
std::string display_name(const std::string& coefficient);
bool is_smooth_coefficient(const std::string& coefficient);

/// Aligned plain-text table of the linear coefficients of both models.
std::string report_table(const PooledResult& pooled, ScaleTransform transform, PoolingStatistic statistic);
/// Same content as report_table in a machine-readable JSON document (all
/// coefficients, both statistics, both scales).
std::string report_json(const PooledResult& pooled, ScaleTransform transform, PoolingStatistic statistic);

}  // namespace disentangle
