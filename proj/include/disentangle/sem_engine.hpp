#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "disentangle/count_distributions.hpp"
#include "disentangle/errors.hpp"
#include "disentangle/panel.hpp"
#include "disentangle/penalized_poisson.hpp"

namespace disentangle {

inline constexpr int kMaxKernelLags = 57;

/// Nonnegative weights over admission-to-release lags 0..L (L <= 56).
struct WeightKernel {
  std::vector<double> weights;
  bool normalized = false;

  /// Discretized log-normal-shaped decay over lags 0..56, normalized to 1.
  /// A stand-in for a kernel estimated from length-of-stay data.
  static WeightKernel placeholder();
  /// All weight on a single lag.
  static WeightKernel point_mass(int lag);
  /// CSV with columns lag,weight.
  static WeightKernel load(const std::string& path);
  void save(const std::string& path) const;
  /// Throws ConfigError when weights are negative, empty, longer than 57 lags,
  /// or flagged normalized without summing to 1.
  void validate() const;
};

/// For each observation, the panel index of the same district lag days
/// earlier (or -1 when that day is not in the panel).
class LagIndex {
 public:
  LagIndex(const Panel& panel, int max_lag);
  int at(std::size_t observation, int lag) const {
    return table_[observation * static_cast<std::size_t>(max_lag_ + 1) + static_cast<std::size_t>(lag)];
  }
  int max_lag() const { return max_lag_; }
  std::size_t size() const { return size_; }

 private:
  int max_lag_;
  std::size_t size_;
  std::vector<int> table_;
};

struct LatentDraw {
  std::vector<int> arrivals;
  std::vector<int> departures;
  /// Draws rejected under strict censoring.
  long long rejections = 0;
  /// Observations whose table had to be rebuilt with floored intensities.
  int floored = 0;
};

struct InitialIntensities {
  Eigen::VectorXd lambda_in;
  Eigen::VectorXd lambda_out;
};

struct EStepOptions {
  int truncation = kDefaultTruncation;
  bool strict_censoring = false;
  double intensity_floor = 0.1;
  int threads = 1;
};

struct SemConfig {
  int iterations = 500;
  int burn_in = 200;
  std::uint64_t seed = 20211002;
  IntensityModelSpec incoming;
  IntensityModelSpec outgoing;
  WeightKernel kernel = WeightKernel::placeholder();
  double offset_floor = 0.1;
  std::optional<double> initial_intensity;
  EStepOptions e_step;
  FitOptions fit;
  bool freeze_smoothing_after_burn_in = false;
  int threads = 1;
};

struct SemIteration {
  int index = 0;  // 1-based
  FitResult incoming;
  FitResult outgoing;
  LatentDraw draw;
  double complete_log_likelihood = 0.0;
};

struct SemTrace {
  std::uint64_t seed = 0;
  SemConfig config;
  ModelDesign incoming_design;
  ModelDesign outgoing_design;
  std::vector<SemIteration> iterations;
};

/// Raised when an iteration fails; carries everything recorded before it.
class SemAborted : public NumericalError {
 public:
  SemAborted(int iteration, const std::string& cause, std::shared_ptr<SemTrace> partial);
  int iteration() const { return iteration_; }
  const std::shared_ptr<SemTrace>& partial_trace() const { return partial_; }

 private:
  int iteration_;
  std::shared_ptr<SemTrace> partial_;
};

/// Design matrix for one intensity model: intercept, linear covariates, then
/// constrained time smooth s(t) and tensor smooth te(lon,lat).
ModelDesign build_design(const Panel& panel, const IntensityModelSpec& spec);

InitialIntensities initialize(const Panel& panel, const SemConfig& config);

LatentDraw e_step(const Panel& panel, const Eigen::VectorXd& lambda_in, const Eigen::VectorXd& lambda_out,
                  std::uint64_t seed, int iteration, const EStepOptions& options = {});

/// log(sum_j w_j * arrivals[t-j] + floor) per observation; lags outside the
/// panel contribute zero.
Eigen::VectorXd build_offset(const LagIndex& lags, std::span<const int> arrivals,
                             const WeightKernel& kernel, double floor = 0.1);
Eigen::VectorXd build_offset(const Panel& panel, std::span<const int> arrivals,
                             const WeightKernel& kernel, double floor = 0.1);

struct MStepResult {
  FitResult incoming;
  FitResult outgoing;
};

struct MStepInputs {
  const ModelDesign& incoming_design;
  const ModelDesign& outgoing_design;
  const IntensityModelSpec& incoming_spec;
  const IntensityModelSpec& outgoing_spec;
  FitOptions fit;
  /// Smoothing parameters to reuse instead of selecting (frozen mode).
  const std::vector<double>* incoming_smoothing = nullptr;
  const std::vector<double>* outgoing_smoothing = nullptr;
  /// Warm starts.
  const Eigen::VectorXd* incoming_start = nullptr;
  const Eigen::VectorXd* outgoing_start = nullptr;
  bool parallel = false;
};

/// Incoming model on the sampled arrivals (no offset); outgoing model on the
/// sampled departures with the weighted-arrival log offset.
MStepResult m_step(const LatentDraw& latent, const Eigen::VectorXd& outgoing_offset,
                   const MStepInputs& inputs);

/// Sum over observations of log Pois(i | lambda_in) + log Pois(r | lambda_out).
double complete_log_likelihood(const LatentDraw& latent, const Eigen::VectorXd& lambda_in,
                               const Eigen::VectorXd& lambda_out);

using IterationCallback = std::function<void(const SemIteration&)>;

SemTrace run_sem(const Panel& panel, const SemConfig& config, const IterationCallback& on_iteration = {});

}  // namespace disentangle
