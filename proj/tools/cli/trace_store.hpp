#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "disentangle/panel.hpp"
#include "disentangle/pooled_inference.hpp"
#include "disentangle/sem_engine.hpp"

namespace disentangle::cli {

struct IterationRecord {
  int iteration = 0;
  double complete_log_likelihood = 0.0;
  double incoming_deviance = 0.0;
  double outgoing_deviance = 0.0;
  double incoming_edf = 0.0;
  double outgoing_edf = 0.0;
  long long rejections = 0;
  int floored = 0;
  std::vector<double> incoming_lambda;
  std::vector<double> outgoing_lambda;
};

/// A smooth term's constrained basis evaluated on a fixed grid. Rows are grid
/// points; columns line up with coefficients first_column.. of the model.
struct SmoothGrid {
  std::string model;
  std::string term;
  Eigen::Index first_column = 0;
  std::vector<double> x;
  /// Empty for one-dimensional terms.
  std::vector<double> y;
  Eigen::MatrixXd basis;

  bool spatial() const { return !y.empty(); }
};

/// What a fit stores on disk: enough to rebuild every table and figure.
struct StoredTrace {
  std::vector<IterationRecord> iterations;
  CoefficientTrace incoming;
  CoefficientTrace outgoing;
  std::vector<DayIndex> days;
  /// Iterations x days, summed over districts.
  Eigen::MatrixXd national_arrivals;
  Eigen::MatrixXd national_departures;
  std::vector<SmoothGrid> smooths;

  int size() const { return static_cast<int>(iterations.size()); }
};

StoredTrace capture_trace(const SemTrace& trace, const Panel& panel, int space_grid);

/// Writes the files under dir (created if needed).
void write_trace(const std::filesystem::path& dir, const StoredTrace& trace);
/// Throws DataError naming the file and iteration on malformed content.
StoredTrace read_trace(const std::filesystem::path& dir);

}  // namespace disentangle::cli
