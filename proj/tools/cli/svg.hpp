#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>

namespace disentangle::cli::svg {

struct Series {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;
  std::string color = "#1f77b4";
  double width = 1.5;
  double opacity = 1.0;
};

struct Band {
  std::vector<double> x;
  std::vector<double> lower;
  std::vector<double> upper;
  std::string color = "#1f77b4";
  double opacity = 0.2;
};

struct LineChart {
  std::string title;
  std::string x_label;
  std::string y_label;
  /// x values are day indices and tick labels are rendered as dates.
  bool date_axis = false;
  std::vector<Band> bands;
  std::vector<Series> series;
  /// Horizontal reference lines.
  std::vector<double> reference;
  /// Only series with a non-empty label appear in the legend.
  bool legend = true;
};

struct Heatmap {
  std::string title;
  /// Cell centres; z is rows = y.size(), cols = x.size().
  std::vector<double> x;
  std::vector<double> y;
  Eigen::MatrixXd z;
};

struct Interval {
  double lower = 0.0;
  double upper = 0.0;
  double estimate = 0.0;
  bool covered = true;
};

struct IntervalPanel {
  std::string title;
  double truth = 0.0;
  std::vector<Interval> intervals;
};

std::string line_chart(const LineChart& chart, int width = 760, int height = 420);
/// Several charts laid out on a grid of the given column count.
std::string small_multiples(const std::vector<LineChart>& charts, int columns, int cell_width = 360,
                            int cell_height = 240);
/// Diverging blue-white-red colour scale centred on zero.
std::string heatmap(const Heatmap& map, int width = 620, int height = 620);
std::string interval_panels(const std::vector<IntervalPanel>& panels, int columns = 2);

}  // namespace disentangle::cli::svg
