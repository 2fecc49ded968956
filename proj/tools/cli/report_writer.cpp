#include "cli/report_writer.hpp"

#include <algorithm>
#include <fstream>
#include <map>

#include "cli/svg.hpp"
#include "disentangle/csv.hpp"
#include "disentangle/errors.hpp"

namespace disentangle::cli {

namespace fs = std::filesystem;
using csv::format_double;

namespace {

const char* const kIncomingColor = "#1f77b4";
const char* const kOutgoingColor = "#d62728";

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << text;
}

double quantile(std::vector<double> values, double p) {
  std::sort(values.begin(), values.end());
  const double h = (static_cast<double>(values.size()) - 1.0) * p;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const auto hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (h - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

struct Summary {
  std::vector<double> center;
  std::vector<double> lower;
  std::vector<double> upper;
};

// Column-wise mean and 2.5%/97.5% quantiles over rows burn_in.. of m.
Summary summarize(const Eigen::MatrixXd& m, int burn_in) {
  Summary s;
  const Eigen::Index rows = m.rows() - burn_in;
  for (Eigen::Index c = 0; c < m.cols(); ++c) {
    std::vector<double> column(static_cast<std::size_t>(rows));
    for (Eigen::Index r = 0; r < rows; ++r) column[static_cast<std::size_t>(r)] = m(burn_in + r, c);
    s.center.push_back(m.col(c).tail(rows).mean());
    s.lower.push_back(quantile(column, 0.025));
    s.upper.push_back(quantile(column, 0.975));
  }
  return s;
}

Eigen::VectorXd summary_coefficients(const PooledModel& model, PoolingStatistic statistic) {
  Eigen::VectorXd beta(static_cast<Eigen::Index>(model.estimates.size()));
  for (std::size_t j = 0; j < model.estimates.size(); ++j) {
    const auto& e = model.estimates[j];
    beta(static_cast<Eigen::Index>(j)) = statistic == PoolingStatistic::mean ? e.pooled_beta : e.median_beta;
  }
  return beta;
}

// Rows: iterations; columns: grid points.
Eigen::MatrixXd smooth_curves(const SmoothGrid& grid, const CoefficientTrace& trace) {
  Eigen::MatrixXd curves(static_cast<Eigen::Index>(trace.estimates.size()), grid.basis.rows());
  for (std::size_t k = 0; k < trace.estimates.size(); ++k) {
    curves.row(static_cast<Eigen::Index>(k)) =
        (grid.basis * trace.estimates[k].segment(grid.first_column, grid.basis.cols())).transpose();
  }
  return curves;
}

std::vector<double> to_vector(const Eigen::VectorXd& v) { return {v.data(), v.data() + v.size()}; }

}  // namespace

PooledResult pool_stored(const StoredTrace& trace, int burn_in) {
  if (burn_in < 0 || burn_in >= trace.size()) {
    throw ConfigError("burn-in " + std::to_string(burn_in) + " must be in [0, " + std::to_string(trace.size()) +
                      ") for a trace of " + std::to_string(trace.size()) + " iterations");
  }
  return {pool_coefficients(trace.incoming, burn_in), pool_coefficients(trace.outgoing, burn_in)};
}

std::string write_report(const fs::path& dir, const StoredTrace& trace, const ReportOptions& options) {
  const PooledResult pooled = pool_stored(trace, options.burn_in);
  fs::create_directories(dir / "figures");
  const std::string table = report_table(pooled, options.transform, options.pooling);
  write_file(dir / "pooled_table.txt", table);
  write_file(dir / "pooled.json", report_json(pooled, options.transform, options.pooling));

  // National flows.
  const Summary in = summarize(trace.national_arrivals, options.burn_in);
  const Summary out = summarize(trace.national_departures, options.burn_in);
  std::string flows = "date,incoming_mean,incoming_lower,incoming_upper,outgoing_mean,outgoing_lower,outgoing_upper\n";
  std::vector<double> days(trace.days.begin(), trace.days.end());
  for (std::size_t d = 0; d < trace.days.size(); ++d) {
    flows += format_iso_date(trace.days[d]) + "," + format_double(in.center[d]) + "," + format_double(in.lower[d]) +
             "," + format_double(in.upper[d]) + "," + format_double(out.center[d]) + "," +
             format_double(out.lower[d]) + "," + format_double(out.upper[d]) + "\n";
  }
  write_file(dir / "flows.csv", flows);
  svg::LineChart flow_chart;
  flow_chart.title = "Estimated number of incoming and outgoing patients by date";
  flow_chart.x_label = "date";
  flow_chart.y_label = "patients per day (all districts)";
  flow_chart.date_axis = true;
  flow_chart.bands = {{days, in.lower, in.upper, kIncomingColor, 0.2}, {days, out.lower, out.upper, kOutgoingColor, 0.2}};
  flow_chart.series = {{"incoming", days, in.center, kIncomingColor, 2.0, 1.0},
                       {"outgoing", days, out.center, kOutgoingColor, 2.0, 1.0}};
  write_file(dir / "figures" / "flows.svg", svg::line_chart(flow_chart));

  // Smooth terms.
  std::string time_csv = "model,date,estimate,lower,upper\n";
  std::string space_csv = "model,lon,lat,estimate\n";
  for (const auto& grid : trace.smooths) {
    const bool incoming = grid.model == "incoming";
    const PooledModel& model = incoming ? pooled.incoming : pooled.outgoing;
    const CoefficientTrace& coefs = incoming ? trace.incoming : trace.outgoing;
    const Eigen::VectorXd beta = summary_coefficients(model, options.pooling);
    const Eigen::VectorXd fitted = grid.basis * beta.segment(grid.first_column, grid.basis.cols());
    if (grid.spatial()) {
      for (Eigen::Index i = 0; i < fitted.size(); ++i) {
        const auto r = static_cast<std::size_t>(i);
        space_csv += grid.model + "," + format_double(grid.x[r]) + "," + format_double(grid.y[r]) + "," +
                     format_double(fitted(i)) + "\n";
      }
      std::vector<double> xs(grid.x);
      std::sort(xs.begin(), xs.end());
      xs.erase(std::unique(xs.begin(), xs.end()), xs.end());
      const auto nx = static_cast<Eigen::Index>(xs.size());
      const Eigen::Index ny = fitted.size() / std::max<Eigen::Index>(nx, 1);
      svg::Heatmap map;
      map.title = "Spatial effect te(lon,lat), " + grid.model + " model";
      map.x = xs;
      for (Eigen::Index j = 0; j < ny; ++j) map.y.push_back(grid.y[static_cast<std::size_t>(j * nx)]);
      map.z = Eigen::Map<const Eigen::MatrixXd>(fitted.data(), nx, ny).transpose();
      write_file(dir / "figures" / ("spatial_" + grid.model + ".svg"), svg::heatmap(map));
      continue;
    }
    const Eigen::MatrixXd curves = smooth_curves(grid, coefs);
    const Summary band = summarize(curves, options.burn_in);
    for (Eigen::Index i = 0; i < fitted.size(); ++i) {
      const auto r = static_cast<std::size_t>(i);
      time_csv += grid.model + "," + format_iso_date(static_cast<DayIndex>(grid.x[r])) + "," +
                  format_double(fitted(i)) + "," + format_double(band.lower[r]) + "," + format_double(band.upper[r]) +
                  "\n";
    }
    svg::LineChart chart;
    chart.title = "Estimated time effect s(t) of all runs, " + grid.model + " model";
    chart.x_label = "date";
    chart.y_label = "s(t)";
    chart.date_axis = true;
    chart.reference = {0.0};
    for (Eigen::Index k = options.burn_in; k < curves.rows(); ++k) {
      chart.series.push_back({"", grid.x, to_vector(curves.row(k).transpose()), "#999999", 0.6, 0.25});
    }
    chart.series.push_back({"pooled (" + to_string(options.pooling) + ")", grid.x, to_vector(fitted),
                            incoming ? kIncomingColor : kOutgoingColor, 2.2, 1.0});
    write_file(dir / "figures" / ("time_smooth_" + grid.model + ".svg"), svg::line_chart(chart));
  }
  write_file(dir / "smooth_time.csv", time_csv);
  write_file(dir / "smooth_space.csv", space_csv);

  // Coefficient traces.
  for (const auto* model : {&trace.incoming, &trace.outgoing}) {
    const PooledModel& pm = model == &trace.incoming ? pooled.incoming : pooled.outgoing;
    std::vector<double> iterations;
    for (int k = 1; k <= trace.size(); ++k) iterations.push_back(k);
    std::vector<svg::LineChart> charts;
    for (std::size_t j = 0; j < model->names.size(); ++j) {
      if (is_smooth_coefficient(model->names[j])) continue;
      svg::LineChart c;
      c.title = display_name(model->names[j]);
      c.x_label = "iteration";
      c.legend = false;
      std::vector<double> values;
      for (const auto& e : model->estimates) values.push_back(e(static_cast<Eigen::Index>(j)));
      c.series.push_back({"", iterations, values, model == &trace.incoming ? kIncomingColor : kOutgoingColor, 1.0, 1.0});
      c.reference = {options.pooling == PoolingStatistic::mean ? pm.estimates[j].pooled_beta : pm.estimates[j].median_beta};
      charts.push_back(std::move(c));
    }
    write_file(dir / "figures" / ("coefficient_traces_" + model->model + ".svg"), svg::small_multiples(charts, 3));
  }

  svg::LineChart ll;
  ll.title = "Complete-data log-likelihood";
  ll.x_label = "iteration";
  ll.legend = false;
  svg::Series s;
  s.color = "#333333";
  s.width = 1.0;
  for (const auto& r : trace.iterations) {
    s.x.push_back(r.iteration);
    s.y.push_back(r.complete_log_likelihood);
  }
  ll.series.push_back(std::move(s));
  write_file(dir / "figures" / "log_likelihood.svg", svg::line_chart(ll));
  return table;
}

void write_study(const fs::path& dir, const StudyReport& report) {
  fs::create_directories(dir / "figures");
  write_file(dir / "coverage.txt", report.render_text());
  write_file(dir / "study.json", report.to_json());
  write_file(dir / "intervals.csv", report.intervals_csv());

  std::vector<svg::IntervalPanel> panels;
  std::map<std::string, std::size_t> index;
  for (const auto& rep : report.replications) {
    if (rep.failed) continue;
    for (const auto& iv : rep.intervals) {
      auto [it, inserted] = index.emplace(iv.coefficient, panels.size());
      if (inserted) panels.push_back({iv.coefficient, iv.truth, {}});
      panels[it->second].intervals.push_back({iv.lower, iv.upper, iv.estimate, iv.covered});
    }
  }
  write_file(dir / "figures" / "intervals.svg", svg::interval_panels(panels, 2));
}

}  // namespace disentangle::cli
