#include "cli/trace_store.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>

#include "json.hpp"

#include "disentangle/csv.hpp"
#include "disentangle/errors.hpp"

namespace disentangle::cli {

namespace fs = std::filesystem;
using csv::format_double;

namespace {

std::ofstream open_out(const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  return out;
}

std::string join(const std::vector<double>& values, char sep) {
  std::string s;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i) s += sep;
    s += format_double(values[i]);
  }
  return s;
}

std::vector<double> split_doubles(const std::string& text, const std::string& what) {
  std::vector<double> out;
  if (text.empty()) return out;
  std::size_t start = 0;
  while (true) {
    const auto end = text.find(';', start);
    out.push_back(csv::to_double(text.substr(start, end - start), what));
    if (end == std::string::npos) break;
    start = end + 1;
  }
  return out;
}

// Rethrows parse failures with the file and iteration they belong to.
template <typename F>
void with_context(const fs::path& file, int iteration, F&& body) {
  try {
    body();
  } catch (const DataError& e) {
    throw DataError("corrupt trace " + file.filename().string() + " at iteration " + std::to_string(iteration) +
                    ": " + e.what());
  }
}

void check_iteration(const fs::path& file, const std::string& text, int expected) {
  with_context(file, expected, [&] {
    if (csv::to_integer(text, "iteration") != expected) {
      throw DataError("expected iteration " + std::to_string(expected) + ", found " + text);
    }
  });
}

void write_matrix_trace(const fs::path& path, const std::vector<Eigen::VectorXd>& rows, Eigen::Index p) {
  auto out = open_out(path);
  out << "iteration";
  for (Eigen::Index j = 0; j < p; ++j) out << ",b" << j;
  out << "\n";
  for (std::size_t k = 0; k < rows.size(); ++k) {
    out << k + 1;
    for (Eigen::Index j = 0; j < p; ++j) out << "," << format_double(rows[k](j));
    out << "\n";
  }
}

std::vector<Eigen::VectorXd> read_matrix_trace(const fs::path& path, std::size_t p, int expected_rows) {
  const auto table = csv::read_file(path.string());
  if (table.header.size() != p + 1) {
    throw DataError("corrupt trace " + path.filename().string() + ": expected " + std::to_string(p) +
                    " coefficient columns, found " + std::to_string(table.header.size() - 1));
  }
  if (static_cast<int>(table.rows.size()) != expected_rows) {
    const int at = std::min<int>(static_cast<int>(table.rows.size()), expected_rows) + 1;
    throw DataError("corrupt trace " + path.filename().string() + " at iteration " + std::to_string(at) +
                    ": expected " + std::to_string(expected_rows) + " iterations, found " +
                    std::to_string(table.rows.size()));
  }
  std::vector<Eigen::VectorXd> rows;
  for (int k = 0; k < expected_rows; ++k) {
    const auto& row = table.rows[static_cast<std::size_t>(k)];
    check_iteration(path, row[0], k + 1);
    Eigen::VectorXd v(static_cast<Eigen::Index>(p));
    with_context(path, k + 1, [&] {
      for (std::size_t j = 0; j < p; ++j) {
        v(static_cast<Eigen::Index>(j)) = csv::to_double(row[j + 1], "b" + std::to_string(j));
        if (!std::isfinite(v(static_cast<Eigen::Index>(j)))) {
          throw DataError("non-finite value in column b" + std::to_string(j));
        }
      }
    });
    rows.push_back(std::move(v));
  }
  return rows;
}

std::string basis_file(const SmoothGrid& s) {
  return "basis_" + s.model + (s.spatial() ? "_space.csv" : "_time.csv");
}

}  // namespace

StoredTrace capture_trace(const SemTrace& trace, const Panel& panel, int space_grid) {
  StoredTrace st;
  st.incoming = coefficient_trace(trace, true);
  st.outgoing = coefficient_trace(trace, false);
  st.incoming.covariances.clear();
  st.outgoing.covariances.clear();

  for (const auto& it : trace.iterations) {
    IterationRecord r;
    r.iteration = it.index;
    r.complete_log_likelihood = it.complete_log_likelihood;
    r.incoming_deviance = it.incoming.deviance;
    r.outgoing_deviance = it.outgoing.deviance;
    r.incoming_edf = it.incoming.edf;
    r.outgoing_edf = it.outgoing.edf;
    r.rejections = it.draw.rejections;
    r.floored = it.draw.floored;
    r.incoming_lambda = it.incoming.smoothing_params;
    r.outgoing_lambda = it.outgoing.smoothing_params;
    st.iterations.push_back(std::move(r));
  }

  std::map<DayIndex, Eigen::Index> day_column;
  for (const auto& o : panel.observations) day_column.emplace(o.day, 0);
  for (auto& [day, col] : day_column) {
    col = static_cast<Eigen::Index>(st.days.size());
    st.days.push_back(day);
  }
  const auto k = static_cast<Eigen::Index>(trace.iterations.size());
  const auto d = static_cast<Eigen::Index>(st.days.size());
  st.national_arrivals = Eigen::MatrixXd::Zero(k, d);
  st.national_departures = Eigen::MatrixXd::Zero(k, d);
  for (Eigen::Index i = 0; i < k; ++i) {
    const auto& draw = trace.iterations[static_cast<std::size_t>(i)].draw;
    for (std::size_t n = 0; n < panel.size(); ++n) {
      const Eigen::Index col = day_column[panel[n].day];
      st.national_arrivals(i, col) += draw.arrivals[n];
      st.national_departures(i, col) += draw.departures[n];
    }
  }

  double lon_lo = INFINITY, lon_hi = -INFINITY, lat_lo = INFINITY, lat_hi = -INFINITY;
  for (const auto& o : panel.observations) {
    lon_lo = std::min(lon_lo, o.longitude);
    lon_hi = std::max(lon_hi, o.longitude);
    lat_lo = std::min(lat_lo, o.latitude);
    lat_hi = std::max(lat_hi, o.latitude);
  }
  std::vector<double> grid_lon;
  std::vector<double> grid_lat;
  for (int j = 0; j < space_grid; ++j) {
    for (int i = 0; i < space_grid; ++i) {
      grid_lon.push_back(lon_lo + (lon_hi - lon_lo) * i / (space_grid - 1));
      grid_lat.push_back(lat_lo + (lat_hi - lat_lo) * j / (space_grid - 1));
    }
  }
  std::vector<double> day_values(st.days.begin(), st.days.end());

  for (const auto* design : {&trace.incoming_design, &trace.outgoing_design}) {
    const std::string model = design == &trace.incoming_design ? "incoming" : "outgoing";
    for (const auto& layout : design->smooths) {
      SmoothGrid g;
      g.model = model;
      g.term = layout.name;
      g.first_column = layout.first_column;
      if (std::holds_alternative<SmoothBasis1D>(layout.basis)) {
        g.x = day_values;
        g.basis = layout.evaluate(g.x);
      } else {
        g.x = grid_lon;
        g.y = grid_lat;
        g.basis = layout.evaluate(g.x, g.y);
      }
      st.smooths.push_back(std::move(g));
    }
  }
  return st;
}

void write_trace(const fs::path& dir, const StoredTrace& st) {
  fs::create_directories(dir);
  nlohmann::ordered_json meta;
  meta["iterations"] = st.size();
  meta["incoming"] = st.incoming.names;
  meta["outgoing"] = st.outgoing.names;
  meta["smooths"] = nlohmann::ordered_json::array();
  for (const auto& s : st.smooths) {
    meta["smooths"].push_back(
        {{"model", s.model}, {"term", s.term}, {"first_column", s.first_column}, {"file", basis_file(s)}});
  }
  open_out(dir / "coefficients.json") << meta.dump(2) << "\n";

  auto it = open_out(dir / "iterations.csv");
  it << "iteration,complete_log_likelihood,incoming_deviance,outgoing_deviance,incoming_edf,outgoing_edf,"
        "rejections,floored,incoming_lambda,outgoing_lambda\n";
  for (const auto& r : st.iterations) {
    it << r.iteration << "," << format_double(r.complete_log_likelihood) << ","
       << format_double(r.incoming_deviance) << "," << format_double(r.outgoing_deviance) << ","
       << format_double(r.incoming_edf) << "," << format_double(r.outgoing_edf) << "," << r.rejections << ","
       << r.floored << "," << join(r.incoming_lambda, ';') << "," << join(r.outgoing_lambda, ';') << "\n";
  }

  const auto p_in = static_cast<Eigen::Index>(st.incoming.names.size());
  const auto p_out = static_cast<Eigen::Index>(st.outgoing.names.size());
  write_matrix_trace(dir / "incoming_coefficients.csv", st.incoming.estimates, p_in);
  write_matrix_trace(dir / "incoming_variances.csv", st.incoming.variances, p_in);
  write_matrix_trace(dir / "outgoing_coefficients.csv", st.outgoing.estimates, p_out);
  write_matrix_trace(dir / "outgoing_variances.csv", st.outgoing.variances, p_out);

  auto flows = open_out(dir / "national_flows.csv");
  flows << "iteration,date,arrivals,departures\n";
  for (int k = 0; k < st.size(); ++k) {
    for (std::size_t d = 0; d < st.days.size(); ++d) {
      const auto col = static_cast<Eigen::Index>(d);
      flows << k + 1 << "," << format_iso_date(st.days[d]) << "," << format_double(st.national_arrivals(k, col))
            << "," << format_double(st.national_departures(k, col)) << "\n";
    }
  }

  for (const auto& s : st.smooths) {
    auto out = open_out(dir / basis_file(s));
    out << (s.spatial() ? "lon,lat" : "x");
    for (Eigen::Index j = 0; j < s.basis.cols(); ++j) out << ",c" << j;
    out << "\n";
    for (Eigen::Index i = 0; i < s.basis.rows(); ++i) {
      const auto row = static_cast<std::size_t>(i);
      out << format_double(s.x[row]);
      if (s.spatial()) out << "," << format_double(s.y[row]);
      for (Eigen::Index j = 0; j < s.basis.cols(); ++j) out << "," << format_double(s.basis(i, j));
      out << "\n";
    }
  }
}

StoredTrace read_trace(const fs::path& dir) {
  const fs::path meta_path = dir / "coefficients.json";
  std::ifstream meta_in(meta_path);
  if (!meta_in) throw DataError("no trace found in " + dir.string() + " (missing coefficients.json)");
  nlohmann::json meta;
  StoredTrace st;
  int k = 0;
  try {
    meta = nlohmann::json::parse(meta_in);
    k = meta.at("iterations").get<int>();
    st.incoming.names = meta.at("incoming").get<std::vector<std::string>>();
    st.outgoing.names = meta.at("outgoing").get<std::vector<std::string>>();
  } catch (const nlohmann::json::exception& e) {
    throw DataError("corrupt trace coefficients.json: " + std::string(e.what()));
  }
  if (k < 1) throw DataError("corrupt trace coefficients.json: no iterations recorded");
  st.incoming.model = "incoming";
  st.outgoing.model = "outgoing";

  const fs::path it_path = dir / "iterations.csv";
  const auto it = csv::read_file(it_path.string());
  if (static_cast<int>(it.rows.size()) != k) {
    throw DataError("corrupt trace iterations.csv at iteration " +
                    std::to_string(std::min<int>(static_cast<int>(it.rows.size()), k) + 1) + ": expected " +
                    std::to_string(k) + " iterations, found " + std::to_string(it.rows.size()));
  }
  for (int i = 0; i < k; ++i) {
    const auto& row = it.rows[static_cast<std::size_t>(i)];
    check_iteration(it_path, row[it.column("iteration")], i + 1);
    IterationRecord r;
    r.iteration = i + 1;
    with_context(it_path, i + 1, [&] {
      r.complete_log_likelihood = csv::to_double(row[it.column("complete_log_likelihood")], "log-likelihood");
      r.incoming_deviance = csv::to_double(row[it.column("incoming_deviance")], "incoming_deviance");
      r.outgoing_deviance = csv::to_double(row[it.column("outgoing_deviance")], "outgoing_deviance");
      r.incoming_edf = csv::to_double(row[it.column("incoming_edf")], "incoming_edf");
      r.outgoing_edf = csv::to_double(row[it.column("outgoing_edf")], "outgoing_edf");
      r.rejections = csv::to_integer(row[it.column("rejections")], "rejections");
      r.floored = static_cast<int>(csv::to_integer(row[it.column("floored")], "floored"));
      r.incoming_lambda = split_doubles(row[it.column("incoming_lambda")], "incoming_lambda");
      r.outgoing_lambda = split_doubles(row[it.column("outgoing_lambda")], "outgoing_lambda");
    });
    st.iterations.push_back(std::move(r));
  }

  st.incoming.estimates = read_matrix_trace(dir / "incoming_coefficients.csv", st.incoming.names.size(), k);
  st.incoming.variances = read_matrix_trace(dir / "incoming_variances.csv", st.incoming.names.size(), k);
  st.outgoing.estimates = read_matrix_trace(dir / "outgoing_coefficients.csv", st.outgoing.names.size(), k);
  st.outgoing.variances = read_matrix_trace(dir / "outgoing_variances.csv", st.outgoing.names.size(), k);

  const fs::path flows_path = dir / "national_flows.csv";
  const auto flows = csv::read_file(flows_path.string());
  if (flows.rows.size() % static_cast<std::size_t>(k) != 0) {
    throw DataError("corrupt trace national_flows.csv: row count is not a multiple of the iteration count");
  }
  const auto d = static_cast<Eigen::Index>(flows.rows.size() / static_cast<std::size_t>(k));
  st.national_arrivals.resize(k, d);
  st.national_departures.resize(k, d);
  for (int i = 0; i < k; ++i) {
    for (Eigen::Index c = 0; c < d; ++c) {
      const auto& row = flows.rows[static_cast<std::size_t>(i * d + c)];
      check_iteration(flows_path, row[0], i + 1);
      with_context(flows_path, i + 1, [&] {
        const DayIndex day = parse_iso_date(row[1]);
        if (i == 0) {
          st.days.push_back(day);
        } else if (st.days[static_cast<std::size_t>(c)] != day) {
          throw DataError("dates differ from the first iteration");
        }
        st.national_arrivals(i, c) = csv::to_double(row[2], "arrivals");
        st.national_departures(i, c) = csv::to_double(row[3], "departures");
      });
    }
  }

  try {
    for (const auto& s : meta.at("smooths")) {
      SmoothGrid g;
      g.model = s.at("model").get<std::string>();
      g.term = s.at("term").get<std::string>();
      g.first_column = s.at("first_column").get<Eigen::Index>();
      const fs::path path = dir / s.at("file").get<std::string>();
      const auto table = csv::read_file(path.string());
      const bool spatial = table.header.size() > 1 && table.header[1] == "lat";
      const std::size_t skip = spatial ? 2 : 1;
      g.basis.resize(static_cast<Eigen::Index>(table.rows.size()),
                     static_cast<Eigen::Index>(table.header.size() - skip));
      for (std::size_t r = 0; r < table.rows.size(); ++r) {
        const auto& row = table.rows[r];
        g.x.push_back(csv::to_double(row[0], path.filename().string()));
        if (spatial) g.y.push_back(csv::to_double(row[1], path.filename().string()));
        for (std::size_t j = skip; j < row.size(); ++j) {
          g.basis(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(j - skip)) =
              csv::to_double(row[j], path.filename().string());
        }
      }
      const std::size_t p = g.model == "incoming" ? st.incoming.names.size() : st.outgoing.names.size();
      if (g.first_column < 0 || static_cast<std::size_t>(g.first_column + g.basis.cols()) > p) {
        throw DataError("corrupt trace " + path.filename().string() + ": basis columns exceed the model");
      }
      st.smooths.push_back(std::move(g));
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError("corrupt trace coefficients.json: " + std::string(e.what()));
  }
  return st;
}

}  // namespace disentangle::cli
