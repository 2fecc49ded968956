#include "disentangle/pooled_inference.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "json.hpp"

#include "disentangle/errors.hpp"
#include "disentangle/sem_engine.hpp"

namespace disentangle {

namespace {

double median_of(std::vector<double> values) {
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  return n % 2 == 1 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

std::string fixed(double v, int digits) {
  char buffer[64];
  std::snprintf(buffer, sizeof(buffer), "%.*f", digits, v);
  return buffer;
}

std::string pad_left(const std::string& s, std::size_t width) {
  return s.size() >= width ? s : std::string(width - s.size(), ' ') + s;
}

std::string pad_right(const std::string& s, std::size_t width) {
  return s.size() >= width ? s : s + std::string(width - s.size(), ' ');
}

struct Shown {
  double estimate;
  double sd;
};

Shown shown_values(const PooledEstimate& e, ScaleTransform transform, PoolingStatistic statistic) {
  const double beta = statistic == PoolingStatistic::mean ? e.pooled_beta : e.median_beta;
  if (transform == ScaleTransform::identity) {
    return {beta, e.sd()};
  }
  return {std::exp(beta), std::exp(beta) * e.sd()};
}

}  // namespace

double PooledEstimate::sd() const { return std::sqrt(pooled_variance); }

const PooledEstimate& PooledModel::find(const std::string& name) const {
  for (const auto& e : estimates) {
    if (e.name == name) {
      return e;
    }
  }
  throw DomainError("no pooled coefficient named '" + name + "' in model " + model);
}

PooledModel pool_coefficients(const CoefficientTrace& trace, int burn_in) {
  const int total = static_cast<int>(trace.estimates.size());
  if (burn_in < 0 || burn_in >= total) {
    throw DomainError("pool: burn-in " + std::to_string(burn_in) + " must be in [0, K) with K=" +
                      std::to_string(total));
  }
  if (trace.variances.size() != trace.estimates.size()) {
    throw DomainError("pool: estimates and variances differ in length");
  }
  const std::size_t p = trace.names.size();
  const int m = total - burn_in;
  const auto first = static_cast<std::size_t>(burn_in);

  PooledModel out;
  out.model = trace.model;
  out.pooled_iterations = m;
  out.burn_in = burn_in;
  out.total_iterations = total;

  Eigen::VectorXd mean = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(p));
  Eigen::VectorXd within = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(p));
  for (std::size_t k = first; k < trace.estimates.size(); ++k) {
    if (static_cast<std::size_t>(trace.estimates[k].size()) != p ||
        static_cast<std::size_t>(trace.variances[k].size()) != p) {
      throw DomainError("pool: iteration " + std::to_string(k + 1) + " has the wrong coefficient count");
    }
    mean += trace.estimates[k];
    within += trace.variances[k];
  }
  mean /= m;
  within /= m;

  Eigen::VectorXd scatter = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(p));
  for (std::size_t k = first; k < trace.estimates.size(); ++k) {
    scatter += (trace.estimates[k] - mean).array().square().matrix();
  }
  const double factor = m > 1 ? (1.0 + 1.0 / m) / (m - 1) : 0.0;
  const Eigen::VectorXd between = factor * scatter;

  const bool full = trace.covariances.size() == trace.estimates.size();
  if (full) {
    Eigen::MatrixXd within_cov = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(p), static_cast<Eigen::Index>(p));
    Eigen::MatrixXd between_cov = within_cov;
    for (std::size_t k = first; k < trace.estimates.size(); ++k) {
      within_cov += trace.covariances[k];
      const Eigen::VectorXd d = trace.estimates[k] - mean;
      between_cov += d * d.transpose();
    }
    out.covariance = within_cov / m + factor * between_cov;
  }

  for (std::size_t j = 0; j < p; ++j) {
    const auto jj = static_cast<Eigen::Index>(j);
    PooledEstimate e;
    e.model = trace.model;
    e.name = trace.names[j];
    e.pooled_beta = mean(jj);
    std::vector<double> column;
    column.reserve(static_cast<std::size_t>(m));
    for (std::size_t k = first; k < trace.estimates.size(); ++k) {
      column.push_back(trace.estimates[k](jj));
    }
    e.median_beta = median_of(std::move(column));
    e.within_variance = within(jj);
    e.between_variance = between(jj);
    e.pooled_variance = e.within_variance + e.between_variance;
    e.exp_scale_estimate = std::exp(e.pooled_beta);
    e.exp_scale_sd = e.exp_scale_estimate * e.sd();
    out.estimates.push_back(std::move(e));
  }
  return out;
}

CoefficientTrace coefficient_trace(const SemTrace& trace, bool incoming) {
  CoefficientTrace out;
  out.model = incoming ? "incoming" : "outgoing";
  out.names = incoming ? trace.incoming_design.column_names : trace.outgoing_design.column_names;
  for (const auto& it : trace.iterations) {
    const FitResult& fit = incoming ? it.incoming : it.outgoing;
    out.estimates.push_back(fit.coefficients);
    out.variances.push_back(fit.covariance.diagonal());
    out.covariances.push_back(fit.covariance);
  }
  return out;
}

PooledResult pool(const SemTrace& trace, int burn_in) {
  return {pool_coefficients(coefficient_trace(trace, true), burn_in),
          pool_coefficients(coefficient_trace(trace, false), burn_in)};
}

ScaleTransform parse_transform(const std::string& text) {
  if (text == "identity") return ScaleTransform::identity;
  if (text == "exp") return ScaleTransform::exponential;
  throw ConfigError("transform must be 'identity' or 'exp', got '" + text + "'");
}

PoolingStatistic parse_statistic(const std::string& text) {
  if (text == "mean") return PoolingStatistic::mean;
  if (text == "median") return PoolingStatistic::median;
  throw ConfigError("pooling must be 'mean' or 'median', got '" + text + "'");
}

std::string to_string(ScaleTransform t) { return t == ScaleTransform::identity ? "identity" : "exp"; }
std::string to_string(PoolingStatistic s) { return s == PoolingStatistic::mean ? "mean" : "median"; }

bool is_smooth_coefficient(const std::string& coefficient) {
  return coefficient.rfind("s(", 0) == 0 || coefficient.rfind("te(", 0) == 0;
}

std::string display_name(const std::string& coefficient) {
  static const std::pair<const char*, const char*> kNames[] = {
      {"Monday", "Monday Effect"},       {"Tuesday", "Tuesday Effect"},
      {"Wednesday", "Wednesday Effect"}, {"Thursday", "Thursday Effect"},
      {"Saturday", "Saturday Effect"},   {"Sunday", "Sunday Effect"},
      {"log_rate_35_59", "Infection 35-59 yo"},
      {"log_rate_60_79", "Infection 60-79 yo"},
      {"log_rate_80plus", "Infection 80+ yo"},
  };
  for (const auto& [key, label] : kNames) {
    if (coefficient == key) {
      return label;
    }
  }
  return coefficient;
}

std::string report_table(const PooledResult& pooled, ScaleTransform transform, PoolingStatistic statistic) {
  std::vector<std::string> rows;
  for (const auto* model : {&pooled.incoming, &pooled.outgoing}) {
    for (const auto& e : model->estimates) {
      if (!is_smooth_coefficient(e.name) && std::find(rows.begin(), rows.end(), e.name) == rows.end()) {
        rows.push_back(e.name);
      }
    }
  }
  std::size_t label_width = 10;
  for (const auto& r : rows) {
    label_width = std::max(label_width, display_name(r).size());
  }
  constexpr std::size_t kCol = 11;

  std::ostringstream out;
  out << pad_right("", label_width) << " | " << pad_left("Incoming", 2 * kCol + 1) << " | "
      << pad_left("Outgoing", 2 * kCol + 1) << '\n';
  out << pad_right("", label_width) << " | " << pad_left("Estimate", kCol) << ' ' << pad_left("Std. Dev.", kCol)
      << " | " << pad_left("Estimate", kCol) << ' ' << pad_left("Std. Dev.", kCol) << '\n';
  out << std::string(label_width + 2 * (2 * kCol + 4), '-') << '\n';
  for (const auto& name : rows) {
    out << pad_right(display_name(name), label_width);
    for (const auto* model : {&pooled.incoming, &pooled.outgoing}) {
      out << " | ";
      const auto it = std::find_if(model->estimates.begin(), model->estimates.end(),
                                   [&](const auto& e) { return e.name == name; });
      if (it == model->estimates.end()) {
        out << pad_left("-", kCol) << ' ' << pad_left("-", kCol);
      } else {
        const Shown s = shown_values(*it, transform, statistic);
        out << pad_left(fixed(s.estimate, 4), kCol) << ' ' << pad_left(fixed(s.sd, 4), kCol);
      }
    }
    out << '\n';
  }
  out << std::string(label_width + 2 * (2 * kCol + 4), '-') << '\n';
  out << "Estimates: " << (statistic == PoolingStatistic::mean ? "mean" : "median") << " over iterations "
      << pooled.incoming.burn_in + 1 << ".." << pooled.incoming.total_iterations << " ("
      << pooled.incoming.pooled_iterations << " pooled)";
  out << (transform == ScaleTransform::exponential ? ", exponentiated" : ", linear-predictor scale") << '\n';
  out << "Std. Dev.: Rubin pooled variance (within + (1 + 1/m) * between)";
  if (transform == ScaleTransform::exponential) {
    out << ", mapped to the exp scale by the delta method exp(b) * sd(b)";
  }
  out << '\n';
  return out.str();
}

std::string report_json(const PooledResult& pooled, ScaleTransform transform, PoolingStatistic statistic) {
  nlohmann::ordered_json doc;
  doc["transform"] = to_string(transform);
  doc["pooling"] = to_string(statistic);
  doc["burn_in"] = pooled.incoming.burn_in;
  doc["iterations"] = pooled.incoming.total_iterations;
  doc["pooled_iterations"] = pooled.incoming.pooled_iterations;
  for (const auto* model : {&pooled.incoming, &pooled.outgoing}) {
    auto& list = doc["models"][model->model];
    list = nlohmann::ordered_json::array();
    for (const auto& e : model->estimates) {
      const Shown s = shown_values(e, transform, statistic);
      list.push_back({{"name", e.name},
                      {"label", display_name(e.name)},
                      {"smooth", is_smooth_coefficient(e.name)},
                      {"estimate", s.estimate},
                      {"sd", s.sd},
                      {"pooled_beta", e.pooled_beta},
                      {"median_beta", e.median_beta},
                      {"pooled_variance", e.pooled_variance},
                      {"within_variance", e.within_variance},
                      {"between_variance", e.between_variance},
                      {"exp_scale_estimate", e.exp_scale_estimate},
                      {"exp_scale_sd", e.exp_scale_sd}});
    }
  }
  return doc.dump(2) + "\n";
}

}  // namespace disentangle
