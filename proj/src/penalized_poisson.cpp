#include "disentangle/penalized_poisson.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "disentangle/errors.hpp"

namespace disentangle {

namespace {

constexpr int kMaxStepHalvings = 30;
// Below this reciprocal condition estimate the penalized information is
// treated as singular and the ridge is added.
constexpr double kSingularRcond = 1e-15;

struct Solver {
  Eigen::LLT<Eigen::MatrixXd> llt;
  bool ridge_applied = false;
};

// Factorizes H, adding the ridge when H is (numerically) singular.
Solver factorize(Eigen::MatrixXd h, double ridge) {
  Solver solver;
  solver.llt.compute(h);
  if (solver.llt.info() == Eigen::Success && solver.llt.rcond() > kSingularRcond) {
    return solver;
  }
  h.diagonal().array() += ridge;
  solver.ridge_applied = true;
  solver.llt.compute(h);
  if (solver.llt.info() != Eigen::Success) {
    throw NumericalError("penalized information is not positive definite even after ridge");
  }
  return solver;
}

void check_inputs(const ModelDesign& design, const Eigen::VectorXd& response,
                  const Eigen::VectorXd& offset, std::span<const double> smoothing_params) {
  if (response.size() != design.rows() || offset.size() != design.rows()) {
    std::ostringstream msg;
    msg << "fit_poisson: design has " << design.rows() << " rows but response has " << response.size()
        << " and offset " << offset.size();
    throw DomainError(msg.str());
  }
  if (smoothing_params.size() != design.penalties.size()) {
    std::ostringstream msg;
    msg << "fit_poisson: " << design.penalties.size() << " penalties but " << smoothing_params.size()
        << " smoothing parameters";
    throw DomainError(msg.str());
  }
  for (Eigen::Index i = 0; i < response.size(); ++i) {
    if (!(response(i) >= 0.0) || !std::isfinite(response(i))) {
      throw DomainError("fit_poisson: response must be nonnegative and finite (row " +
                        std::to_string(i) + ")");
    }
  }
  if (!offset.allFinite()) {
    throw DomainError("fit_poisson: offset contains non-finite values");
  }
  for (double lambda : smoothing_params) {
    if (!(lambda >= 0.0) || !std::isfinite(lambda)) {
      throw DomainError("fit_poisson: smoothing parameters must be nonnegative and finite");
    }
  }
}

double penalized_deviance(const Eigen::VectorXd& response, const Eigen::VectorXd& mean,
                          const Eigen::VectorXd& beta, const Eigen::MatrixXd& penalty) {
  return poisson_deviance(response, mean) + beta.dot(penalty * beta);
}

Eigen::VectorXd elementwise_exp(const Eigen::VectorXd& eta) { return eta.array().exp().matrix(); }

}  // namespace

std::vector<double> SmoothingOptions::log_grid(double lo, double hi, int count) {
  if (count < 1 || !(lo > 0.0) || !(hi >= lo)) {
    throw ConfigError("smoothing grid needs count >= 1 and 0 < min <= max");
  }
  std::vector<double> grid;
  grid.reserve(static_cast<std::size_t>(count));
  if (count == 1) {
    grid.push_back(lo);
    return grid;
  }
  const double step = (std::log10(hi) - std::log10(lo)) / (count - 1);
  for (int i = 0; i < count; ++i) {
    grid.push_back(std::pow(10.0, std::log10(lo) + step * i));
  }
  return grid;
}

int IntensityModelSpec::penalty_count() const {
  return (time_smooth ? 1 : 0) + (space_smooth ? 2 : 0);
}

Eigen::MatrixXd SmoothTermLayout::evaluate(std::span<const double> x, std::span<const double> y) const {
  if (const auto* b1 = std::get_if<SmoothBasis1D>(&basis)) {
    return constraint.apply(b1->evaluate(x));
  }
  return constraint.apply(std::get<SmoothBasis2D>(basis).evaluate(x, y));
}

Eigen::MatrixXd ModelDesign::total_penalty(std::span<const double> smoothing_params) const {
  Eigen::MatrixXd total = Eigen::MatrixXd::Zero(cols(), cols());
  for (std::size_t j = 0; j < penalties.size(); ++j) {
    const auto& p = penalties[j];
    const Eigen::Index size = p.matrix.rows();
    total.block(p.first_column, p.first_column, size, size) += smoothing_params[j] * p.matrix;
  }
  return total;
}

double poisson_deviance(const Eigen::VectorXd& response, const Eigen::VectorXd& mean) {
  double dev = 0.0;
  for (Eigen::Index i = 0; i < response.size(); ++i) {
    const double y = response(i);
    const double mu = mean(i);
    dev += (y > 0.0 ? y * std::log(y / mu) : 0.0) - (y - mu);
  }
  return 2.0 * dev;
}

double poisson_log_likelihood(const Eigen::VectorXd& response, const Eigen::VectorXd& mean) {
  double ll = 0.0;
  for (Eigen::Index i = 0; i < response.size(); ++i) {
    const double y = response(i);
    ll += (y > 0.0 ? y * std::log(mean(i)) : 0.0) - mean(i) - std::lgamma(y + 1.0);
  }
  return ll;
}

double penalized_log_likelihood(const ModelDesign& design, const Eigen::VectorXd& response,
                                const Eigen::VectorXd& offset, const Eigen::VectorXd& beta,
                                std::span<const double> smoothing_params) {
  check_inputs(design, response, offset, smoothing_params);
  const Eigen::VectorXd mu = elementwise_exp(design.matrix * beta + offset);
  return poisson_log_likelihood(response, mu) - 0.5 * beta.dot(design.total_penalty(smoothing_params) * beta);
}

Eigen::VectorXd penalized_score(const ModelDesign& design, const Eigen::VectorXd& response,
                                const Eigen::VectorXd& offset, const Eigen::VectorXd& beta,
                                std::span<const double> smoothing_params) {
  check_inputs(design, response, offset, smoothing_params);
  const Eigen::VectorXd mu = elementwise_exp(design.matrix * beta + offset);
  return design.matrix.transpose() * (response - mu) - design.total_penalty(smoothing_params) * beta;
}

FitResult fit_poisson(const ModelDesign& design, const Eigen::VectorXd& response,
                      const Eigen::VectorXd& offset, std::span<const double> smoothing_params,
                      const FitOptions& options, const Eigen::VectorXd* start) {
  check_inputs(design, response, offset, smoothing_params);
  const Eigen::MatrixXd& x = design.matrix;
  const Eigen::MatrixXd penalty = design.total_penalty(smoothing_params);

  FitResult result;
  result.names = design.column_names;
  result.smoothing_params.assign(smoothing_params.begin(), smoothing_params.end());

  Eigen::VectorXd beta = Eigen::VectorXd::Zero(x.cols());
  Eigen::VectorXd eta;
  Eigen::VectorXd mu;
  double pdev = std::numeric_limits<double>::infinity();
  bool have_beta = false;
  if (start != nullptr && start->size() == x.cols()) {
    beta = *start;
    eta = x * beta + offset;
    mu = elementwise_exp(eta);
    pdev = penalized_deviance(response, mu, beta, penalty);
    have_beta = std::isfinite(pdev);
  }
  if (!have_beta) {
    mu = (response.array() + 0.1).matrix();
    eta = mu.array().log().matrix();
  }

  for (int iter = 1; iter <= options.max_iterations; ++iter) {
    result.iterations = iter;
    const Eigen::VectorXd z = (eta - offset).array() + (response - mu).array() / mu.array();
    const Eigen::MatrixXd xtw = x.transpose() * mu.asDiagonal();
    Solver solver = factorize(xtw * x + penalty, options.ridge);
    result.ridge_applied = result.ridge_applied || solver.ridge_applied;
    Eigen::VectorXd candidate = solver.llt.solve(xtw * z);

    Eigen::VectorXd cand_eta = x * candidate + offset;
    Eigen::VectorXd cand_mu = elementwise_exp(cand_eta);
    double cand_pdev = penalized_deviance(response, cand_mu, candidate, penalty);

    if (have_beta) {
      int halvings = 0;
      while ((!std::isfinite(cand_pdev) || cand_pdev > pdev) && halvings < kMaxStepHalvings) {
        candidate = 0.5 * (candidate + beta);
        cand_eta = x * candidate + offset;
        cand_mu = elementwise_exp(cand_eta);
        cand_pdev = penalized_deviance(response, cand_mu, candidate, penalty);
        ++halvings;
      }
      if (!std::isfinite(cand_pdev)) {
        throw NumericalError("fit_poisson: non-finite working weights persisted after step halving");
      }
      if (cand_pdev > pdev) {
        // No descent direction left at working precision: the current beta is
        // the optimum.
        result.converged = true;
        break;
      }
    } else if (!std::isfinite(cand_pdev)) {
      throw NumericalError("fit_poisson: non-finite deviance on the first IRLS step");
    }

    const double change = std::abs(cand_pdev - pdev);
    beta = std::move(candidate);
    eta = std::move(cand_eta);
    mu = std::move(cand_mu);
    result.deviance_path.push_back(cand_pdev);
    const bool small_change = have_beta && change < options.tolerance * (std::abs(cand_pdev) + 0.1);
    pdev = cand_pdev;
    have_beta = true;
    if (small_change) {
      result.converged = true;
      break;
    }
  }

  const Eigen::MatrixXd xtw = x.transpose() * mu.asDiagonal();
  const Eigen::MatrixXd info = xtw * x;
  Solver solver = factorize(info + penalty, options.ridge);
  result.ridge_applied = result.ridge_applied || solver.ridge_applied;
  const Eigen::Index p = x.cols();
  result.covariance = solver.llt.solve(Eigen::MatrixXd::Identity(p, p));
  result.covariance = 0.5 * (result.covariance + result.covariance.transpose()).eval();
  result.edf = solver.llt.solve(info).trace();
  result.coefficients = beta;
  result.fitted = mu;
  result.deviance = poisson_deviance(response, mu);
  result.penalized_deviance = result.deviance + beta.dot(penalty * beta);
  result.log_likelihood = poisson_log_likelihood(response, mu);
  result.score_norm = (x.transpose() * (response - mu) - penalty * beta).norm();

  if (response.sum() == 0.0) {
    result.diagnostics.emplace_back("all-zero response");
  }
  if (result.ridge_applied) {
    result.diagnostics.emplace_back("ridge applied to singular penalized information");
  }
  if (!result.converged) {
    result.diagnostics.emplace_back("IRLS did not converge");
  }
  return result;
}

namespace {

struct WorkingModel {
  Eigen::MatrixXd info;  // X'WX
  Eigen::VectorXd rhs;   // X'Wz
  double zwz = 0.0;
  double n = 0.0;
};

double working_ubre(const WorkingModel& wm, const Eigen::MatrixXd& penalty, Eigen::VectorXd* beta_out) {
  Eigen::LLT<Eigen::MatrixXd> llt(wm.info + penalty);
  if (llt.info() != Eigen::Success) {
    return std::numeric_limits<double>::infinity();
  }
  const Eigen::VectorXd beta = llt.solve(wm.rhs);
  const double rss = wm.zwz - 2.0 * beta.dot(wm.rhs) + beta.dot(wm.info * beta);
  const double edf = llt.solve(wm.info).trace();
  if (beta_out != nullptr) {
    *beta_out = beta;
  }
  return rss / wm.n - 1.0 + 2.0 * edf / wm.n;
}

}  // namespace

std::vector<double> select_smoothing(const ModelDesign& design, const Eigen::VectorXd& response,
                                     const Eigen::VectorXd& offset, const SmoothingOptions& options,
                                     const FitOptions& fit_options) {
  const std::size_t count = design.penalties.size();
  if (options.fixed) {
    if (options.fixed->size() != count) {
      std::ostringstream msg;
      msg << "fixed smoothing parameters: expected " << count << ", got " << options.fixed->size();
      throw ConfigError(msg.str());
    }
    return *options.fixed;
  }
  if (count == 0) {
    return {};
  }
  if (options.grid.empty()) {
    throw ConfigError("smoothing grid is empty");
  }
  const std::size_t mid = (options.grid.size() - 1) / 2;
  std::vector<std::size_t> chosen(count, mid);
  if (options.grid.size() == 1) {
    return std::vector<double>(count, options.grid.front());
  }
  check_inputs(design, response, offset, std::vector<double>(count, options.grid[mid]));

  auto lambdas_of = [&](const std::vector<std::size_t>& idx) {
    std::vector<double> out(count);
    for (std::size_t j = 0; j < count; ++j) {
      out[j] = options.grid[idx[j]];
    }
    return out;
  };

  const Eigen::MatrixXd& x = design.matrix;
  Eigen::VectorXd mu = (response.array() + 0.1).matrix();
  Eigen::VectorXd eta = mu.array().log().matrix();
  double dev = std::numeric_limits<double>::infinity();
  std::vector<std::size_t> previous;

  for (int iter = 0; iter < options.max_iterations; ++iter) {
    const Eigen::VectorXd z = (eta - offset).array() + (response - mu).array() / mu.array();
    const Eigen::MatrixXd xtw = x.transpose() * mu.asDiagonal();
    WorkingModel wm{xtw * x, xtw * z, z.dot(mu.asDiagonal() * z), static_cast<double>(x.rows())};
    wm.info.diagonal().array() += fit_options.ridge;

    for (int sweep = 0; sweep < 2; ++sweep) {
      for (std::size_t j = 0; j < count; ++j) {
        std::vector<double> scores(options.grid.size());
        std::vector<std::size_t> trial = chosen;
        for (std::size_t g = 0; g < options.grid.size(); ++g) {
          trial[j] = g;
          scores[g] = working_ubre(wm, design.total_penalty(lambdas_of(trial)), nullptr);
        }
        const auto best = std::min_element(scores.begin(), scores.end());
        const auto worst = std::max_element(scores.begin(), scores.end());
        if (!std::isfinite(*best)) {
          continue;
        }
        const bool flat = std::isfinite(*worst) && (*worst - *best) <= 1e-12 * (1.0 + std::abs(*best));
        chosen[j] = flat ? mid : static_cast<std::size_t>(best - scores.begin());
      }
    }

    Eigen::VectorXd beta;
    working_ubre(wm, design.total_penalty(lambdas_of(chosen)), &beta);
    if (beta.size() != x.cols() || !beta.allFinite()) {
      break;
    }
    eta = x * beta + offset;
    mu = elementwise_exp(eta);
    if (!mu.allFinite()) {
      break;
    }
    const double new_dev = poisson_deviance(response, mu);
    const bool stable = chosen == previous &&
                        std::abs(new_dev - dev) < 1e-6 * (std::abs(new_dev) + 0.1);
    dev = new_dev;
    previous = chosen;
    if (stable) {
      break;
    }
  }
  return lambdas_of(chosen);
}

Eigen::VectorXd predict_intensity(const FitResult& fit, const Eigen::MatrixXd& rows,
                                  const Eigen::VectorXd& offset) {
  if (rows.cols() != fit.coefficients.size()) {
    std::ostringstream msg;
    msg << "predict_intensity: rows have " << rows.cols() << " columns, fit has "
        << fit.coefficients.size() << " coefficients";
    throw DomainError(msg.str());
  }
  if (offset.size() != rows.rows()) {
    throw DomainError("predict_intensity: offset length does not match rows");
  }
  return ((rows * fit.coefficients + offset).array().exp()).matrix();
}

}  // namespace disentangle
