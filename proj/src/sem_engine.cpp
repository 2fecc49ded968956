#include "disentangle/sem_engine.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <fstream>
#include <future>
#include <map>
#include <numeric>
#include <sstream>
#include <thread>

#include "disentangle/csv.hpp"

namespace disentangle {

namespace {

constexpr int kMaxCensoringRejections = 1000;

void append_columns(Eigen::MatrixXd& matrix, const Eigen::MatrixXd& block) {
  const Eigen::Index old_cols = matrix.cols();
  matrix.conservativeResize(block.rows(), old_cols + block.cols());
  matrix.rightCols(block.cols()) = block;
}

}  // namespace

WeightKernel WeightKernel::placeholder() {
  // Log-normal density shape with median ~9 days, evaluated at lag + 0.5.
  constexpr double mu = 2.2;
  constexpr double sigma = 0.8;
  WeightKernel kernel;
  kernel.weights.resize(kMaxKernelLags);
  for (int lag = 0; lag < kMaxKernelLags; ++lag) {
    const double x = lag + 0.5;
    const double z = (std::log(x) - mu) / sigma;
    kernel.weights[static_cast<std::size_t>(lag)] = std::exp(-0.5 * z * z) / x;
  }
  const double total = std::accumulate(kernel.weights.begin(), kernel.weights.end(), 0.0);
  for (double& w : kernel.weights) {
    w /= total;
  }
  kernel.normalized = true;
  return kernel;
}

WeightKernel WeightKernel::point_mass(int lag) {
  if (lag < 0 || lag >= kMaxKernelLags) {
    throw ConfigError("point-mass kernel lag must be in [0, 56]");
  }
  WeightKernel kernel;
  kernel.weights.assign(static_cast<std::size_t>(lag + 1), 0.0);
  kernel.weights.back() = 1.0;
  kernel.normalized = true;
  return kernel;
}

WeightKernel WeightKernel::load(const std::string& path) {
  const auto table = csv::read_file(path);
  const auto c_lag = table.column("lag");
  const auto c_weight = table.column("weight");
  WeightKernel kernel;
  std::map<long long, double> by_lag;
  for (const auto& row : table.rows) {
    const auto lag = csv::to_integer(row[c_lag], "lag");
    if (lag < 0 || lag >= kMaxKernelLags) {
      throw ConfigError(path + ": lag " + std::to_string(lag) + " outside 0..56");
    }
    if (!by_lag.emplace(lag, csv::to_double(row[c_weight], "weight")).second) {
      throw ConfigError(path + ": duplicate lag " + std::to_string(lag));
    }
  }
  if (by_lag.empty()) {
    throw ConfigError(path + ": kernel has no weights");
  }
  kernel.weights.assign(static_cast<std::size_t>(by_lag.rbegin()->first + 1), 0.0);
  for (const auto& [lag, w] : by_lag) {
    kernel.weights[static_cast<std::size_t>(lag)] = w;
  }
  const double total = std::accumulate(kernel.weights.begin(), kernel.weights.end(), 0.0);
  kernel.normalized = std::abs(total - 1.0) < 1e-9;
  kernel.validate();
  return kernel;
}

void WeightKernel::save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) {
    throw ConfigError("cannot write kernel file: " + path);
  }
  out << "lag,weight\n";
  for (std::size_t lag = 0; lag < weights.size(); ++lag) {
    out << lag << ',' << csv::format_double(weights[lag]) << '\n';
  }
}

void WeightKernel::validate() const {
  if (weights.empty() || weights.size() > static_cast<std::size_t>(kMaxKernelLags)) {
    throw ConfigError("weight kernel must cover between 1 and 57 lags");
  }
  for (double w : weights) {
    if (!(w >= 0.0) || !std::isfinite(w)) {
      throw ConfigError("weight kernel entries must be nonnegative and finite");
    }
  }
  if (normalized) {
    const double total = std::accumulate(weights.begin(), weights.end(), 0.0);
    if (std::abs(total - 1.0) > 1e-9) {
      throw ConfigError("weight kernel flagged normalized but sums to " + csv::format_double(total));
    }
  }
}

LagIndex::LagIndex(const Panel& panel, int max_lag)
    : max_lag_(max_lag), size_(panel.size()), table_(panel.size() * static_cast<std::size_t>(max_lag + 1), -1) {
  std::map<std::string, std::map<DayIndex, int>> position;
  for (std::size_t i = 0; i < panel.size(); ++i) {
    position[panel[i].district_id][panel[i].day] = static_cast<int>(i);
  }
  for (std::size_t i = 0; i < panel.size(); ++i) {
    const auto& days = position.at(panel[i].district_id);
    for (int lag = 0; lag <= max_lag; ++lag) {
      const auto it = days.find(panel[i].day - lag);
      if (it != days.end()) {
        table_[i * static_cast<std::size_t>(max_lag + 1) + static_cast<std::size_t>(lag)] = it->second;
      }
    }
  }
}

SemAborted::SemAborted(int iteration, const std::string& cause, std::shared_ptr<SemTrace> partial)
    : NumericalError("SEM aborted at iteration " + std::to_string(iteration) + ": " + cause),
      iteration_(iteration),
      partial_(std::move(partial)) {}

ModelDesign build_design(const Panel& panel, const IntensityModelSpec& spec) {
  if (panel.empty()) {
    throw DomainError("build_design: empty panel");
  }
  const auto n = static_cast<Eigen::Index>(panel.size());
  ModelDesign design;
  design.matrix.resize(n, 0);

  if (spec.intercept) {
    append_columns(design.matrix, Eigen::VectorXd::Ones(n));
    design.column_names.emplace_back("Intercept");
  }
  for (const auto& term : spec.linear_terms) {
    const std::size_t c = panel.covariate_index(term);
    Eigen::VectorXd column(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      column(i) = panel[static_cast<std::size_t>(i)].covariates[c];
    }
    append_columns(design.matrix, column);
    design.column_names.push_back(term);
  }

  if (spec.time_smooth) {
    std::vector<double> t(panel.size());
    for (std::size_t i = 0; i < panel.size(); ++i) {
      t[i] = panel[i].day;
    }
    auto basis = build_basis_1d(t, spec.time_smooth->basis_dim, spec.time_smooth->degree,
                                spec.time_smooth->penalty_order);
    auto constrained = apply_constraint(basis.design);
    SmoothTermLayout layout{"s(t)", design.matrix.cols(), constrained.design.cols(), basis.basis,
                            constrained.transform};
    design.penalties.push_back(
        {"s(t)", layout.first_column, constrained.transform.constrain_penalty(basis.basis.penalty())});
    for (Eigen::Index j = 0; j < layout.columns; ++j) {
      design.column_names.push_back("s(t)." + std::to_string(j + 1));
    }
    append_columns(design.matrix, constrained.design);
    design.smooths.push_back(std::move(layout));
  }

  if (spec.space_smooth) {
    std::vector<double> lon(panel.size());
    std::vector<double> lat(panel.size());
    for (std::size_t i = 0; i < panel.size(); ++i) {
      lon[i] = panel[i].longitude;
      lat[i] = panel[i].latitude;
    }
    auto basis = build_basis_2d(lon, lat, spec.space_smooth->dims, spec.space_smooth->degree,
                                spec.space_smooth->penalty_order);
    auto constrained = apply_constraint(basis.design);
    SmoothTermLayout layout{"te(lon,lat)", design.matrix.cols(), constrained.design.cols(), basis.basis,
                            constrained.transform};
    design.penalties.push_back({"te(lon,lat):lon", layout.first_column,
                                constrained.transform.constrain_penalty(basis.basis.penalties()[0])});
    design.penalties.push_back({"te(lon,lat):lat", layout.first_column,
                                constrained.transform.constrain_penalty(basis.basis.penalties()[1])});
    for (Eigen::Index j = 0; j < layout.columns; ++j) {
      design.column_names.push_back("te(lon,lat)." + std::to_string(j + 1));
    }
    append_columns(design.matrix, constrained.design);
    design.smooths.push_back(std::move(layout));
  }

  if (design.matrix.cols() == 0) {
    throw ConfigError("intensity model '" + spec.name + "' has no terms");
  }
  return design;
}

InitialIntensities initialize(const Panel& panel, const SemConfig& config) {
  if (panel.empty()) {
    throw DomainError("initialize: empty panel");
  }
  double start = 0.0;
  if (config.initial_intensity) {
    start = *config.initial_intensity;
    if (!(start > 0.0) || !std::isfinite(start)) {
      throw ConfigError("initial intensity must be positive and finite");
    }
  } else {
    double total = 0.0;
    for (const auto& obs : panel.observations) {
      total += std::abs(obs.delta);
    }
    start = std::max(total / static_cast<double>(panel.size()), 0.1);
  }
  const auto n = static_cast<Eigen::Index>(panel.size());
  return {Eigen::VectorXd::Constant(n, start), Eigen::VectorXd::Constant(n, start)};
}

namespace {

ConditionalJointTable table_with_floor(const PanelObservation& obs, std::size_t index, double lambda_in,
                                       double lambda_out, int k_max, double floor, int& floored) {
  try {
    return conditional_joint_table(obs.delta, {PoissonIntensity(lambda_in), PoissonIntensity(lambda_out)},
                                   k_max);
  } catch (const NumericalError&) {
  } catch (const DomainError&) {
  }
  ++floored;
  std::ostringstream where;
  where << "observation " << index << " (district " << obs.district_id << ", " << format_iso_date(obs.day)
        << ", delta " << obs.delta << ")";
  if (std::isnan(lambda_in) || std::isnan(lambda_out)) {
    throw NumericalError("e_step: NaN intensity at " + where.str());
  }
  try {
    return conditional_joint_table(obs.delta,
                                   {PoissonIntensity(std::max(lambda_in, floor)),
                                    PoissonIntensity(std::max(lambda_out, floor))},
                                   k_max);
  } catch (const Error& e) {
    throw NumericalError("e_step: cannot build conditional table at " + where.str() + ": " + e.what());
  }
}

struct ChunkCounts {
  long long rejections = 0;
  int floored = 0;
};

void sample_range(const Panel& panel, const Eigen::VectorXd& lambda_in, const Eigen::VectorXd& lambda_out,
                  std::uint64_t seed, int iteration, const EStepOptions& options, std::size_t begin,
                  std::size_t end, LatentDraw& draw, ChunkCounts& counts) {
  for (std::size_t i = begin; i < end; ++i) {
    const auto& obs = panel[i];
    const auto row = static_cast<Eigen::Index>(i);
    RandomStream rng(seed, static_cast<std::uint64_t>(iteration), i);
    const ConditionalJointTable table =
        table_with_floor(obs, i, lambda_in(row), lambda_out(row), options.truncation,
                         options.intensity_floor, counts.floored);
    JointDraw d = sample_joint(table, rng);
    if (options.strict_censoring) {
      const int capacity = obs.previous_occupancy();
      int attempts = 0;
      while (d.departures > capacity && attempts < kMaxCensoringRejections) {
        ++counts.rejections;
        ++attempts;
        d = sample_joint(table, rng);
      }
      if (d.departures > capacity) {
        // Sample directly from the table restricted to R <= Y(t-1), i.e. I <= Y(t).
        const int bound = std::min(options.truncation, std::max(obs.occupancy, table.k_min));
        const auto restricted = table_with_floor(obs, i, lambda_in(row), lambda_out(row), bound,
                                                 options.intensity_floor, counts.floored);
        d = sample_joint(restricted, rng);
      }
    }
    draw.arrivals[i] = d.arrivals;
    draw.departures[i] = d.departures;
  }
}

}  // namespace

LatentDraw e_step(const Panel& panel, const Eigen::VectorXd& lambda_in, const Eigen::VectorXd& lambda_out,
                  std::uint64_t seed, int iteration, const EStepOptions& options) {
  const auto n = panel.size();
  if (static_cast<std::size_t>(lambda_in.size()) != n || static_cast<std::size_t>(lambda_out.size()) != n) {
    throw DomainError("e_step: intensity vectors are not aligned with the panel");
  }
  LatentDraw draw;
  draw.arrivals.resize(n);
  draw.departures.resize(n);

  const std::size_t workers = std::clamp<std::size_t>(static_cast<std::size_t>(std::max(options.threads, 1)), 1,
                                                      std::max<std::size_t>(n / 64, 1));
  std::vector<ChunkCounts> counts(workers);
  if (workers == 1) {
    sample_range(panel, lambda_in, lambda_out, seed, iteration, options, 0, n, draw, counts[0]);
  } else {
    std::vector<std::exception_ptr> errors(workers);
    std::vector<std::thread> pool;
    const std::size_t chunk = (n + workers - 1) / workers;
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&, w] {
        try {
          sample_range(panel, lambda_in, lambda_out, seed, iteration, options, w * chunk,
                       std::min(n, (w + 1) * chunk), draw, counts[w]);
        } catch (...) {
          errors[w] = std::current_exception();
        }
      });
    }
    for (auto& t : pool) {
      t.join();
    }
    for (const auto& e : errors) {
      if (e) {
        std::rethrow_exception(e);
      }
    }
  }
  for (const auto& c : counts) {
    draw.rejections += c.rejections;
    draw.floored += c.floored;
  }
  return draw;
}

Eigen::VectorXd build_offset(const LagIndex& lags, std::span<const int> arrivals, const WeightKernel& kernel,
                             double floor) {
  if (arrivals.size() != lags.size()) {
    throw DomainError("build_offset: arrivals are not aligned with the panel");
  }
  if (static_cast<int>(kernel.weights.size()) > lags.max_lag() + 1) {
    throw DomainError("build_offset: kernel is longer than the lag index");
  }
  if (!(floor > 0.0)) {
    throw DomainError("build_offset: floor must be positive");
  }
  Eigen::VectorXd offset(static_cast<Eigen::Index>(arrivals.size()));
  for (std::size_t i = 0; i < arrivals.size(); ++i) {
    double weighted = 0.0;
    for (std::size_t lag = 0; lag < kernel.weights.size(); ++lag) {
      const int j = lags.at(i, static_cast<int>(lag));
      if (j >= 0) {
        weighted += kernel.weights[lag] * arrivals[static_cast<std::size_t>(j)];
      }
    }
    offset(static_cast<Eigen::Index>(i)) = std::log(weighted + floor);
  }
  return offset;
}

Eigen::VectorXd build_offset(const Panel& panel, std::span<const int> arrivals, const WeightKernel& kernel,
                             double floor) {
  kernel.validate();
  return build_offset(LagIndex(panel, static_cast<int>(kernel.weights.size()) - 1), arrivals, kernel, floor);
}

namespace {

Eigen::VectorXd as_vector(const std::vector<int>& counts) {
  Eigen::VectorXd v(static_cast<Eigen::Index>(counts.size()));
  for (std::size_t i = 0; i < counts.size(); ++i) {
    v(static_cast<Eigen::Index>(i)) = counts[i];
  }
  return v;
}

FitResult fit_one(const ModelDesign& design, const IntensityModelSpec& spec, const Eigen::VectorXd& response,
                  const Eigen::VectorXd& offset, const FitOptions& fit, const std::vector<double>* frozen,
                  const Eigen::VectorXd* start) {
  const std::vector<double> lambdas =
      frozen != nullptr ? *frozen : select_smoothing(design, response, offset, spec.smoothing, fit);
  return fit_poisson(design, response, offset, lambdas, fit, start);
}

}  // namespace

MStepResult m_step(const LatentDraw& latent, const Eigen::VectorXd& outgoing_offset, const MStepInputs& inputs) {
  const Eigen::VectorXd arrivals = as_vector(latent.arrivals);
  const Eigen::VectorXd departures = as_vector(latent.departures);
  if (arrivals.size() != inputs.incoming_design.rows() || departures.size() != inputs.outgoing_design.rows()) {
    throw DomainError("m_step: latent draw is not aligned with the designs");
  }
  const Eigen::VectorXd incoming_offset = inputs.incoming_spec.offset_rule == OffsetRule::weighted_arrivals
                                              ? outgoing_offset
                                              : Eigen::VectorXd::Zero(arrivals.size());
  const Eigen::VectorXd out_offset = inputs.outgoing_spec.offset_rule == OffsetRule::weighted_arrivals
                                         ? outgoing_offset
                                         : Eigen::VectorXd::Zero(departures.size());
  auto fit_in = [&] {
    return fit_one(inputs.incoming_design, inputs.incoming_spec, arrivals, incoming_offset, inputs.fit,
                   inputs.incoming_smoothing, inputs.incoming_start);
  };
  auto fit_out = [&] {
    return fit_one(inputs.outgoing_design, inputs.outgoing_spec, departures, out_offset, inputs.fit,
                   inputs.outgoing_smoothing, inputs.outgoing_start);
  };
  if (inputs.parallel) {
    auto outgoing = std::async(std::launch::async, fit_out);
    FitResult incoming = fit_in();
    return {std::move(incoming), outgoing.get()};
  }
  FitResult incoming = fit_in();
  FitResult outgoing = fit_out();
  return {std::move(incoming), std::move(outgoing)};
}

double complete_log_likelihood(const LatentDraw& latent, const Eigen::VectorXd& lambda_in,
                               const Eigen::VectorXd& lambda_out) {
  return poisson_log_likelihood(as_vector(latent.arrivals), lambda_in) +
         poisson_log_likelihood(as_vector(latent.departures), lambda_out);
}

SemTrace run_sem(const Panel& panel, const SemConfig& config, const IterationCallback& on_iteration) {
  if (panel.empty()) {
    throw DomainError("run_sem: empty panel");
  }
  if (config.iterations < 1) {
    throw ConfigError("iterations must be at least 1");
  }
  if (config.burn_in < 0) {
    throw ConfigError("burn-in must be nonnegative");
  }
  config.kernel.validate();

  auto trace = std::make_shared<SemTrace>();
  trace->seed = config.seed;
  trace->config = config;
  trace->incoming_design = build_design(panel, config.incoming);
  trace->outgoing_design = build_design(panel, config.outgoing);
  trace->iterations.reserve(static_cast<std::size_t>(config.iterations));

  const LagIndex lags(panel, static_cast<int>(config.kernel.weights.size()) - 1);
  InitialIntensities lambda = initialize(panel, config);
  EStepOptions e_options = config.e_step;
  e_options.threads = config.threads;

  std::optional<std::vector<double>> frozen_in;
  std::optional<std::vector<double>> frozen_out;
  Eigen::VectorXd start_in;
  Eigen::VectorXd start_out;

  for (int k = 1; k <= config.iterations; ++k) {
    try {
      SemIteration it;
      it.index = k;
      it.draw = e_step(panel, lambda.lambda_in, lambda.lambda_out, config.seed, k, e_options);
      const Eigen::VectorXd offset = build_offset(lags, it.draw.arrivals, config.kernel, config.offset_floor);
      MStepInputs inputs{trace->incoming_design,
                         trace->outgoing_design,
                         config.incoming,
                         config.outgoing,
                         config.fit,
                         frozen_in ? &*frozen_in : nullptr,
                         frozen_out ? &*frozen_out : nullptr,
                         k > 1 ? &start_in : nullptr,
                         k > 1 ? &start_out : nullptr,
                         config.threads > 1};
      MStepResult m = m_step(it.draw, offset, inputs);
      it.incoming = std::move(m.incoming);
      it.outgoing = std::move(m.outgoing);
      lambda.lambda_in = it.incoming.fitted;
      lambda.lambda_out = it.outgoing.fitted;
      it.complete_log_likelihood = it.incoming.log_likelihood + it.outgoing.log_likelihood;
      start_in = it.incoming.coefficients;
      start_out = it.outgoing.coefficients;
      if (config.freeze_smoothing_after_burn_in && k >= config.burn_in && !frozen_in) {
        frozen_in = it.incoming.smoothing_params;
        frozen_out = it.outgoing.smoothing_params;
      }
      trace->iterations.push_back(std::move(it));
    } catch (const SemAborted&) {
      throw;
    } catch (const Error& e) {
      throw SemAborted(k, e.what(), trace);
    }
    if (on_iteration) {
      on_iteration(trace->iterations.back());
    }
  }
  return std::move(*trace);
}

}  // namespace disentangle
