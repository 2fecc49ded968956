#include "disentangle/simulation_lab.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <random>
#include <sstream>
#include <thread>

#include "json.hpp"

#include "disentangle/csv.hpp"
#include "disentangle/errors.hpp"
#include "disentangle/pooled_inference.hpp"

namespace disentangle {

namespace {

constexpr std::uint64_t kGeneratorStream = 0x5eed0001ULL;
constexpr std::uint64_t kSpatioTemporalStream = 0x5eed0002ULL;
constexpr DayIndex kSimulationFirstDay = 18902;  // arbitrary calendar anchor

int draw_poisson(RandomStream& rng, double mean) {
  std::poisson_distribution<int> dist(mean);
  return dist(rng);
}

}  // namespace

void SimConfig::validate() const {
  if (n < 2) throw ConfigError("n must be at least 2");
  if (!(x_var > 0.0)) throw ConfigError("x_var must be positive");
  if (replications < 1) throw ConfigError("replications must be at least 1");
  if (iterations < 1) throw ConfigError("iterations must be at least 1");
  if (burn_in < 0 || burn_in >= iterations) throw ConfigError("burn_in must be in [0, iterations)");
  if (!(level > 0.0 && level < 1.0)) throw ConfigError("level must be in (0, 1)");
}

SimulatedPanel generate(const SimConfig& config, std::uint64_t seed) {
  config.validate();
  RandomStream rng(seed, kGeneratorStream);
  std::normal_distribution<double> covariate(config.x_mean, std::sqrt(config.x_var));

  const int rows = config.n + 1;
  std::vector<double> x(static_cast<std::size_t>(rows));
  std::vector<int> arrivals(static_cast<std::size_t>(rows));
  for (auto& v : x) {
    v = covariate(rng);
  }
  for (int t = 0; t < rows; ++t) {
    arrivals[t] = draw_poisson(rng, std::exp(config.beta_in[0] + config.beta_in[1] * x[t]));
  }

  SimulatedPanel sim;
  sim.lead_arrivals = arrivals[0];
  sim.panel.covariate_names = {"x"};
  std::vector<int> prefix;
  int running = 0;
  int lowest = 0;
  for (int t = 1; t < rows; ++t) {
    const double mean = std::exp(config.beta_out[0] + config.beta_out[1] * x[t] + std::log(arrivals[t - 1] + 0.1));
    const int departures = draw_poisson(rng, mean);
    sim.x.push_back(x[t]);
    sim.true_arrivals.push_back(arrivals[t]);
    sim.true_departures.push_back(departures);
    running += arrivals[t] - departures;
    prefix.push_back(running);
    lowest = std::min(lowest, running);
  }
  // Occupancy is not part of the generating process; anchor it so the
  // cumulative series stays nonnegative.
  const int start = -lowest;
  for (int t = 0; t < config.n; ++t) {
    PanelObservation obs;
    obs.district_id = "sim";
    obs.day = kSimulationFirstDay + t;
    obs.delta = sim.true_arrivals[t] - sim.true_departures[t];
    obs.occupancy = start + prefix[t];
    obs.covariates = {sim.x[t]};
    sim.panel.observations.push_back(std::move(obs));
  }
  return sim;
}

SemConfig simulation_sem_config(const SimConfig& config, std::uint64_t seed) {
  SemConfig sem;
  sem.iterations = config.iterations;
  sem.burn_in = config.burn_in;
  sem.seed = seed;
  sem.incoming.name = "incoming";
  sem.incoming.linear_terms = {"x"};
  sem.outgoing.name = "outgoing";
  sem.outgoing.linear_terms = {"x"};
  sem.outgoing.offset_rule = OffsetRule::weighted_arrivals;
  sem.kernel = WeightKernel::point_mass(1);
  sem.offset_floor = 0.1;
  return sem;
}

double normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) {
    throw DomainError("normal_quantile: p must be in (0, 1)");
  }
  // Acklam's rational approximation, polished with one Halley step.
  static const double a[] = {-3.969683028665376e+01, 2.209460984245205e+02, -2.759285104469687e+02,
                             1.383577518672690e+02,  -3.066479806614716e+01, 2.506628277459239e+00};
  static const double b[] = {-5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
                             6.680131188771972e+01,  -1.328068155288572e+01};
  static const double c[] = {-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
                             -2.549732539343734e+00, 4.374664141464968e+00,  2.938163982698783e+00};
  static const double d[] = {7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00,
                             3.754408661907416e+00};
  constexpr double low = 0.02425;
  double x = 0.0;
  if (p < low) {
    const double q = std::sqrt(-2.0 * std::log(p));
    x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  } else if (p <= 1.0 - low) {
    const double q = p - 0.5;
    const double r = q * q;
    x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
        (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
  } else {
    const double q = std::sqrt(-2.0 * std::log(1.0 - p));
    x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }
  const double e = 0.5 * std::erfc(-x / std::numbers::sqrt2) - p;
  const double u = e * std::sqrt(2.0 * std::numbers::pi) * std::exp(0.5 * x * x);
  return x - u / (1.0 + 0.5 * x * u);
}

IntervalRecord wald_interval(std::string coefficient, double truth, double estimate, double variance,
                             double level) {
  const double z = normal_quantile(0.5 + 0.5 * level);
  IntervalRecord rec;
  rec.coefficient = std::move(coefficient);
  rec.truth = truth;
  rec.estimate = estimate;
  rec.se = std::sqrt(variance);
  rec.lower = estimate - z * rec.se;
  rec.upper = estimate + z * rec.se;
  rec.covered = rec.lower <= truth && truth <= rec.upper;
  return rec;
}

std::uint64_t replication_seed(std::uint64_t master, int replication) {
  return mix64(master ^ mix64(0xabcdef12345ULL + static_cast<std::uint64_t>(replication)));
}

ReplicationResult run_replication(const SimConfig& config, int replication) {
  ReplicationResult result;
  result.replication = replication;
  result.seed = replication_seed(config.seed, replication);
  try {
    const SimulatedPanel sim = generate(config, result.seed);
    const auto [lo, hi] = std::minmax_element(sim.panel.observations.begin(), sim.panel.observations.end(),
                                              [](const auto& a, const auto& b) { return a.delta < b.delta; });
    result.delta_min = lo->delta;
    result.delta_max = hi->delta;

    const SemConfig sem = simulation_sem_config(config, mix64(result.seed + 1));
    const SemTrace trace = run_sem(sim.panel, sem);
    for (const auto& it : trace.iterations) {
      result.complete_log_likelihood.push_back(it.complete_log_likelihood);
    }
    const PooledResult pooled = pool(trace, config.burn_in);
    const std::array<std::pair<const PooledModel*, const std::array<double, 2>*>, 2> models{
        {{&pooled.incoming, &config.beta_in}, {&pooled.outgoing, &config.beta_out}}};
    for (const auto& [model, truth] : models) {
      for (std::size_t j = 0; j < 2; ++j) {
        const auto& e = model->estimates[j];
        result.intervals.push_back(wald_interval(model->model + ":" + e.name, (*truth)[j], e.pooled_beta,
                                                 e.pooled_variance, config.level));
      }
    }

    if (config.oracle) {
      Eigen::VectorXd arrivals(config.n);
      Eigen::VectorXd departures(config.n);
      Eigen::VectorXd offset(config.n);
      for (int t = 0; t < config.n; ++t) {
        arrivals(t) = sim.true_arrivals[t];
        departures(t) = sim.true_departures[t];
        const int lagged = t == 0 ? sim.lead_arrivals : sim.true_arrivals[t - 1];
        offset(t) = std::log(lagged + 0.1);
      }
      const FitResult in = fit_poisson(trace.incoming_design, arrivals, Eigen::VectorXd::Zero(config.n), {});
      const FitResult out = fit_poisson(trace.outgoing_design, departures, offset, {});
      const std::array<std::pair<const FitResult*, const std::array<double, 2>*>, 2> fits{
          {{&in, &config.beta_in}, {&out, &config.beta_out}}};
      const std::array<std::string, 2> labels{"incoming", "outgoing"};
      for (std::size_t m = 0; m < 2; ++m) {
        const auto& [fit, truth] = fits[m];
        for (Eigen::Index j = 0; j < 2; ++j) {
          result.oracle_intervals.push_back(wald_interval(labels[m] + ":" + fit->names[j], (*truth)[j],
                                                          fit->coefficients(j), fit->covariance(j, j),
                                                          config.level));
        }
      }
    }
  } catch (const Error& e) {
    result.failed = true;
    result.error = e.what();
  }
  return result;
}

StudyReport run_study(const SimConfig& config) {
  config.validate();
  StudyReport report;
  report.config = config;
  report.replications.resize(static_cast<std::size_t>(config.replications));
  const int workers = std::clamp(config.threads, 1, config.replications);
  std::atomic<int> next{0};
  auto work = [&] {
    for (int r = next++; r < config.replications; r = next++) {
      report.replications[static_cast<std::size_t>(r)] = run_replication(config, r + 1);
    }
  };
  if (workers == 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) {
      pool.emplace_back(work);
    }
    for (auto& t : pool) {
      t.join();
    }
  }
  return report;
}

std::vector<CoverageRow> StudyReport::coverage() const {
  std::vector<CoverageRow> rows;
  for (const auto& rep : replications) {
    if (rep.failed) {
      continue;
    }
    for (std::size_t j = 0; j < rep.intervals.size(); ++j) {
      const auto& iv = rep.intervals[j];
      auto it = std::find_if(rows.begin(), rows.end(), [&](const auto& r) { return r.coefficient == iv.coefficient; });
      if (it == rows.end()) {
        rows.push_back({iv.coefficient, 0, 0, 0});
        it = rows.end() - 1;
      }
      ++it->runs;
      it->covered += iv.covered ? 1 : 0;
      if (j < rep.oracle_intervals.size()) {
        it->oracle_covered += rep.oracle_intervals[j].covered ? 1 : 0;
      }
    }
  }
  return rows;
}

std::string StudyReport::render_text() const {
  std::ostringstream out;
  char line[256];
  std::snprintf(line, sizeof(line), "Coverage of %.0f%% Wald intervals over %d replication(s)\n",
                config.level * 100.0, config.replications);
  out << line;
  std::snprintf(line, sizeof(line), "n=%d, x ~ N(%g, %g), K=%d, burn-in=%d\n", config.n, config.x_mean,
                config.x_var, config.iterations, config.burn_in);
  out << line;
  std::snprintf(line, sizeof(line), "%-22s %10s %12s\n", "coefficient", "SEM", "oracle");
  out << line;
  for (const auto& row : coverage()) {
    std::snprintf(line, sizeof(line), "%-22s %6d/%-3d %8d/%-3d\n", row.coefficient.c_str(), row.covered, row.runs,
                  row.oracle_covered, config.oracle ? row.runs : 0);
    out << line;
  }
  int lo = 0;
  int hi = 0;
  bool first = true;
  for (const auto& rep : replications) {
    if (rep.failed) {
      out << "replication " << rep.replication << " FAILED: " << rep.error << '\n';
      continue;
    }
    lo = first ? rep.delta_min : std::min(lo, rep.delta_min);
    hi = first ? rep.delta_max : std::max(hi, rep.delta_max);
    first = false;
  }
  out << "simulated delta range: [" << lo << ", " << hi << "]\n";
  return out.str();
}

std::string StudyReport::to_json() const {
  nlohmann::ordered_json doc;
  doc["config"] = {{"n", config.n},
                   {"x_mean", config.x_mean},
                   {"x_var", config.x_var},
                   {"beta_in", config.beta_in},
                   {"beta_out", config.beta_out},
                   {"replications", config.replications},
                   {"seed", config.seed},
                   {"iterations", config.iterations},
                   {"burn_in", config.burn_in},
                   {"level", config.level}};
  doc["coverage"] = nlohmann::ordered_json::array();
  for (const auto& row : coverage()) {
    doc["coverage"].push_back({{"coefficient", row.coefficient},
                               {"covered", row.covered},
                               {"oracle_covered", row.oracle_covered},
                               {"runs", row.runs}});
  }
  doc["replications"] = nlohmann::ordered_json::array();
  for (const auto& rep : replications) {
    nlohmann::ordered_json r{{"replication", rep.replication}, {"seed", rep.seed}, {"failed", rep.failed}};
    if (rep.failed) {
      r["error"] = rep.error;
    }
    for (const auto& iv : rep.intervals) {
      r["intervals"].push_back({{"coefficient", iv.coefficient},
                                {"truth", iv.truth},
                                {"estimate", iv.estimate},
                                {"se", iv.se},
                                {"lower", iv.lower},
                                {"upper", iv.upper},
                                {"covered", iv.covered}});
    }
    doc["replications"].push_back(std::move(r));
  }
  return doc.dump(2) + "\n";
}

std::string StudyReport::intervals_csv() const {
  std::ostringstream out;
  out << "replication,source,coefficient,truth,estimate,se,lower,upper,covered\n";
  for (const auto& rep : replications) {
    for (const auto* list : {&rep.intervals, &rep.oracle_intervals}) {
      const char* source = list == &rep.intervals ? "sem" : "oracle";
      for (const auto& iv : *list) {
        out << rep.replication << ',' << source << ',' << iv.coefficient << ',' << csv::format_double(iv.truth)
            << ',' << csv::format_double(iv.estimate) << ',' << csv::format_double(iv.se) << ','
            << csv::format_double(iv.lower) << ',' << csv::format_double(iv.upper) << ','
            << (iv.covered ? 1 : 0) << '\n';
      }
    }
  }
  return out.str();
}

SpatioTemporalData generate_spatiotemporal(const SpatioTemporalConfig& config) {
  if (config.districts < 6 || config.days < 11) {
    throw ConfigError("synthetic panel needs at least 6 districts and 11 days");
  }
  config.kernel.validate();
  RandomStream rng(config.seed, kSpatioTemporalStream);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);

  SpatioTemporalData data;
  data.window = {config.first_day, config.first_day + config.days - 1};
  data.beta_in = config.beta_in;
  data.beta_out = config.beta_out;
  data.coefficient_names.push_back("Intercept");
  data.coefficient_names.insert(data.coefficient_names.end(), kWeekdayCovariates.begin(), kWeekdayCovariates.end());
  data.coefficient_names.insert(data.coefficient_names.end(), kRateCovariates.begin(), kRateCovariates.end());
  if (config.beta_in.size() != data.coefficient_names.size() || config.beta_out.size() != data.coefficient_names.size()) {
    throw ConfigError("synthetic panel coefficient vectors must have 10 entries");
  }

  const int D = config.districts;
  const int T = config.days;
  const std::array<double, 3> base_rate{150.0, 90.0, 60.0};
  const std::array<std::pair<double, double>, 3> population_range{{{50e3, 300e3}, {30e3, 150e3}, {8e3, 40e3}}};

  // Time effects, centered over window days.
  auto centered = [](std::vector<double> v) {
    double mean = 0.0;
    for (double x : v) mean += x;
    mean /= static_cast<double>(v.size());
    for (double& x : v) x -= mean;
    return v;
  };
  std::vector<double> s_in(static_cast<std::size_t>(T));
  std::vector<double> s_out(static_cast<std::size_t>(T));
  for (int t = 0; t < T; ++t) {
    const double u = static_cast<double>(t) / (T - 1);
    s_in[t] = config.time_trend_in * (2.0 * u - 1.0) +
              config.time_wave_in * std::sin(2.0 * std::numbers::pi * t / config.time_period_in);
    s_out[t] = config.time_trend_out * (2.0 * u - 1.0) +
               config.time_wave_out * std::cos(2.0 * std::numbers::pi * t / config.time_period_in);
  }
  data.time_effect_in = centered(s_in);
  data.time_effect_out = centered(s_out);

  struct District {
    std::string id;
    double lon;
    double lat;
  };
  std::vector<District> districts;
  std::vector<double> h_in;
  std::vector<double> h_out;
  for (int d = 0; d < D; ++d) {
    char id[16];
    std::snprintf(id, sizeof(id), "D%03d", d);
    District dist{id, 6.0 + 9.0 * unit(rng), 47.5 + 7.5 * unit(rng)};
    const double zi = std::pow((dist.lon - 12.0) / 1.5, 2) + std::pow((dist.lat - 51.0) / 1.2, 2);
    const double zo = std::pow((dist.lon - 8.5) / 1.8, 2) + std::pow((dist.lat - 53.0) / 1.5, 2);
    h_in.push_back(config.bump_in * std::exp(-0.5 * zi));
    h_out.push_back(config.bump_out * std::exp(-0.5 * zo));
    data.geo.push_back({dist.id, dist.lon, dist.lat});
    districts.push_back(std::move(dist));
  }
  h_in = centered(h_in);
  h_out = centered(h_out);

  const DayIndex infection_first = config.first_day - kRateWindowDays;
  for (int d = 0; d < D; ++d) {
    const auto& dist = districts[static_cast<std::size_t>(d)];
    // Infection series per age group: district level, district-specific growth
    // and day-to-day noise.
    std::array<std::vector<RawInfectionRecord>, 3> series;
    for (std::size_t g = 0; g < 3; ++g) {
      const auto [pop_lo, pop_hi] = population_range[g];
      const auto population = static_cast<long long>(pop_lo + (pop_hi - pop_lo) * unit(rng));
      const double level = 0.35 * gauss(rng);
      const double growth = 0.01 + 0.04 * unit(rng);
      for (DayIndex day = infection_first; day <= data.window.last; ++day) {
        const double rate = base_rate[g] * std::exp(level + growth * (day - infection_first) + 0.15 * gauss(rng));
        const long long cases = draw_poisson(rng, static_cast<double>(population) * rate / 1e5);
        RawInfectionRecord rec{dist.id, day, kAgeGroups[g], cases, population};
        series[g].push_back(rec);
        data.infections.push_back(rec);
      }
    }

    int occupancy = config.initial_occupancy + static_cast<int>(10.0 * unit(rng));
    data.occupancy.push_back({dist.id, config.first_day - 1, occupancy});
    std::vector<int> arrivals;
    for (int t = 0; t < T; ++t) {
      const DayIndex day = config.first_day + t;
      std::vector<double> x{1.0};
      const auto dummies = weekday_dummies(day);
      x.insert(x.end(), dummies.begin(), dummies.end());
      for (std::size_t g = 0; g < 3; ++g) {
        const auto offset = static_cast<std::size_t>(day - infection_first);
        const std::vector<RawInfectionRecord> window(series[g].begin() + static_cast<std::ptrdiff_t>(offset - kRateWindowDays),
                                                     series[g].begin() + static_cast<std::ptrdiff_t>(offset));
        x.push_back(std::log(average_rate_per_100k(window) + PipelineOptions{}.rate_guard));
      }
      double eta_in = data.time_effect_in[static_cast<std::size_t>(t)] +
                      h_in[static_cast<std::size_t>(d)];
      double eta_out = data.time_effect_out[static_cast<std::size_t>(t)] + h_out[static_cast<std::size_t>(d)];
      for (std::size_t j = 0; j < x.size(); ++j) {
        eta_in += config.beta_in[j] * x[j];
        eta_out += config.beta_out[j] * x[j];
      }
      const int in = draw_poisson(rng, std::exp(eta_in));
      arrivals.push_back(in);
      double weighted = 0.0;
      for (std::size_t lag = 0; lag < config.kernel.weights.size() && lag <= static_cast<std::size_t>(t); ++lag) {
        weighted += config.kernel.weights[lag] * arrivals[static_cast<std::size_t>(t) - lag];
      }
      const int out = draw_poisson(rng, std::exp(eta_out + std::log(weighted + 0.1)));
      occupancy += in - out;
      if (occupancy < 0) {
        throw NumericalError("synthetic occupancy became negative in district " + dist.id);
      }
      data.occupancy.push_back({dist.id, day, occupancy});
      data.true_arrivals.push_back(in);
      data.true_departures.push_back(out);
    }
  }
  return data;
}

void write_spatiotemporal(const std::string& dir, const SpatioTemporalData& data, const WeightKernel& kernel) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  write_occupancy((fs::path(dir) / "occupancy.csv").string(), data.occupancy);
  write_infections((fs::path(dir) / "infections.csv").string(), data.infections);
  write_geo((fs::path(dir) / "geo.csv").string(), data.geo);
  kernel.save((fs::path(dir) / "kernel.csv").string());

  nlohmann::ordered_json truth;
  truth["window"] = {{"start", format_iso_date(data.window.first)}, {"end", format_iso_date(data.window.last)}};
  truth["coefficients"] = data.coefficient_names;
  truth["beta_in"] = data.beta_in;
  truth["beta_out"] = data.beta_out;
  std::vector<std::string> days;
  for (DayIndex d = data.window.first; d <= data.window.last; ++d) {
    days.push_back(format_iso_date(d));
  }
  truth["days"] = days;
  truth["time_effect_in"] = data.time_effect_in;
  truth["time_effect_out"] = data.time_effect_out;
  std::ofstream out(fs::path(dir) / "truth.json");
  if (!out) {
    throw DataError("cannot write truth.json in " + dir);
  }
  out << truth.dump(2) << '\n';
}

}  // namespace disentangle
