#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "disentangle/data_pipeline.hpp"
#include "disentangle/panel.hpp"
#include "disentangle/sem_engine.hpp"

namespace disentangle {

/// Single-covariate arrival/departure study.
struct SimConfig {
  int n = 1000;
  double x_mean = 1.978;
  double x_var = 1.397;
  std::array<double, 2> beta_in{-2.340, 0.8};
  std::array<double, 2> beta_out{0.001, 0.1};
  int replications = 20;
  std::uint64_t seed = 12;
  int iterations = 500;
  int burn_in = 200;
  double level = 0.95;
  int threads = 1;
  /// Also fit both models directly on the true latent counts.
  bool oracle = true;

  void validate() const;
};

struct SimulatedPanel {
  Panel panel;
  std::vector<double> x;
  std::vector<int> true_arrivals;
  std::vector<int> true_departures;
  /// Arrivals on the dropped lead-in row; the true lag for the first row.
  int lead_arrivals = 0;
};

/// x ~ N(x_mean, x_var) for n+1 rows, I ~ Pois(exp(b_in0 + b_in1 x)),
/// R_t ~ Pois(exp(b_out0 + b_out1 x_t + log(I_{t-1} + 0.1))) for the last n
/// rows, delta = I - R.
SimulatedPanel generate(const SimConfig& config, std::uint64_t seed);

/// Intercept + x models; the outgoing model uses the lag-1 arrival offset.
SemConfig simulation_sem_config(const SimConfig& config, std::uint64_t seed);

struct IntervalRecord {
  std::string coefficient;  // e.g. "incoming:Intercept"
  double truth = 0.0;
  double estimate = 0.0;
  double se = 0.0;
  double lower = 0.0;
  double upper = 0.0;
  bool covered = false;
};

struct ReplicationResult {
  int replication = 0;  // 1-based
  std::uint64_t seed = 0;
  bool failed = false;
  std::string error;
  std::vector<IntervalRecord> intervals;
  std::vector<IntervalRecord> oracle_intervals;
  std::vector<double> complete_log_likelihood;
  int delta_min = 0;
  int delta_max = 0;
};

struct CoverageRow {
  std::string coefficient;
  int covered = 0;
  int oracle_covered = 0;
  int runs = 0;
};

struct StudyReport {
  SimConfig config;
  std::vector<ReplicationResult> replications;

  std::vector<CoverageRow> coverage() const;
  std::string render_text() const;
  std::string to_json() const;
  /// replication,source,coefficient,truth,estimate,se,lower,upper,covered
  std::string intervals_csv() const;
};

std::uint64_t replication_seed(std::uint64_t master, int replication);

ReplicationResult run_replication(const SimConfig& config, int replication);
StudyReport run_study(const SimConfig& config);

/// Wald interval from an estimate and its variance.
IntervalRecord wald_interval(std::string coefficient, double truth, double estimate, double variance,
                             double level);
double normal_quantile(double p);

/// Spatio-temporal synthetic panel with known linear effects, linear plus
/// sinusoidal time effects and a Gaussian-bump spatial effect, written as the
/// three raw input files.
struct SpatioTemporalConfig {
  int districts = 40;
  DayIndex first_day = 18902;  // 2021-10-02
  int days = 47;
  std::uint64_t seed = 4711;
  int initial_occupancy = 25;
  WeightKernel kernel = WeightKernel::placeholder();
  /// Order: Intercept, Monday..Thursday, Saturday, Sunday, log rates.
  std::vector<double> beta_in{-1.9, 0.12, 0.14, 0.13, 0.14, -0.02, -0.14, 0.24, 0.07, 0.11};
  std::vector<double> beta_out{-1.2, -0.21, 0.03, 0.02, -0.10, -0.09, -0.39, 0.10, 0.05, 0.04};
  double time_trend_in = 0.35;
  double time_wave_in = 0.15;
  double time_period_in = 14.0;
  double time_trend_out = -0.35;
  double time_wave_out = 0.0;
  double bump_in = 0.5;
  double bump_out = 0.3;
};

struct SpatioTemporalData {
  std::vector<RawOccupancyRecord> occupancy;
  std::vector<RawInfectionRecord> infections;
  std::vector<DistrictGeo> geo;
  DateWindow window;
  std::vector<std::string> coefficient_names;
  std::vector<double> beta_in;
  std::vector<double> beta_out;
  /// Centered generating time effects on window days first..last.
  std::vector<double> time_effect_in;
  std::vector<double> time_effect_out;
  std::vector<int> true_arrivals;  // in panel order
  std::vector<int> true_departures;
};

SpatioTemporalData generate_spatiotemporal(const SpatioTemporalConfig& config);

/// Writes occupancy.csv, infections.csv, geo.csv, kernel.csv and truth.json
/// into dir.
void write_spatiotemporal(const std::string& dir, const SpatioTemporalData& data, const WeightKernel& kernel);

}  // namespace disentangle
