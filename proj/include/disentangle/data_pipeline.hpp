#pragma once

#include <array>
#include <string>
#include <vector>

#include "disentangle/panel.hpp"

namespace disentangle {

struct RawOccupancyRecord {
  std::string district_id;
  DayIndex date = 0;
  int covid_beds = 0;
};

struct RawInfectionRecord {
  std::string district_id;
  DayIndex date = 0;
  std::string age_group;
  long long cases = 0;
  long long population = 0;
};

struct DistrictGeo {
  std::string district_id;
  double longitude = 0.0;
  double latitude = 0.0;
};

/// Age groups entering the intensity models, in covariate order.
inline const std::array<std::string, 3> kAgeGroups{"35-59", "60-79", "80+"};
inline const std::array<std::string, 3> kRateCovariates{"log_rate_35_59", "log_rate_60_79",
                                                        "log_rate_80plus"};
/// Weekday dummies; Friday is the reference category.
inline const std::array<std::string, 6> kWeekdayCovariates{"Monday",   "Tuesday",  "Wednesday",
                                                           "Thursday", "Saturday", "Sunday"};
inline constexpr int kRateWindowDays = 7;

struct DateWindow {
  DayIndex first = 0;
  DayIndex last = 0;
};

struct PipelineOptions {
  /// Added to the per-100k rate before taking the log.
  double rate_guard = 0.5;
};

struct LoadResult {
  Panel panel;
  std::vector<std::string> warnings;
};

std::vector<RawOccupancyRecord> read_occupancy(const std::string& path);
std::vector<RawInfectionRecord> read_infections(const std::string& path);
std::vector<DistrictGeo> read_geo(const std::string& path);

void write_occupancy(const std::string& path, const std::vector<RawOccupancyRecord>& records);
void write_infections(const std::string& path, const std::vector<RawInfectionRecord>& records);
void write_geo(const std::string& path, const std::vector<DistrictGeo>& records);

/// Mean over the given daily records of cases * 1e5 / population.
double average_rate_per_100k(const std::vector<RawInfectionRecord>& days);

/// Dummy vector (Monday..Thursday, Saturday, Sunday) for a day.
std::array<double, 6> weekday_dummies(DayIndex day);

LoadResult build_panel(const std::vector<RawOccupancyRecord>& occupancy,
                       const std::vector<RawInfectionRecord>& infections,
                       const std::vector<DistrictGeo>& geo, DateWindow window,
                       const PipelineOptions& options = {});

LoadResult load_panel(const std::string& occupancy_path, const std::string& infection_path,
                      const std::string& geo_path, DateWindow window,
                      const PipelineOptions& options = {});

struct ValidationOptions {
  int delta_min = -24;
  int delta_max = 20;
};

struct ValidationCheck {
  std::string name;
  bool passed = true;
  std::string detail;
};

struct ValidationReport {
  std::vector<ValidationCheck> checks;
  std::vector<std::string> warnings;
  int observed_delta_min = 0;
  int observed_delta_max = 0;
  int missing_days = 0;
  int zero_rate_cells = 0;
  int duplicate_keys = 0;
  int implausible_deltas = 0;

  bool all_passed() const;
  std::string render() const;
};

ValidationReport validate_panel(const Panel& panel, const ValidationOptions& options = {});

}  // namespace disentangle
