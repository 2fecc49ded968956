#include "disentangle/data_pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <tuple>

#include "disentangle/csv.hpp"
#include "disentangle/errors.hpp"

namespace disentangle {

namespace {

std::string join(const std::set<std::string>& items) {
  std::string out;
  for (const auto& s : items) {
    if (!out.empty()) {
      out += ", ";
    }
    out += s;
  }
  return out;
}

std::ofstream open_for_write(const std::string& path) {
  std::ofstream out(path);
  if (!out) {
    throw DataError("cannot write file: " + path);
  }
  return out;
}

}  // namespace

std::vector<RawOccupancyRecord> read_occupancy(const std::string& path) {
  const auto table = csv::read_file(path);
  const auto c_id = table.column("district_id");
  const auto c_date = table.column("date");
  const auto c_beds = table.column("covid_beds");
  std::vector<RawOccupancyRecord> records;
  records.reserve(table.rows.size());
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& row = table.rows[r];
    const auto beds = csv::to_integer(row[c_beds], "covid_beds");
    if (beds < 0) {
      throw DataError(path + ":" + std::to_string(table.line_numbers[r]) + ": negative covid_beds");
    }
    records.push_back({row[c_id], parse_iso_date(row[c_date]), static_cast<int>(beds)});
  }
  return records;
}

std::vector<RawInfectionRecord> read_infections(const std::string& path) {
  const auto table = csv::read_file(path);
  const auto c_id = table.column("district_id");
  const auto c_date = table.column("date");
  const auto c_age = table.column("age_group");
  const auto c_cases = table.column("cases");
  const auto c_pop = table.column("population");
  std::vector<RawInfectionRecord> records;
  records.reserve(table.rows.size());
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& row = table.rows[r];
    RawInfectionRecord rec{row[c_id], parse_iso_date(row[c_date]), row[c_age],
                           csv::to_integer(row[c_cases], "cases"),
                           csv::to_integer(row[c_pop], "population")};
    const std::string where = path + ":" + std::to_string(table.line_numbers[r]);
    if (rec.cases < 0) {
      throw DataError(where + ": negative cases");
    }
    if (rec.population <= 0) {
      throw DataError(where + ": population must be positive");
    }
    records.push_back(std::move(rec));
  }
  return records;
}

std::vector<DistrictGeo> read_geo(const std::string& path) {
  const auto table = csv::read_file(path);
  const auto c_id = table.column("district_id");
  const auto c_lon = table.column("longitude");
  const auto c_lat = table.column("latitude");
  std::vector<DistrictGeo> records;
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& row = table.rows[r];
    DistrictGeo geo{row[c_id], csv::to_double(row[c_lon], "longitude"),
                    csv::to_double(row[c_lat], "latitude")};
    if (geo.longitude < -180.0 || geo.longitude > 180.0 || geo.latitude < -90.0 || geo.latitude > 90.0) {
      throw DataError(path + ":" + std::to_string(table.line_numbers[r]) +
                      ": coordinates out of range for district " + geo.district_id);
    }
    records.push_back(std::move(geo));
  }
  return records;
}

void write_occupancy(const std::string& path, const std::vector<RawOccupancyRecord>& records) {
  auto out = open_for_write(path);
  out << "district_id,date,covid_beds\n";
  for (const auto& r : records) {
    out << r.district_id << ',' << format_iso_date(r.date) << ',' << r.covid_beds << '\n';
  }
}

void write_infections(const std::string& path, const std::vector<RawInfectionRecord>& records) {
  auto out = open_for_write(path);
  out << "district_id,date,age_group,cases,population\n";
  for (const auto& r : records) {
    out << r.district_id << ',' << format_iso_date(r.date) << ',' << r.age_group << ',' << r.cases
        << ',' << r.population << '\n';
  }
}

void write_geo(const std::string& path, const std::vector<DistrictGeo>& records) {
  auto out = open_for_write(path);
  out << "district_id,longitude,latitude\n";
  for (const auto& r : records) {
    out << r.district_id << ',' << csv::format_double(r.longitude) << ','
        << csv::format_double(r.latitude) << '\n';
  }
}

double average_rate_per_100k(const std::vector<RawInfectionRecord>& days) {
  if (days.empty()) {
    throw DomainError("average_rate_per_100k: no days to average");
  }
  double sum = 0.0;
  for (const auto& d : days) {
    sum += static_cast<double>(d.cases) * 1e5 / static_cast<double>(d.population);
  }
  return sum / static_cast<double>(days.size());
}

std::array<double, 6> weekday_dummies(DayIndex day) {
  // c_encoding: 0 Sunday .. 6 Saturday; Friday (5) maps to the reference.
  std::array<double, 6> dummies{};
  switch (weekday_of(day)) {
    case 1: dummies[0] = 1.0; break;
    case 2: dummies[1] = 1.0; break;
    case 3: dummies[2] = 1.0; break;
    case 4: dummies[3] = 1.0; break;
    case 6: dummies[4] = 1.0; break;
    case 0: dummies[5] = 1.0; break;
    default: break;
  }
  return dummies;
}

LoadResult build_panel(const std::vector<RawOccupancyRecord>& occupancy,
                       const std::vector<RawInfectionRecord>& infections,
                       const std::vector<DistrictGeo>& geo, DateWindow window,
                       const PipelineOptions& options) {
  if (window.last < window.first) {
    throw DataError("analysis window ends before it starts");
  }
  LoadResult result;

  std::map<std::string, std::map<DayIndex, int>> beds;
  for (const auto& rec : occupancy) {
    auto [it, inserted] = beds[rec.district_id].emplace(rec.date, rec.covid_beds);
    if (!inserted) {
      throw DataError("duplicate occupancy record for district " + rec.district_id + " on " +
                      format_iso_date(rec.date));
    }
  }

  std::map<std::string, const DistrictGeo*> coords;
  for (const auto& g : geo) {
    coords[g.district_id] = &g;
  }
  std::set<std::string> missing_geo;
  for (const auto& [id, _] : beds) {
    if (!coords.contains(id)) {
      missing_geo.insert(id);
    }
  }
  if (!missing_geo.empty()) {
    throw DataError("districts without coordinates in geo file: " + join(missing_geo));
  }

  std::map<std::tuple<std::string, std::string, DayIndex>, const RawInfectionRecord*> cases;
  std::set<std::string> unknown;
  for (const auto& rec : infections) {
    if (!beds.contains(rec.district_id)) {
      unknown.insert(rec.district_id);
      continue;
    }
    if (std::find(kAgeGroups.begin(), kAgeGroups.end(), rec.age_group) == kAgeGroups.end()) {
      continue;
    }
    cases[{rec.district_id, rec.age_group, rec.date}] = &rec;
  }
  if (!unknown.empty()) {
    throw DataError("infection records for unknown districts: " + join(unknown));
  }

  Panel& panel = result.panel;
  panel.covariate_names.assign(kWeekdayCovariates.begin(), kWeekdayCovariates.end());
  panel.covariate_names.insert(panel.covariate_names.end(), kRateCovariates.begin(), kRateCovariates.end());
  panel.rate_names.assign(kAgeGroups.begin(), kAgeGroups.end());

  for (const auto& [id, series] : beds) {
    const DistrictGeo& g = *coords.at(id);
    for (DayIndex day = window.first; day <= window.last; ++day) {
      const auto today = series.find(day);
      const auto yesterday = series.find(day - 1);
      if (today == series.end() || yesterday == series.end()) {
        result.warnings.push_back("district " + id + " " + format_iso_date(day) +
                                  ": occupancy missing for the day or the day before; observation dropped");
        continue;
      }
      PanelObservation obs;
      obs.district_id = id;
      obs.day = day;
      obs.occupancy = today->second;
      obs.delta = today->second - yesterday->second;
      obs.longitude = g.longitude;
      obs.latitude = g.latitude;
      const auto dummies = weekday_dummies(day);
      obs.covariates.assign(dummies.begin(), dummies.end());
      for (const auto& group : kAgeGroups) {
        std::vector<RawInfectionRecord> days;
        for (DayIndex lag = 1; lag <= kRateWindowDays; ++lag) {
          const auto it = cases.find({id, group, day - lag});
          if (it == cases.end()) {
            throw DataError("district " + id + " age group " + group + ": no infection record on " +
                            format_iso_date(day - lag) + " (needed for " + format_iso_date(day) + ")");
          }
          days.push_back(*it->second);
        }
        const double rate = average_rate_per_100k(days);
        obs.infection_rates.push_back(rate);
        obs.covariates.push_back(std::log(rate + options.rate_guard));
      }
      panel.observations.push_back(std::move(obs));
    }
  }
  if (panel.empty()) {
    throw DataError("no complete observations inside the analysis window");
  }
  panel.sort();
  return result;
}

LoadResult load_panel(const std::string& occupancy_path, const std::string& infection_path,
                      const std::string& geo_path, DateWindow window, const PipelineOptions& options) {
  return build_panel(read_occupancy(occupancy_path), read_infections(infection_path),
                     read_geo(geo_path), window, options);
}

bool ValidationReport::all_passed() const {
  return std::all_of(checks.begin(), checks.end(), [](const auto& c) { return c.passed; });
}

std::string ValidationReport::render() const {
  std::ostringstream out;
  for (const auto& c : checks) {
    out << (c.passed ? "PASS " : "WARN ") << c.name << ": " << c.detail << '\n';
  }
  for (const auto& w : warnings) {
    out << "  - " << w << '\n';
  }
  return out.str();
}

ValidationReport validate_panel(const Panel& panel, const ValidationOptions& options) {
  ValidationReport report;
  if (panel.empty()) {
    report.checks.push_back({"non-empty", false, "panel has no observations"});
    return report;
  }

  report.observed_delta_min = panel[0].delta;
  report.observed_delta_max = panel[0].delta;
  std::map<std::string, std::vector<DayIndex>> days_by_district;
  std::set<std::pair<std::string, DayIndex>> seen;
  for (const auto& obs : panel.observations) {
    report.observed_delta_min = std::min(report.observed_delta_min, obs.delta);
    report.observed_delta_max = std::max(report.observed_delta_max, obs.delta);
    if (obs.delta < options.delta_min || obs.delta > options.delta_max) {
      ++report.implausible_deltas;
      report.warnings.push_back("district " + obs.district_id + " " + format_iso_date(obs.day) +
                                ": delta " + std::to_string(obs.delta) + " outside plausibility band");
    }
    if (!seen.emplace(obs.district_id, obs.day).second) {
      ++report.duplicate_keys;
      report.warnings.push_back("duplicate key: district " + obs.district_id + " " +
                                format_iso_date(obs.day));
    } else {
      days_by_district[obs.district_id].push_back(obs.day);
    }
    for (std::size_t g = 0; g < obs.infection_rates.size(); ++g) {
      if (obs.infection_rates[g] == 0.0) {
        ++report.zero_rate_cells;
      }
    }
  }
  for (auto& [id, days] : days_by_district) {
    std::sort(days.begin(), days.end());
    for (std::size_t i = 1; i < days.size(); ++i) {
      const int gap = days[i] - days[i - 1] - 1;
      if (gap > 0) {
        report.missing_days += gap;
        report.warnings.push_back("district " + id + ": " + std::to_string(gap) +
                                  " missing day(s) before " + format_iso_date(days[i]));
      }
    }
  }

  std::ostringstream range;
  range << "observed [" << report.observed_delta_min << ", " << report.observed_delta_max
        << "], band [" << options.delta_min << ", " << options.delta_max << "], "
        << report.implausible_deltas << " outside";
  report.checks.push_back({"delta range", report.implausible_deltas == 0, range.str()});
  report.checks.push_back({"missing days", report.missing_days == 0,
                           std::to_string(report.missing_days) + " missing district-days"});
  report.checks.push_back({"zero-rate cells", report.zero_rate_cells == 0,
                           std::to_string(report.zero_rate_cells) + " zero infection-rate cells"});
  report.checks.push_back({"duplicate keys", report.duplicate_keys == 0,
                           std::to_string(report.duplicate_keys) + " duplicated (district, date) keys"});
  return report;
}

}  // namespace disentangle
