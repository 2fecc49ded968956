#pragma once

#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

namespace disentangle {

/// Days since 1970-01-01.
using DayIndex = int;

DayIndex parse_iso_date(std::string_view text);
std::string format_iso_date(DayIndex day);
/// 0 = Sunday ... 6 = Saturday.
int weekday_of(DayIndex day);

/// One (district, day) record of the occupancy panel.
struct PanelObservation {
  std::string district_id;
  DayIndex day = 0;
  int occupancy = 0;
  /// occupancy(day) - occupancy(day - 1)
  int delta = 0;
  /// Aligned with Panel::covariate_names.
  std::vector<double> covariates;
  /// Raw 7-day average rates per 100k, aligned with Panel::rate_names. May be
  /// empty for panels that do not come from infection data.
  std::vector<double> infection_rates;
  double longitude = 0.0;
  double latitude = 0.0;

  int previous_occupancy() const { return occupancy - delta; }
  bool operator==(const PanelObservation&) const = default;
};

/// Observations sorted by (district_id, day).
struct Panel {
  std::vector<std::string> covariate_names;
  std::vector<std::string> rate_names;
  std::vector<PanelObservation> observations;

  std::size_t size() const { return observations.size(); }
  bool empty() const { return observations.empty(); }
  const PanelObservation& operator[](std::size_t i) const { return observations[i]; }
  /// Index of a covariate by name; throws DomainError when absent.
  std::size_t covariate_index(std::string_view name) const;
  void sort();

  bool operator==(const Panel&) const = default;
};

/// Panel file: one CSV row per observation with every field, doubles written
/// with round-trip precision.
void write_panel(std::ostream& out, const Panel& panel);
Panel read_panel(std::istream& in);

}  // namespace disentangle
