#include "disentangle/panel.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <istream>
#include <ostream>
#include <tuple>

#include "disentangle/csv.hpp"
#include "disentangle/errors.hpp"

namespace disentangle {

DayIndex parse_iso_date(std::string_view text) {
  using namespace std::chrono;
  if (text.size() != 10 || text[4] != '-' || text[7] != '-') {
    throw DataError("invalid ISO-8601 date '" + std::string(text) + "'");
  }
  const auto y = csv::to_integer(text.substr(0, 4), "year");
  const auto m = csv::to_integer(text.substr(5, 2), "month");
  const auto d = csv::to_integer(text.substr(8, 2), "day");
  const year_month_day ymd{year{static_cast<int>(y)}, month{static_cast<unsigned>(m)},
                           day{static_cast<unsigned>(d)}};
  if (!ymd.ok()) {
    throw DataError("invalid calendar date '" + std::string(text) + "'");
  }
  return static_cast<DayIndex>(sys_days{ymd}.time_since_epoch().count());
}

std::string format_iso_date(DayIndex day) {
  using namespace std::chrono;
  const year_month_day ymd{sys_days{days{day}}};
  char buffer[16];
  std::snprintf(buffer, sizeof(buffer), "%04d-%02u-%02u", static_cast<int>(ymd.year()),
                static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()));
  return buffer;
}

int weekday_of(DayIndex day) {
  using namespace std::chrono;
  return static_cast<int>(weekday{sys_days{days{day}}}.c_encoding());
}

std::size_t Panel::covariate_index(std::string_view name) const {
  const auto it = std::find(covariate_names.begin(), covariate_names.end(), name);
  if (it == covariate_names.end()) {
    throw DomainError("panel has no covariate named '" + std::string(name) + "'");
  }
  return static_cast<std::size_t>(it - covariate_names.begin());
}

void Panel::sort() {
  std::stable_sort(observations.begin(), observations.end(), [](const auto& a, const auto& b) {
    return std::tie(a.district_id, a.day) < std::tie(b.district_id, b.day);
  });
}

void write_panel(std::ostream& out, const Panel& panel) {
  out << "district_id,date,occupancy,delta,longitude,latitude";
  for (const auto& name : panel.covariate_names) {
    out << ",cov:" << name;
  }
  for (const auto& name : panel.rate_names) {
    out << ",rate:" << name;
  }
  out << '\n';
  for (const auto& obs : panel.observations) {
    out << obs.district_id << ',' << format_iso_date(obs.day) << ',' << obs.occupancy << ','
        << obs.delta << ',' << csv::format_double(obs.longitude) << ','
        << csv::format_double(obs.latitude);
    for (double v : obs.covariates) {
      out << ',' << csv::format_double(v);
    }
    for (double v : obs.infection_rates) {
      out << ',' << csv::format_double(v);
    }
    out << '\n';
  }
}

Panel read_panel(std::istream& in) {
  const csv::Table table = csv::read(in, "panel");
  Panel panel;
  std::vector<std::size_t> cov_cols;
  std::vector<std::size_t> rate_cols;
  for (std::size_t c = 0; c < table.header.size(); ++c) {
    const auto& h = table.header[c];
    if (h.rfind("cov:", 0) == 0) {
      panel.covariate_names.push_back(h.substr(4));
      cov_cols.push_back(c);
    } else if (h.rfind("rate:", 0) == 0) {
      panel.rate_names.push_back(h.substr(5));
      rate_cols.push_back(c);
    }
  }
  const auto c_id = table.column("district_id");
  const auto c_date = table.column("date");
  const auto c_occ = table.column("occupancy");
  const auto c_delta = table.column("delta");
  const auto c_lon = table.column("longitude");
  const auto c_lat = table.column("latitude");
  for (const auto& row : table.rows) {
    PanelObservation obs;
    obs.district_id = row[c_id];
    obs.day = parse_iso_date(row[c_date]);
    obs.occupancy = static_cast<int>(csv::to_integer(row[c_occ], "occupancy"));
    obs.delta = static_cast<int>(csv::to_integer(row[c_delta], "delta"));
    obs.longitude = csv::to_double(row[c_lon], "longitude");
    obs.latitude = csv::to_double(row[c_lat], "latitude");
    for (auto c : cov_cols) {
      obs.covariates.push_back(csv::to_double(row[c], table.header[c]));
    }
    for (auto c : rate_cols) {
      obs.infection_rates.push_back(csv::to_double(row[c], table.header[c]));
    }
    panel.observations.push_back(std::move(obs));
  }
  return panel;
}

}  // namespace disentangle
