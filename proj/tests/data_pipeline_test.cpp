#include "disentangle/data_pipeline.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "disentangle/csv.hpp"
#include "disentangle/errors.hpp"
#include "disentangle/panel.hpp"

namespace disentangle {
namespace {

namespace fs = std::filesystem;

const DayIndex kFirst = parse_iso_date("2021-10-02");  // a Saturday

struct Fixture {
  std::vector<RawOccupancyRecord> occupancy;
  std::vector<RawInfectionRecord> infections;
  std::vector<DistrictGeo> geo;
  DateWindow window{kFirst, kFirst + 9};
};

// Two districts, ten window days, constant 70 cases per day per age group
// on a population of 100000.
Fixture make_fixture() {
  Fixture f;
  const std::array<std::string, 2> ids{"A", "B"};
  for (std::size_t d = 0; d < ids.size(); ++d) {
    f.geo.push_back({ids[d], 8.0 + d, 50.0 + d});
    int beds = 10 + static_cast<int>(d) * 5;
    for (DayIndex day = kFirst - 1; day <= f.window.last; ++day) {
      f.occupancy.push_back({ids[d], day, beds});
      beds += (day % 3) - 1;
    }
    for (DayIndex day = kFirst - kRateWindowDays; day <= f.window.last; ++day) {
      for (const auto& g : kAgeGroups) f.infections.push_back({ids[d], day, g, 70, 100000});
    }
  }
  return f;
}

fs::path scratch_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("disentangle_test_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

TEST(CsvTest, split_and_numbers)
{
  EXPECT_EQ((std::vector<std::string>{"a", "b c", "", "d"}), csv::split(" a , b c ,, d "));
  EXPECT_DOUBLE_EQ(2.5, csv::to_double("2.5", "x"));
  EXPECT_EQ(-12, csv::to_integer("-12", "x"));
  EXPECT_THROW(csv::to_double("2,5", "x"), DataError);
  EXPECT_THROW(csv::to_integer("1.5", "x"), DataError);
  for (double v : {0.1, 1.0 / 3.0, -2.3400000000000001e-7, 1e300}) {
    EXPECT_EQ(v, csv::to_double(csv::format_double(v), "x"));
  }
}

TEST(CsvTest, read_skips_comments_and_checks_width)
{
  std::istringstream good("# comment\na,b\n1,2\n\n3,4\n");
  const auto t = csv::read(good, "mem");
  EXPECT_EQ(2u, t.rows.size());
  EXPECT_EQ(5, t.line_numbers[1]);
  EXPECT_EQ(1u, t.column("b"));
  EXPECT_THROW(t.column("c"), DataError);
  std::istringstream bad("a,b\n1,2,3\n");
  EXPECT_THROW(csv::read(bad, "mem"), DataError);
}

TEST(DateTest, round_trip_and_weekday)
{
  EXPECT_EQ(18902, kFirst);
  EXPECT_EQ("2021-10-02", format_iso_date(kFirst));
  EXPECT_EQ(6, weekday_of(kFirst));
  EXPECT_EQ(5, weekday_of(parse_iso_date("2021-11-05")));
  EXPECT_THROW(parse_iso_date("2021-02-30"), DataError);
  EXPECT_THROW(parse_iso_date("02.10.2021"), DataError);
}

TEST(WeekdayDummiesTest, friday_reference)
{
  const auto sat = weekday_dummies(kFirst);
  EXPECT_EQ((std::array<double, 6>{0, 0, 0, 0, 1, 0}), sat);
  const auto fri = weekday_dummies(kFirst - 1);
  EXPECT_EQ((std::array<double, 6>{0, 0, 0, 0, 0, 0}), fri);
  const auto mon = weekday_dummies(kFirst + 2);
  EXPECT_EQ((std::array<double, 6>{1, 0, 0, 0, 0, 0}), mon);
}

TEST(RateTest, average_and_population_scaling)
{
  std::vector<RawInfectionRecord> days(7, RawInfectionRecord{"A", 0, "80+", 70, 100000});
  EXPECT_DOUBLE_EQ(70.0, average_rate_per_100k(days));
  for (auto& d : days) d.population *= 2;
  EXPECT_DOUBLE_EQ(35.0, average_rate_per_100k(days));
  days[0].cases = 0;
  EXPECT_DOUBLE_EQ(30.0, average_rate_per_100k(days));
  EXPECT_THROW(average_rate_per_100k({}), DomainError);
}

TEST(BuildPanelTest, deltas_rates_and_coordinates)
{
  const auto f = make_fixture();
  const auto res = build_panel(f.occupancy, f.infections, f.geo, f.window);
  EXPECT_TRUE(res.warnings.empty());
  ASSERT_EQ(20u, res.panel.size());
  const auto& first = res.panel[0];
  EXPECT_EQ("A", first.district_id);
  EXPECT_EQ(kFirst, first.day);
  EXPECT_DOUBLE_EQ(8.0, first.longitude);
  ASSERT_EQ(3u, first.infection_rates.size());
  EXPECT_DOUBLE_EQ(70.0, first.infection_rates[0]);
  EXPECT_DOUBLE_EQ(std::log(70.5), first.covariates[res.panel.covariate_index("log_rate_80plus")]);
  EXPECT_DOUBLE_EQ(1.0, first.covariates[res.panel.covariate_index("Saturday")]);
  EXPECT_THROW(res.panel.covariate_index("Friday"), DomainError);
}

TEST(BuildPanelTest, simple_delta)
{
  std::vector<RawOccupancyRecord> occ{{"X", kFirst - 1, 10}, {"X", kFirst, 13}};
  std::vector<RawInfectionRecord> inf;
  for (DayIndex d = kFirst - 7; d < kFirst; ++d) {
    for (const auto& g : kAgeGroups) inf.push_back({"X", d, g, 1, 1000});
  }
  const auto res = build_panel(occ, inf, {{"X", 10.0, 50.0}}, {kFirst, kFirst});
  ASSERT_EQ(1u, res.panel.size());
  EXPECT_EQ(3, res.panel[0].delta);
  EXPECT_EQ(10, res.panel[0].previous_occupancy());
}

TEST(BuildPanelTest, deltas_telescope)
{
  const auto f = make_fixture();
  const auto res = build_panel(f.occupancy, f.infections, f.geo, f.window);
  std::map<std::string, int> sums;
  for (const auto& o : res.panel.observations) sums[o.district_id] += o.delta;
  for (const auto& [id, sum] : sums) {
    int first = 0;
    int last = 0;
    for (const auto& r : f.occupancy) {
      if (r.district_id != id) continue;
      if (r.date == f.window.first - 1) first = r.covid_beds;
      if (r.date == f.window.last) last = r.covid_beds;
    }
    EXPECT_EQ(last - first, sum) << id;
  }
}

TEST(BuildPanelTest, gap_drops_observation_with_warning)
{
  auto f = make_fixture();
  std::erase_if(f.occupancy, [](const auto& r) { return r.district_id == "A" && r.date == kFirst + 4; });
  const auto res = build_panel(f.occupancy, f.infections, f.geo, f.window);
  EXPECT_EQ(18u, res.panel.size());
  EXPECT_EQ(2u, res.warnings.size());
  const auto report = validate_panel(res.panel);
  EXPECT_EQ(2, report.missing_days);
  EXPECT_FALSE(report.all_passed());
}

TEST(BuildPanelTest, data_errors)
{
  auto f = make_fixture();
  auto unknown = f.infections;
  unknown.push_back({"Z9", kFirst, "80+", 1, 100});
  unknown.push_back({"Q1", kFirst, "80+", 1, 100});
  try {
    build_panel(f.occupancy, unknown, f.geo, f.window);
    FAIL() << "expected DataError";
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("Q1, Z9"), std::string::npos) << e.what();
  }
  auto dup = f.occupancy;
  dup.push_back(dup.front());
  EXPECT_THROW(build_panel(dup, f.infections, f.geo, f.window), DataError);
  auto geo = f.geo;
  geo.pop_back();
  EXPECT_THROW(build_panel(f.occupancy, f.infections, geo, f.window), DataError);
  auto short_lead = f.infections;
  std::erase_if(short_lead, [](const auto& r) { return r.date == kFirst - 7; });
  EXPECT_THROW(build_panel(f.occupancy, short_lead, f.geo, f.window), DataError);
}

TEST(FileFormatTest, raw_files_round_trip)
{
  const auto dir = scratch_dir("raw");
  const auto f = make_fixture();
  write_occupancy((dir / "occ.csv").string(), f.occupancy);
  write_infections((dir / "inf.csv").string(), f.infections);
  write_geo((dir / "geo.csv").string(), f.geo);
  const auto res = load_panel((dir / "occ.csv").string(), (dir / "inf.csv").string(), (dir / "geo.csv").string(),
                              f.window);
  EXPECT_EQ(build_panel(f.occupancy, f.infections, f.geo, f.window).panel, res.panel);
  try {
    load_panel((dir / "occ.csv").string(), (dir / "inf.csv").string(), (dir / "nope.csv").string(), f.window);
    FAIL() << "expected DataError";
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("nope.csv"), std::string::npos);
  }
}

TEST(FileFormatTest, rejects_invalid_values)
{
  const auto dir = scratch_dir("invalid");
  std::ofstream(dir / "occ.csv") << "district_id,date,covid_beds\nA,2021-10-01,-1\n";
  EXPECT_THROW(read_occupancy((dir / "occ.csv").string()), DataError);
  std::ofstream(dir / "inf.csv") << "district_id,date,age_group,cases,population\nA,2021-10-01,80+,3,0\n";
  EXPECT_THROW(read_infections((dir / "inf.csv").string()), DataError);
  std::ofstream(dir / "geo.csv") << "district_id,longitude,latitude\nA,200,50\n";
  EXPECT_THROW(read_geo((dir / "geo.csv").string()), DataError);
}

TEST(PanelFileTest, write_then_read_is_identity)
{
  const auto f = make_fixture();
  auto panel = build_panel(f.occupancy, f.infections, f.geo, f.window).panel;
  std::mt19937_64 gen(1);
  std::normal_distribution<double> z;
  for (auto& o : panel.observations) o.longitude += 1e-7 * z(gen);
  std::stringstream buffer;
  write_panel(buffer, panel);
  EXPECT_EQ(panel, read_panel(buffer));
}

TEST(ValidatePanelTest, clean_duplicate_and_band)
{
  const auto f = make_fixture();
  auto panel = build_panel(f.occupancy, f.infections, f.geo, f.window).panel;
  EXPECT_TRUE(validate_panel(panel).all_passed());

  auto dup = panel;
  dup.observations.push_back(dup.observations.front());
  const auto dup_report = validate_panel(dup);
  EXPECT_EQ(1, dup_report.duplicate_keys);
  EXPECT_FALSE(dup_report.all_passed());

  auto wild = panel;
  wild.observations[3].delta = 31;
  const auto band_report = validate_panel(wild);
  EXPECT_EQ(1, band_report.implausible_deltas);
  EXPECT_EQ(31, band_report.observed_delta_max);
  EXPECT_NE(band_report.render().find("WARN delta range"), std::string::npos);
}

}  // namespace
}  // namespace disentangle
