#include "cli/run_config.hpp"

#include <chrono>
#include <fstream>
#include <set>

#include "disentangle/errors.hpp"

namespace disentangle::cli {

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

namespace {

void check_keys(const json& obj, const std::string& where, const std::set<std::string>& allowed) {
  if (!obj.is_object()) {
    throw ConfigError("'" + where + "' must be an object");
  }
  for (const auto& [key, value] : obj.items()) {
    if (!allowed.count(key)) {
      throw ConfigError("unknown field '" + (where.empty() ? key : where + "." + key) + "'");
    }
  }
}

template <typename T>
void read_field(const json& obj, const std::string& where, const std::string& key, T& target) {
  const auto it = obj.find(key);
  if (it == obj.end() || it->is_null()) return;
  try {
    target = it->get<T>();
  } catch (const json::exception&) {
    throw ConfigError("field '" + (where.empty() ? key : where + "." + key) + "' has the wrong type");
  }
}

std::string resolve(const fs::path& base, const std::string& path) {
  if (path.empty()) return path;
  const fs::path p(path);
  return (p.is_absolute() ? p : base / p).lexically_normal().string();
}

DayIndex read_date(const json& obj, const std::string& key) {
  std::string text;
  read_field(obj, "window", key, text);
  if (text.empty()) {
    throw ConfigError("field 'window." + key + "' is required");
  }
  try {
    return parse_iso_date(text);
  } catch (const DataError& e) {
    throw ConfigError("field 'window." + key + "': " + e.what());
  }
}

IntensityModelSpec read_model(const json& obj, const std::string& name) {
  const std::string where = "models." + name;
  check_keys(obj, where, {"linear_terms", "intercept", "time_smooth", "space_smooth", "time_basis_dim",
                          "space_basis_dims", "offset", "smoothing_grid", "smoothing_values",
                          "fixed_smoothing"});
  IntensityModelSpec spec = default_model_spec(name);
  read_field(obj, where, "linear_terms", spec.linear_terms);
  read_field(obj, where, "intercept", spec.intercept);
  bool time = spec.time_smooth.has_value();
  bool space = spec.space_smooth.has_value();
  read_field(obj, where, "time_smooth", time);
  read_field(obj, where, "space_smooth", space);
  if (!time) spec.time_smooth.reset();
  if (!space) spec.space_smooth.reset();
  if (spec.time_smooth) read_field(obj, where, "time_basis_dim", spec.time_smooth->basis_dim);
  if (spec.space_smooth) read_field(obj, where, "space_basis_dims", spec.space_smooth->dims);
  std::string offset = spec.offset_rule == OffsetRule::weighted_arrivals ? "weighted_arrivals" : "none";
  read_field(obj, where, "offset", offset);
  if (offset == "none") {
    spec.offset_rule = OffsetRule::none;
  } else if (offset == "weighted_arrivals") {
    spec.offset_rule = OffsetRule::weighted_arrivals;
  } else {
    throw ConfigError("field '" + where + ".offset' must be 'none' or 'weighted_arrivals'");
  }
  if (obj.contains("smoothing_grid")) {
    std::array<double, 3> grid{};  // lo, hi, count
    read_field(obj, where, "smoothing_grid", grid);
    if (!(grid[0] > 0.0) || !(grid[1] >= grid[0]) || grid[2] < 1.0) {
      throw ConfigError("field '" + where + ".smoothing_grid' must be [lo > 0, hi >= lo, count >= 1]");
    }
    spec.smoothing.grid = SmoothingOptions::log_grid(grid[0], grid[1], static_cast<int>(grid[2]));
  }
  read_field(obj, where, "smoothing_values", spec.smoothing.grid);
  if (spec.smoothing.grid.empty()) throw ConfigError("field '" + where + ".smoothing_values' is empty");
  if (obj.contains("fixed_smoothing") && !obj["fixed_smoothing"].is_null()) {
    std::vector<double> fixed;
    read_field(obj, where, "fixed_smoothing", fixed);
    spec.smoothing.fixed = fixed;
  }
  return spec;
}

ordered_json model_to_json(const IntensityModelSpec& spec) {
  ordered_json m;
  m["linear_terms"] = spec.linear_terms;
  m["intercept"] = spec.intercept;
  m["time_smooth"] = spec.time_smooth.has_value();
  if (spec.time_smooth) m["time_basis_dim"] = spec.time_smooth->basis_dim;
  m["space_smooth"] = spec.space_smooth.has_value();
  if (spec.space_smooth) m["space_basis_dims"] = spec.space_smooth->dims;
  m["offset"] = spec.offset_rule == OffsetRule::weighted_arrivals ? "weighted_arrivals" : "none";
  m["smoothing_values"] = spec.smoothing.grid;
  if (spec.smoothing.fixed) m["fixed_smoothing"] = *spec.smoothing.fixed;
  return m;
}

}  // namespace

IntensityModelSpec default_model_spec(const std::string& name) {
  IntensityModelSpec spec;
  spec.name = name;
  spec.linear_terms.assign(kWeekdayCovariates.begin(), kWeekdayCovariates.end());
  spec.linear_terms.insert(spec.linear_terms.end(), kRateCovariates.begin(), kRateCovariates.end());
  spec.time_smooth = TimeSmoothSpec{};
  spec.space_smooth = SpaceSmoothSpec{};
  spec.offset_rule = name == "outgoing" ? OffsetRule::weighted_arrivals : OffsetRule::none;
  return spec;
}

FitRunConfig fit_config_from_json(const json& input, const fs::path& base_dir) {
  const json& doc = input.contains("resolved_config") ? input["resolved_config"] : input;
  check_keys(doc, "", {"data", "window", "sem", "models", "report"});
  FitRunConfig config;
  config.sem.incoming = default_model_spec("incoming");
  config.sem.outgoing = default_model_spec("outgoing");

  if (!doc.contains("data")) throw ConfigError("field 'data' is required");
  const json& data = doc["data"];
  check_keys(data, "data", {"occupancy", "infections", "geo", "kernel"});
  for (const auto& [key, target] : {std::pair{"occupancy", &config.data.occupancy},
                                    std::pair{"infections", &config.data.infections},
                                    std::pair{"geo", &config.data.geo}}) {
    read_field(data, "data", key, *target);
    if (target->empty()) throw ConfigError(std::string("field 'data.") + key + "' is required");
    *target = resolve(base_dir, *target);
  }
  read_field(data, "data", "kernel", config.data.kernel);
  config.data.kernel = resolve(base_dir, config.data.kernel);

  if (!doc.contains("window")) throw ConfigError("field 'window' is required");
  check_keys(doc["window"], "window", {"start", "end"});
  config.window.first = read_date(doc["window"], "start");
  config.window.last = read_date(doc["window"], "end");
  if (config.window.last < config.window.first) {
    throw ConfigError("window end precedes window start");
  }

  if (doc.contains("sem")) {
    const json& sem = doc["sem"];
    check_keys(sem, "sem", {"iterations", "burn_in", "seed", "strict_censoring", "threads", "truncation",
                            "initial_intensity", "freeze_smoothing_after_burn_in", "offset_floor",
                            "intensity_floor"});
    read_field(sem, "sem", "iterations", config.sem.iterations);
    read_field(sem, "sem", "burn_in", config.sem.burn_in);
    read_field(sem, "sem", "seed", config.sem.seed);
    read_field(sem, "sem", "strict_censoring", config.sem.e_step.strict_censoring);
    read_field(sem, "sem", "threads", config.sem.threads);
    read_field(sem, "sem", "truncation", config.sem.e_step.truncation);
    read_field(sem, "sem", "freeze_smoothing_after_burn_in", config.sem.freeze_smoothing_after_burn_in);
    read_field(sem, "sem", "offset_floor", config.sem.offset_floor);
    read_field(sem, "sem", "intensity_floor", config.sem.e_step.intensity_floor);
    if (sem.contains("initial_intensity") && !sem["initial_intensity"].is_null()) {
      double start = 0.0;
      read_field(sem, "sem", "initial_intensity", start);
      config.sem.initial_intensity = start;
    }
  }
  if (doc.contains("models")) {
    const json& models = doc["models"];
    check_keys(models, "models", {"incoming", "outgoing"});
    if (models.contains("incoming")) config.sem.incoming = read_model(models["incoming"], "incoming");
    if (models.contains("outgoing")) config.sem.outgoing = read_model(models["outgoing"], "outgoing");
  }
  if (doc.contains("report")) {
    const json& report = doc["report"];
    check_keys(report, "report", {"transform", "pooling", "space_grid"});
    std::string transform = to_string(config.transform);
    std::string pooling = to_string(config.pooling);
    read_field(report, "report", "transform", transform);
    read_field(report, "report", "pooling", pooling);
    read_field(report, "report", "space_grid", config.space_grid);
    config.transform = parse_transform(transform);
    config.pooling = parse_statistic(pooling);
    if (config.space_grid < 2) throw ConfigError("field 'report.space_grid' must be at least 2");
  }
  if (config.sem.iterations < 1) throw ConfigError("field 'sem.iterations' must be at least 1");
  if (config.sem.burn_in < 0) throw ConfigError("field 'sem.burn_in' must be nonnegative");
  if (config.sem.threads < 1) throw ConfigError("field 'sem.threads' must be at least 1");
  return config;
}

FitRunConfig load_fit_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("config file " + path + " is not valid JSON: " + e.what());
  }
  return fit_config_from_json(doc, fs::absolute(path).parent_path());
}

ordered_json FitRunConfig::to_json() const {
  ordered_json doc;
  doc["data"] = {{"occupancy", data.occupancy}, {"infections", data.infections}, {"geo", data.geo}};
  if (!data.kernel.empty()) doc["data"]["kernel"] = data.kernel;
  doc["window"] = {{"start", format_iso_date(window.first)}, {"end", format_iso_date(window.last)}};
  ordered_json s;
  s["iterations"] = sem.iterations;
  s["burn_in"] = sem.burn_in;
  s["seed"] = sem.seed;
  s["strict_censoring"] = sem.e_step.strict_censoring;
  s["threads"] = sem.threads;
  s["truncation"] = sem.e_step.truncation;
  s["initial_intensity"] = sem.initial_intensity ? ordered_json(*sem.initial_intensity) : ordered_json();
  s["freeze_smoothing_after_burn_in"] = sem.freeze_smoothing_after_burn_in;
  s["offset_floor"] = sem.offset_floor;
  s["intensity_floor"] = sem.e_step.intensity_floor;
  doc["sem"] = s;
  doc["models"] = {{"incoming", model_to_json(sem.incoming)}, {"outgoing", model_to_json(sem.outgoing)}};
  doc["report"] = {{"transform", to_string(transform)}, {"pooling", to_string(pooling)}, {"space_grid", space_grid}};
  return doc;
}

SimConfig sim_config_from_json(const json& input) {
  const json& doc = input.contains("resolved_config") ? input["resolved_config"] : input;
  check_keys(doc, "", {"n", "x_mean", "x_var", "beta_in", "beta_out", "replications", "seed", "iterations",
                       "burn_in", "level", "threads", "oracle"});
  SimConfig c;
  read_field(doc, "", "n", c.n);
  read_field(doc, "", "x_mean", c.x_mean);
  read_field(doc, "", "x_var", c.x_var);
  for (const auto& [key, target] : {std::pair{"beta_in", &c.beta_in}, std::pair{"beta_out", &c.beta_out}}) {
    if (!doc.contains(key)) continue;
    std::vector<double> beta;
    read_field(doc, "", key, beta);
    if (beta.size() != 2) {
      throw ConfigError(std::string("field '") + key + "' must have 2 entries, got " +
                        std::to_string(beta.size()));
    }
    *target = {beta[0], beta[1]};
  }
  read_field(doc, "", "replications", c.replications);
  read_field(doc, "", "seed", c.seed);
  read_field(doc, "", "iterations", c.iterations);
  read_field(doc, "", "burn_in", c.burn_in);
  read_field(doc, "", "level", c.level);
  read_field(doc, "", "threads", c.threads);
  read_field(doc, "", "oracle", c.oracle);
  c.validate();
  return c;
}

SimConfig load_sim_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  try {
    return sim_config_from_json(json::parse(in));
  } catch (const json::parse_error& e) {
    throw ConfigError("config file " + path + " is not valid JSON: " + e.what());
  }
}

ordered_json sim_config_to_json(const SimConfig& c) {
  ordered_json doc;
  doc["n"] = c.n;
  doc["x_mean"] = c.x_mean;
  doc["x_var"] = c.x_var;
  doc["beta_in"] = c.beta_in;
  doc["beta_out"] = c.beta_out;
  doc["replications"] = c.replications;
  doc["seed"] = c.seed;
  doc["iterations"] = c.iterations;
  doc["burn_in"] = c.burn_in;
  doc["level"] = c.level;
  doc["threads"] = c.threads;
  doc["oracle"] = c.oracle;
  return doc;
}

ordered_json RunManifest::to_json() const {
  ordered_json doc;
  doc["subcommand"] = subcommand;
  doc["config_path"] = config_path;
  doc["input_paths"] = input_paths;
  doc["output_dir"] = output_dir;
  doc["seed"] = seed;
  doc["tool_version"] = tool_version;
  doc["timestamp"] = timestamp;
  doc["warnings"] = warnings;
  doc["resolved_config"] = resolved_config;
  return doc;
}

void RunManifest::write(const fs::path& dir) const {
  std::ofstream out(dir / "manifest.json");
  if (!out) throw ConfigError("cannot write " + (dir / "manifest.json").string());
  out << to_json().dump(2) << "\n";
}

std::string utc_timestamp() {
  const auto now = std::chrono::floor<std::chrono::seconds>(std::chrono::system_clock::now());
  const auto day = std::chrono::floor<std::chrono::days>(now);
  const std::chrono::hh_mm_ss hms{now - day};
  char buf[16];
  std::snprintf(buf, sizeof buf, "T%02d:%02d:%02dZ", static_cast<int>(hms.hours().count()),
                static_cast<int>(hms.minutes().count()), static_cast<int>(hms.seconds().count()));
  return format_iso_date(static_cast<DayIndex>(day.time_since_epoch().count())) + buf;
}

void prepare_output_dir(const fs::path& dir, bool overwrite) {
  if (dir.empty()) throw ConfigError("an output directory (--out) is required");
  std::error_code ec;
  if (fs::exists(dir, ec)) {
    if (!fs::is_directory(dir, ec)) {
      throw ConfigError("output path exists and is not a directory: " + dir.string());
    }
    if (!fs::is_empty(dir, ec)) {
      if (!overwrite) {
        throw ConfigError("output directory " + dir.string() + " is not empty; pass --overwrite to replace it");
      }
      fs::remove_all(dir, ec);
    }
  }
  fs::create_directories(dir, ec);
  if (ec) throw ConfigError("cannot create output directory " + dir.string() + ": " + ec.message());
}

}  // namespace disentangle::cli
