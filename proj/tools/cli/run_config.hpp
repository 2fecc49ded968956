#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"

#include "disentangle/data_pipeline.hpp"
#include "disentangle/pooled_inference.hpp"
#include "disentangle/sem_engine.hpp"
#include "disentangle/simulation_lab.hpp"

namespace disentangle::cli {

inline constexpr const char* kToolVersion = "0.1.0";

struct DataPaths {
  std::string occupancy;
  std::string infections;
  std::string geo;
  /// Empty means the built-in placeholder kernel.
  std::string kernel;
};

/// Everything a fit needs. Paths are absolute after loading.
struct FitRunConfig {
  DataPaths data;
  DateWindow window;
  SemConfig sem;
  ScaleTransform transform = ScaleTransform::identity;
  PoolingStatistic pooling = PoolingStatistic::mean;
  /// Cells per axis of the spatial smooth grid.
  int space_grid = 30;

  /// Same schema as the input file, paths resolved.
  nlohmann::ordered_json to_json() const;
};

/// Reads a fit config. Relative data paths are taken relative to the file.
/// A run manifest is accepted too (its "resolved_config" is used).
FitRunConfig load_fit_config(const std::string& path);
FitRunConfig fit_config_from_json(const nlohmann::json& doc, const std::filesystem::path& base_dir);

SimConfig load_sim_config(const std::string& path);
SimConfig sim_config_from_json(const nlohmann::json& doc);
nlohmann::ordered_json sim_config_to_json(const SimConfig& config);

/// Default incoming/outgoing model: all weekday and rate covariates, s(t) and
/// te(lon,lat); the outgoing model adds the weighted-arrival offset.
IntensityModelSpec default_model_spec(const std::string& name);

struct RunManifest {
  std::string subcommand;
  std::string config_path;
  std::vector<std::string> input_paths;
  std::string output_dir;
  std::uint64_t seed = 0;
  std::string tool_version = kToolVersion;
  std::string timestamp;
  nlohmann::ordered_json resolved_config;
  std::vector<std::string> warnings;

  nlohmann::ordered_json to_json() const;
  void write(const std::filesystem::path& dir) const;
};

std::string utc_timestamp();

/// Creates dir, refusing a non-empty existing directory unless overwrite.
void prepare_output_dir(const std::filesystem::path& dir, bool overwrite);

}  // namespace disentangle::cli
