#pragma once

#include <filesystem>

#include "cli/trace_store.hpp"
#include "disentangle/pooled_inference.hpp"
#include "disentangle/simulation_lab.hpp"

namespace disentangle::cli {

struct ReportOptions {
  int burn_in = 200;
  ScaleTransform transform = ScaleTransform::identity;
  PoolingStatistic pooling = PoolingStatistic::mean;
};

/// Pools a stored trace; throws ConfigError when burn_in leaves nothing.
PooledResult pool_stored(const StoredTrace& trace, int burn_in);

/// Writes pooled_table.txt, pooled.json, flows.csv, smooth_time.csv,
/// smooth_space.csv and figures/*.svg into dir. Returns the table text.
std::string write_report(const std::filesystem::path& dir, const StoredTrace& trace, const ReportOptions& options);

/// coverage.txt, study.json, intervals.csv and figures/intervals.svg.
void write_study(const std::filesystem::path& dir, const StudyReport& report);

}  // namespace disentangle::cli
