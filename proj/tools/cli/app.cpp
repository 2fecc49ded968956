#include "cli/app.hpp"

#include <filesystem>
#include <fstream>
#include <optional>
#include <ostream>

#include "CLI11.hpp"
#include "json.hpp"

#include "cli/report_writer.hpp"
#include "cli/run_config.hpp"
#include "cli/trace_store.hpp"
#include "disentangle/csv.hpp"
#include "disentangle/errors.hpp"

namespace disentangle::cli {

namespace fs = std::filesystem;

namespace {

struct Options {
  std::string config;
  std::string out;
  std::string trace;
  std::optional<std::uint64_t> seed;
  std::optional<int> iterations;
  std::optional<int> burn_in;
  std::optional<int> threads;
  std::optional<int> replications;
  std::optional<std::string> transform;
  std::optional<std::string> pooling;
  bool strict_censoring = false;
  bool overwrite = false;
};

// Where an error record may be written: only into a directory this run owns.
struct RunContext {
  std::string subcommand;
  fs::path out;
  bool out_ready = false;
};

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream file(path, std::ios::binary);
  if (!file) throw DataError("cannot write " + path.string());
  file << text;
}

RunManifest start_manifest(const RunContext& ctx, const Options& o, std::uint64_t seed) {
  RunManifest m;
  m.subcommand = ctx.subcommand;
  m.config_path = o.config.empty() ? "" : fs::absolute(o.config).lexically_normal().string();
  m.output_dir = fs::absolute(ctx.out).lexically_normal().string();
  m.seed = seed;
  m.timestamp = utc_timestamp();
  return m;
}

void open_output(RunContext& ctx, const std::string& dir, bool overwrite) {
  prepare_output_dir(dir, overwrite);
  ctx.out = dir;
  ctx.out_ready = true;
}

IterationCallback progress(std::ostream& err, int total) {
  const int every = std::max(1, total / 10);
  return [&err, total, every](const SemIteration& it) {
    if (it.index % every == 0 || it.index == total) {
      err << "iteration " << it.index << "/" << total << "  complete log-likelihood "
          << csv::format_double(it.complete_log_likelihood) << "\n";
    }
  };
}

int cmd_fit(const Options& o, RunContext& ctx, std::ostream& out, std::ostream& err) {
  FitRunConfig config = load_fit_config(o.config);
  if (o.seed) config.sem.seed = *o.seed;
  if (o.iterations) {
    config.sem.iterations = *o.iterations;
    if (!o.burn_in && config.sem.burn_in >= config.sem.iterations) {
      config.sem.burn_in = config.sem.iterations * 2 / 5;
    }
  }
  if (o.burn_in) config.sem.burn_in = *o.burn_in;
  if (o.threads) config.sem.threads = *o.threads;
  if (o.strict_censoring) config.sem.e_step.strict_censoring = true;
  if (o.transform) config.transform = parse_transform(*o.transform);
  if (o.pooling) config.pooling = parse_statistic(*o.pooling);
  if (config.sem.iterations < 1) throw ConfigError("--iterations must be at least 1");
  if (config.sem.burn_in < 0 || config.sem.burn_in >= config.sem.iterations) {
    throw ConfigError("burn-in " + std::to_string(config.sem.burn_in) + " must be in [0, " +
                      std::to_string(config.sem.iterations) + ")");
  }
  if (config.sem.threads < 1) throw ConfigError("--threads must be at least 1");

  open_output(ctx, o.out, o.overwrite);
  RunManifest manifest = start_manifest(ctx, o, config.sem.seed);
  manifest.input_paths = {config.data.occupancy, config.data.infections, config.data.geo};
  if (!config.data.kernel.empty()) manifest.input_paths.push_back(config.data.kernel);
  manifest.resolved_config = config.to_json();
  manifest.write(ctx.out);

  if (!config.data.kernel.empty()) config.sem.kernel = WeightKernel::load(config.data.kernel);
  const LoadResult loaded =
      load_panel(config.data.occupancy, config.data.infections, config.data.geo, config.window);
  for (const auto& w : loaded.warnings) err << "warning: " << w << "\n";
  manifest.warnings = loaded.warnings;
  write_text(ctx.out / "validation.txt", validate_panel(loaded.panel).render());

  SemTrace trace;
  try {
    trace = run_sem(loaded.panel, config.sem, progress(err, config.sem.iterations));
  } catch (const SemAborted& e) {
    if (e.partial_trace() && !e.partial_trace()->iterations.empty()) {
      write_trace(ctx.out / "trace", capture_trace(*e.partial_trace(), loaded.panel, config.space_grid));
    }
    throw;
  }
  const StoredTrace stored = capture_trace(trace, loaded.panel, config.space_grid);
  write_trace(ctx.out / "trace", stored);
  const std::string table =
      write_report(ctx.out, stored, {config.sem.burn_in, config.transform, config.pooling});
  manifest.write(ctx.out);
  out << table;
  return kSuccess;
}

int cmd_report(const Options& o, RunContext& ctx, std::ostream& out) {
  const fs::path run_dir = o.trace;
  const fs::path trace_dir = fs::exists(run_dir / "trace" / "coefficients.json") ? run_dir / "trace" : run_dir;
  ReportOptions options;
  std::uint64_t seed = 0;
  const fs::path fit_manifest = run_dir / "manifest.json";
  if (std::ifstream in{fit_manifest}) {
    try {
      const auto doc = nlohmann::json::parse(in);
      const auto& cfg = doc.at("resolved_config");
      options.burn_in = cfg.at("sem").at("burn_in").get<int>();
      options.transform = parse_transform(cfg.at("report").at("transform").get<std::string>());
      options.pooling = parse_statistic(cfg.at("report").at("pooling").get<std::string>());
      seed = doc.at("seed").get<std::uint64_t>();
    } catch (const nlohmann::json::exception& e) {
      throw DataError("unreadable run manifest " + fit_manifest.string() + ": " + e.what());
    }
  }
  if (o.burn_in) options.burn_in = *o.burn_in;
  if (o.transform) options.transform = parse_transform(*o.transform);
  if (o.pooling) options.pooling = parse_statistic(*o.pooling);

  const StoredTrace stored = read_trace(trace_dir);
  pool_stored(stored, options.burn_in);
  open_output(ctx, o.out.empty() ? (run_dir / "report").string() : o.out, o.overwrite);
  RunManifest manifest = start_manifest(ctx, o, seed);
  manifest.config_path = fs::exists(fit_manifest) ? fs::absolute(fit_manifest).lexically_normal().string() : "";
  manifest.input_paths = {fs::absolute(trace_dir).lexically_normal().string()};
  manifest.resolved_config = {{"burn_in", options.burn_in},
                              {"transform", to_string(options.transform)},
                              {"pooling", to_string(options.pooling)}};
  manifest.write(ctx.out);
  out << write_report(ctx.out, stored, options);
  return kSuccess;
}

int cmd_simulate(const Options& o, RunContext& ctx, std::ostream& out) {
  SimConfig config = o.config.empty() ? SimConfig{} : load_sim_config(o.config);
  if (o.seed) config.seed = *o.seed;
  if (o.iterations) {
    config.iterations = *o.iterations;
    if (!o.burn_in && config.burn_in >= config.iterations) config.burn_in = config.iterations * 2 / 5;
  }
  if (o.burn_in) config.burn_in = *o.burn_in;
  if (o.threads) config.threads = *o.threads;
  if (o.replications) config.replications = *o.replications;
  config.validate();

  open_output(ctx, o.out, o.overwrite);
  RunManifest manifest = start_manifest(ctx, o, config.seed);
  manifest.resolved_config = sim_config_to_json(config);
  manifest.write(ctx.out);
  const StudyReport report = run_study(config);
  write_study(ctx.out, report);
  out << report.render_text();
  return kSuccess;
}

int cmd_validate(const Options& o, RunContext& ctx, std::ostream& out, std::ostream& err) {
  const FitRunConfig config = load_fit_config(o.config);
  if (!o.out.empty()) open_output(ctx, o.out, o.overwrite);
  const LoadResult loaded =
      load_panel(config.data.occupancy, config.data.infections, config.data.geo, config.window);
  for (const auto& w : loaded.warnings) err << "warning: " << w << "\n";
  const ValidationReport report = validate_panel(loaded.panel);
  std::string text = report.render();
  text += "observations: " + std::to_string(loaded.panel.size()) + "\n";
  out << text;
  if (ctx.out_ready) {
    write_text(ctx.out / "validation.txt", text);
    RunManifest manifest = start_manifest(ctx, o, config.sem.seed);
    manifest.input_paths = {config.data.occupancy, config.data.infections, config.data.geo};
    manifest.resolved_config = config.to_json();
    manifest.warnings = loaded.warnings;
    manifest.write(ctx.out);
  }
  return kSuccess;
}

std::pair<int, std::string> classify(const std::exception& e) {
  if (dynamic_cast<const NumericalError*>(&e)) return {kNumericalError, "NumericalError"};
  if (dynamic_cast<const DataError*>(&e)) return {kDataError, "DataError"};
  if (dynamic_cast<const ConfigError*>(&e)) return {kUsageError, "ConfigError"};
  if (dynamic_cast<const DomainError*>(&e)) return {kUsageError, "DomainError"};
  return {kNumericalError, "InternalError"};
}

int report_error(const std::exception& e, const RunContext& ctx, std::ostream& err) {
  const auto [code, type] = classify(e);
  nlohmann::ordered_json record;
  record["subcommand"] = ctx.subcommand;
  record["type"] = type;
  record["exit_code"] = code;
  record["message"] = e.what();
  if (const auto* aborted = dynamic_cast<const SemAborted*>(&e)) record["iteration"] = aborted->iteration();
  err << "error: " << e.what() << "\n" << nlohmann::ordered_json{{"error", record}}.dump() << "\n";
  if (ctx.out_ready) {
    std::ofstream file(ctx.out / "error.json");
    file << record.dump(2) << "\n";
  }
  return code;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Disentangle incoming and outgoing flows from occupancy differences with stochastic EM"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(kToolVersion));
  Options o;

  const auto add_out = [&](CLI::App* sub, bool required) {
    auto* opt = sub->add_option("--out,-o", o.out, "Output directory");
    if (required) opt->required();
    sub->add_flag("--overwrite", o.overwrite, "Replace a non-empty output directory");
  };
  const auto add_pooling = [&](CLI::App* sub) {
    sub->add_option("--burn-in,--k0", o.burn_in, "Iterations discarded before pooling");
    sub->add_option("--transform", o.transform, "Coefficient scale in the table")
        ->check(CLI::IsMember({"identity", "exp"}));
    sub->add_option("--pooling", o.pooling, "Summary across iterations")->check(CLI::IsMember({"mean", "median"}));
  };

  auto* fit = app.add_subcommand("fit", "Fit both intensity models to a panel");
  fit->add_option("--config,-c", o.config, "JSON run configuration")->required();
  add_out(fit, true);
  fit->add_option("--seed", o.seed, "Master seed");
  fit->add_option("--iterations", o.iterations, "SEM iterations K");
  add_pooling(fit);
  fit->add_flag("--strict-censoring", o.strict_censoring, "Reject draws that make occupancy negative");
  fit->add_option("--threads", o.threads, "Worker threads");

  auto* simulate = app.add_subcommand("simulate", "Run the simulation study");
  simulate->add_option("--config,-c", o.config, "JSON study configuration (defaults when omitted)");
  add_out(simulate, true);
  simulate->add_option("--seed", o.seed, "Master seed");
  simulate->add_option("--iterations", o.iterations, "SEM iterations per replication");
  simulate->add_option("--burn-in,--k0", o.burn_in, "Iterations discarded before pooling");
  simulate->add_option("--replications", o.replications, "Number of simulated data sets");
  simulate->add_option("--threads", o.threads, "Worker threads");

  auto* validate = app.add_subcommand("validate", "Build the panel and print data diagnostics");
  validate->add_option("--config,-c", o.config, "JSON run configuration")->required();
  add_out(validate, false);

  auto* report = app.add_subcommand("report", "Rebuild tables and figures from a stored trace");
  report->add_option("--trace,-t", o.trace, "Fit output directory or its trace subdirectory")->required();
  add_out(report, false);
  add_pooling(report);

  RunContext ctx;
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kSuccess : kUsageError;
  }

  try {
    if (fit->parsed()) {
      ctx.subcommand = "fit";
      return cmd_fit(o, ctx, out, err);
    }
    if (simulate->parsed()) {
      ctx.subcommand = "simulate";
      return cmd_simulate(o, ctx, out);
    }
    if (validate->parsed()) {
      ctx.subcommand = "validate";
      return cmd_validate(o, ctx, out, err);
    }
    ctx.subcommand = "report";
    return cmd_report(o, ctx, out);
  } catch (const std::exception& e) {
    return report_error(e, ctx, err);
  }
}

}  // namespace disentangle::cli
