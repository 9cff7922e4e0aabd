// Command-line front end: simulate / run / eval / export.

#include "sloam/config.hpp"
#include "sloam/pipeline.hpp"
#include "sloam/sim.hpp"
#include "sloam/sim_spec.hpp"
#include "sloam/sweep.hpp"

#include "sloam/parallel.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>

namespace fs = std::filesystem;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitNumerical = 3;

struct CommonOpts {
  std::string config_path;
  std::string out_dir = "out";
  std::uint64_t seed = 0;
  bool seed_set = false;
  int verbosity = 0;
  std::string assoc;
};

sloam::PipelineConfig load_config(const CommonOpts& opts) {
  sloam::PipelineConfig cfg;
  if (!opts.config_path.empty()) {
    cfg = sloam::PipelineConfig::load(opts.config_path);
  }
  if (opts.assoc == "model") {
    cfg.odometry.association = "model";
  } else if (opts.assoc == "feature") {
    cfg.odometry.association = "feature";
  } else if (!opts.assoc.empty()) {
    throw sloam::Error("--assoc: must be 'model' or 'feature'");
  }
  cfg.validate();
  return cfg;
}

int cmd_simulate(const std::string& spec_path, const CommonOpts& opts) {
  sloam::sim::SimulationSpec spec = sloam::sim::load_simulation_spec(spec_path);
  if (opts.seed_set) {
    spec.seed = opts.seed;
    spec.forest.seed = opts.seed;
  }

  const sloam::sim::Scene scene = sloam::sim::generate_forest(spec.forest);
  const int threads = sloam::resolve_threads(0);
  const sloam::sim::SimulationResult result = sloam::sim::simulate_sweeps(
      scene, spec.trajectory, spec.sensor, spec.seed, threads);
  sloam::sim::write_simulation(result, opts.out_dir);

  std::size_t returns = 0;
  for (const auto& s : result.sweeps) returns += s.present_count();
  std::printf("scene: %zu trees, %zu clutter points, ground slope (%.3g, %.3g)\n",
              scene.trees.size(), scene.shrubs.size(), scene.ground.slope_x,
              scene.ground.slope_y);
  std::printf("sweeps: %zu (%d x %d), %zu returns, noise sigma %.3g m\n",
              result.sweeps.size(), spec.sensor.model.beams(),
              spec.sensor.model.azimuth_bins, returns,
              spec.sensor.noise_sigma);
  std::printf("wrote %s\n", opts.out_dir.c_str());
  return kExitOk;
}

int cmd_run(const std::string& in_dir, const CommonOpts& opts) {
  const sloam::PipelineConfig cfg = load_config(opts);
  const sloam::PipelineResult result = sloam::run_pipeline_files(
      in_dir, opts.out_dir, cfg, &std::cout, opts.verbosity);

  if (result.counters.sweeps > 0 && result.map.landmarks.empty()) {
    std::printf("warning: no tree landmarks detected in %llu sweeps\n",
                static_cast<unsigned long long>(result.counters.sweeps));
  }
  std::printf("processed %llu sweeps, odometry passes %llu, mapping updates "
              "%llu\n",
              static_cast<unsigned long long>(result.counters.sweeps),
              static_cast<unsigned long long>(result.counters.odometry_passes),
              static_cast<unsigned long long>(result.counters.mapping_updates));
  std::printf("landmarks: %zu (reported: %zu)\n", result.map.landmarks.size(),
              result.inventory.trees.size());
  std::printf("wrote %s\n", opts.out_dir.c_str());
  return kExitOk;
}

int cmd_eval(const std::string& run_dir, const std::string& truth_dir,
             const CommonOpts& opts) {
  const sloam::EvalMetrics m = sloam::evaluate_run(run_dir, truth_dir);
  fs::create_directories(opts.out_dir);
  sloam::write_metrics_json(m, fs::path(opts.out_dir) / "metrics.json");

  std::printf("trajectory: drift %.3f m (%.2f%% of %.1f m), ATE rmse %.3f m\n",
              m.endpoint_drift_m, m.drift_pct, m.path_length_m, m.ate_rmse_m);
  std::printf("dbh: matched %d/%d trees, mean |err| %.3f m, max %.3f m\n",
              m.n_matched, m.n_true, m.dbh_mean_abs_err_m, m.dbh_max_abs_err_m);
  std::printf("wrote %s\n",
              (fs::path(opts.out_dir) / "metrics.json").string().c_str());
  return kExitOk;
}

int cmd_export(const std::string& input, const CommonOpts& opts) {
  fs::create_directories(opts.out_dir);
  std::vector<fs::path> files;
  if (fs::is_directory(input)) {
    files = sloam::discover_sweeps(input);
  } else {
    files.push_back(input);
  }
  for (const fs::path& f : files) {
    const sloam::OrganizedSweep sweep = sloam::read_sweep(f);
    fs::path out = fs::path(opts.out_dir) / f.filename();
    out.replace_extension(".csv");
    sloam::write_sweep_csv(sweep, out);
    if (opts.verbosity >= 1) {
      std::printf("%s -> %s (%zu cells)\n", f.string().c_str(),
                  out.string().c_str(), sweep.present_count());
    }
  }
  std::printf("exported %zu sweep file(s) to %s\n", files.size(),
              opts.out_dir.c_str());
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Semantic lidar odometry and mapping for forest inventory"};
  app.require_subcommand(1);

  CommonOpts opts;
  app.add_option("--config", opts.config_path, "Pipeline config JSON");
  app.add_option("--out", opts.out_dir, "Output directory");
  app.add_option("--seed", opts.seed, "Override simulation seed")
      ->each([&opts](const std::string&) { opts.seed_set = true; });
  app.add_option("--verbosity", opts.verbosity, "0..2")
      ->check(CLI::Range(0, 2));
  app.add_option("--assoc", opts.assoc,
                 "Data association method: model | feature");

  std::string spec_path, in_dir, run_dir, truth_dir, export_input;

  CLI::App* simulate =
      app.add_subcommand("simulate", "Generate a synthetic forest dataset");
  simulate->add_option("spec", spec_path, "Simulation spec JSON")->required();

  CLI::App* run = app.add_subcommand("run", "Run the pipeline over sweep logs");
  run->add_option("sweeps", in_dir, "Directory with sweep_*.bin")->required();

  CLI::App* eval = app.add_subcommand("eval", "Compare a run against truth");
  eval->add_option("run", run_dir, "Run output directory")->required();
  eval->add_option("truth", truth_dir, "Simulator truth directory")->required();

  CLI::App* exp = app.add_subcommand("export", "Convert sweep logs to CSV");
  exp->add_option("input", export_input, "Sweep file or directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (simulate->parsed()) return cmd_simulate(spec_path, opts);
    if (run->parsed()) return cmd_run(in_dir, opts);
    if (eval->parsed()) return cmd_eval(run_dir, truth_dir, opts);
    if (exp->parsed()) return cmd_export(export_input, opts);
  } catch (const sloam::NumericalError& e) {
    std::fprintf(stderr, "numerical failure: %s\n", e.what());
    return kExitNumerical;
  } catch (const sloam::Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitData;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitData;
  }
  return kExitUsage;
}
