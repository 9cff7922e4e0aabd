#pragma once

#include "sloam/config.hpp"
#include "sloam/mapping.hpp"
#include "sloam/odometry.hpp"

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

namespace sloam {

struct PipelineCounters {
  std::uint64_t sweeps{0};
  std::uint64_t odometry_passes{0};  // Alg-1 executions (n_odom per sweep)
  std::uint64_t mapping_updates{0};  // once per sweep
};

struct PipelineResult {
  WorldMap map;
  InventoryReport inventory;
  PipelineCounters counters;
  std::vector<double> sweep_times;  // sweep start times (last row extrapolated)
  std::vector<bool> sweep_converged;
  std::vector<double> sweep_ms;  // wall time per sweep
};

// Feature extraction for one labeled, band-filtered sweep.
SweepFeatures extract_features(const OrganizedSweep& sweep,
                               const PipelineConfig& config);

// Runs the full odometry+mapping pipeline over in-memory sweeps (ordered by
// index). log may be null; verbosity >= 1 prints per-sweep timing.
PipelineResult run_pipeline(const std::vector<OrganizedSweep>& sweeps,
                            const PipelineConfig& config,
                            std::ostream* log = nullptr, int verbosity = 0,
                            const std::filesystem::path* instance_dump_dir = nullptr);

// File-based front end: reads sweep_*.bin from in_dir (label sidecars when
// the provider is 'file'), runs the pipeline, and writes trajectory.csv,
// landmarks.csv, map.ply and inventory.json into out_dir.
PipelineResult run_pipeline_files(const std::filesystem::path& in_dir,
                                  const std::filesystem::path& out_dir,
                                  const PipelineConfig& config,
                                  std::ostream* log = nullptr,
                                  int verbosity = 0);

std::vector<std::filesystem::path> discover_sweeps(
    const std::filesystem::path& dir);

void write_trajectory_csv(const PipelineResult& result,
                          const std::filesystem::path& path);
void write_inventory_json(const InventoryReport& report,
                          const std::filesystem::path& path);

struct EvalMetrics {
  double endpoint_drift_m{0.0};
  double drift_pct{0.0};
  double path_length_m{0.0};
  double ate_rmse_m{0.0};
  double ate_mean_m{0.0};
  double dbh_mean_abs_err_m{0.0};
  double dbh_median_abs_err_m{0.0};
  double dbh_max_abs_err_m{0.0};
  double dbh_min_abs_err_m{0.0};
  int n_true{0};
  int n_detected{0};
  int n_matched{0};
  int n_missed{0};
};

// Compares a run directory against the simulator truth directory. Trajectories
// are aligned by the first truth pose; trees are matched by nearest position
// within 1 m.
EvalMetrics evaluate_run(const std::filesystem::path& run_dir,
                         const std::filesystem::path& truth_dir);

void write_metrics_json(const EvalMetrics& metrics,
                        const std::filesystem::path& path);

}  // namespace sloam
