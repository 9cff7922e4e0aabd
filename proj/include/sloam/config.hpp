#pragma once

#include "sloam/mapping.hpp"
#include "sloam/odometry.hpp"
#include "sloam/segmentation.hpp"
#include "sloam/sweep.hpp"
#include "sloam/trellis.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace sloam {

enum class LabelProviderKind { GroundTruth, File, Heuristic };

// Every tunable of the pipeline, grouped by module. The JSON document has one
// section per group; absent fields keep their defaults, unknown fields are
// rejected.
struct PipelineConfig {
  struct SweepSection {
    int beams{16};
    double elev_min_deg{-15.0};
    double elev_max_deg{15.0};
    int azimuth_bins{1800};
    double radius_min_m{1.0};
    double radius_max_m{30.0};
  } sweep;

  struct LabelSection {
    LabelProviderKind provider{LabelProviderKind::GroundTruth};
    int heuristic_min_run{4};
    double heuristic_depth_tol_m{0.3};
  } labels;

  struct GroundSection {
    std::vector<double> radial_edges_m{1.0, 3.0, 6.0, 10.0, 16.0, 25.0};
    int angular_bins{16};
    int keep_lowest{3};
  } ground;

  struct TrellisSection {
    double depth_tol_m{0.3};
    double max_edge_dist_m{0.5};
    int min_path_len{4};
    double max_path_cost_m{8.0};
    int lookahead{2};
    std::string edge_weight{"centroid"};  // or "focus"
    std::string strategy{"greedy"};       // or "viterbi"
  } trellis;

  struct CylinderFitSection {
    int max_iterations{50};
    double initial_damping{1e-4};
    double damping_increase{10.0};
    double damping_decrease{10.0};
    double update_tolerance{1e-8};
    double residual_tolerance{1e-14};
    int min_points{6};
  } cylinder_fit;

  struct OdometrySection {
    int n_odom{4};
    std::string association{"feature"};  // or "model"
    int outer_iterations{6};
    double assoc_gate_tree_m{1.0};
    double assoc_gate_ground_m{0.5};
    int ground_k_neighbors{5};
    double degeneracy_threshold{1e-6};
  } odometry;

  struct MappingSection {
    int new_tree_min_pts{25};
    int min_obs{3};
    int feature_window_sweeps{10};
    bool refit_world_models{true};
    double breast_height_m{1.37};
  } mapping;

  struct ExecutionSection {
    int threads{0};  // 0 = all hardware threads
  } execution;

  // Derived settings objects.
  SensorModel sensor_model() const;
  CircularGridSpec grid_spec() const;
  HeuristicLabelSettings heuristic_settings() const;
  SolverSettings cylinder_solver() const;
  OdometrySettings odometry_settings() const;
  MappingSettings mapping_settings() const;
  EdgeWeightMode edge_weight_mode() const;
  ExtractStrategy extract_strategy() const;

  void validate() const;

  static PipelineConfig load(const std::filesystem::path& path);
  static PipelineConfig from_json_text(const std::string& text);
  std::string to_json_text() const;  // full schema with current values
};

}  // namespace sloam
