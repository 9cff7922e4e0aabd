#pragma once

#include "sloam/odometry.hpp"

#include <cstdint>
#include <deque>
#include <filesystem>
#include <vector>

namespace sloam {

struct MappingSettings {
  int new_tree_min_pts{25};  // unassigned points required to admit a landmark
  int min_obs{3};            // observations required to report a tree
  // Sweeps of features kept for association and refitting; 0 keeps all
  // (the paper's growing-map behavior).
  int feature_window_sweeps{10};
  bool refit_world_models{true};
  double breast_height{1.37};  // meters above local ground

  void validate() const;
};

struct WorldLandmark {
  CylinderModel model;  // world frame
  std::vector<double> radius_history;
  int observations{0};
  // Supporting world-frame points per sweep (windowed).
  std::deque<std::pair<std::uint64_t, std::vector<Point3>>> recent_points;
};

// World-frame map state: landmark set, aggregated feature clouds, and the
// estimated trajectory (pose at each sweep boundary, starting at identity).
struct WorldMap {
  std::vector<WorldLandmark> landmarks;
  std::vector<TaggedPoint> tree_features;
  std::vector<Point3> ground_features;
  std::vector<PoseTransform> trajectory{PoseTransform{}};

  // Per-sweep feature counts for window trimming.
  std::deque<std::pair<std::uint64_t, std::size_t>> tree_window;
  std::deque<std::pair<std::uint64_t, std::size_t>> ground_window;

  std::size_t size() const { return landmarks.size(); }
};

// One sweep of semantic lidar mapping: refine the world pose against the map
// (same cost as odometry), associate features to landmarks, admit new
// landmarks from sufficiently large unassigned instances, record per-sweep
// radius estimates, and aggregate features. Returns the refined world pose at
// the end of the sweep.
PoseTransform update_map(const OdometryOutput& odometry,
                         std::uint64_t sweep_index, WorldMap& map,
                         const OdometrySettings& odo_settings,
                         const MappingSettings& settings);

struct InventoryItem {
  int id{0};
  Point3 position{Point3::Zero()};  // axis point at breast height
  Vec3 axis{Vec3::UnitZ()};
  double dbh{0.0};  // meters
  int observations{0};
};

struct InventoryReport {
  std::vector<InventoryItem> trees;  // sorted by id
  int total_landmarks{0};
  int below_min_obs{0};
};

// DBH per landmark as twice the median of its per-sweep radius estimates;
// landmarks with fewer than min_obs observations are excluded (counted
// separately). Positions anchor breast height on the local ground plane
// estimated from nearby ground features.
InventoryReport dbh_report(const WorldMap& map, double breast_height,
                           int min_obs);

// Writes map.ply (binary little-endian, x/y/z/instance_id per vertex; ground
// points carry instance_id -1) and landmarks.csv
// (id,x,y,z,axis_x,axis_y,axis_z,dbh_m,obs_count over all landmarks).
void export_map(const WorldMap& map, const std::filesystem::path& dir,
                double breast_height);

// PLY reader for the exported cloud (round-trip checks and tooling).
std::vector<std::pair<Point3, std::int32_t>> read_map_ply(
    const std::filesystem::path& path);

}  // namespace sloam
