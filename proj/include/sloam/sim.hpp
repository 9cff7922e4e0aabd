#pragma once

#include "sloam/geometry.hpp"
#include "sloam/sweep.hpp"

#include <cstdint>
#include <filesystem>
#include <vector>

namespace sloam::sim {

// Ground surface: base plane plus an optional rolling sinusoidal field.
struct GroundModel {
  double slope_x{0.0}, slope_y{0.0}, offset{0.0};
  double amplitude{0.0}, wavelength{0.0};

  double height_at(double x, double y) const;
  bool is_plane() const { return amplitude == 0.0 || wavelength <= 0.0; }
};

// Trunk modeled as an open finite cylinder standing on the ground.
struct Tree {
  Point3 base;
  Vec3 axis;  // unit, pointing up the trunk
  double radius{0.1};
  double height{8.0};
};

struct KeepoutDisc {
  double x{0.0}, y{0.0}, radius{1.0};
};

struct ForestSpec {
  std::uint64_t seed{42};
  double area_m2{1600.0};  // square region centered on the origin
  int tree_count{30};
  double diameter_min{0.1}, diameter_max{0.6};
  double tilt_max_deg{5.0};
  GroundModel ground;
  double shrub_density{0.3};  // clutter points per m^2
  double shrub_height_min{0.1}, shrub_height_max{1.0};
  double shrub_radius{0.03};
  double tree_height_min{6.0}, tree_height_max{10.0};
  double min_spacing{2.0};
  std::vector<KeepoutDisc> keepout;  // discs kept clear of trunks
};

struct Scene {
  GroundModel ground;
  std::vector<Tree> trees;
  std::vector<Point3> shrubs;
  double shrub_radius{0.03};
  double half_extent{20.0};
};

// Deterministic for a fixed seed. Trunks are placed by bounded rejection
// sampling honoring min_spacing and the keepout discs.
Scene generate_forest(const ForestSpec& spec);

struct TrajectorySegment {
  Point3 to{0.0, 0.0, 1.0};
  double speed{1.0};         // m/s along the segment
  double yaw_rate_dps{0.0};  // deg/s applied while traversing the segment
};

struct TrajectorySpec {
  Point3 start{0.0, 0.0, 1.0};
  double start_yaw_deg{0.0};
  std::vector<TrajectorySegment> segments;
  double sweep_hz{5.0};
  double jitter_deg{0.0};  // per-sweep rotational jitter target (all axes)
  int sweeps{0};           // 0: derive from total path duration
};

// Continuous-time pose sampling along the trajectory; jitter angles are drawn
// per sweep boundary and interpolated linearly in between, so the pose is
// continuous and aggressive rotations persist through a sweep.
class TrajectorySampler {
 public:
  TrajectorySampler(const TrajectorySpec& spec, std::uint64_t seed);

  double duration() const { return duration_; }
  int sweep_count() const { return sweep_count_; }
  double sweep_period() const { return 1.0 / hz_; }
  PoseTransform pose_at(double t) const;

 private:
  Vec3 jitter_at(double t) const;

  std::vector<double> seg_start_times_;
  std::vector<double> seg_durations_;
  std::vector<Point3> seg_from_, seg_to_;
  std::vector<double> seg_yaw_start_, seg_yaw_rate_;
  std::vector<Vec3> jitter_targets_;  // one per sweep boundary
  double start_yaw_{0.0};
  Point3 start_{0.0, 0.0, 1.0};
  double hz_{5.0};
  double duration_{0.0};
  int sweep_count_{0};
};

struct SensorSpec {
  SensorModel model = SensorModel::vlp16();
  double range_max{50.0};
  double noise_sigma{0.0};
};

struct RayHit {
  double range{-1.0};  // < 0 means no hit
  SemanticLabel label{SemanticLabel::Unknown};
  std::int32_t instance{-1};  // tree index for Tree hits

  bool valid() const { return range > 0.0; }
};

// Closed-form nearest intersection against all scene surfaces.
RayHit cast_ray(const Scene& scene, const Point3& origin, const Vec3& dir,
                double range_max);

struct SweepTruth {
  PoseTransform pose;  // world pose of the sensor at sweep start
  std::vector<std::int32_t> instances;  // per cell (beam * w + col), -1 none
};

struct GroundTruthLog {
  std::vector<SweepTruth> sweeps;
  PoseTransform end_pose;  // pose at the end of the last sweep
  std::vector<Tree> trees;
};

struct SimulationResult {
  std::vector<OrganizedSweep> sweeps;
  GroundTruthLog truth;
  double sweep_period{0.2};
};

// One sweep: rays at bin-center azimuths, sensor pose sampled at the cell's
// rel_time. Noise streams are keyed per (seed, sweep, cell) so results are
// identical for any thread count. The serial variant is the reference
// implementation; the parallel variant distributes azimuth columns.
void simulate_sweep_serial(const Scene& scene, const TrajectorySampler& traj,
                           const SensorSpec& sensor, std::uint64_t noise_seed,
                           int sweep_index, OrganizedSweep& sweep,
                           SweepTruth& truth);
void simulate_sweep_parallel(const Scene& scene, const TrajectorySampler& traj,
                             const SensorSpec& sensor, std::uint64_t noise_seed,
                             int sweep_index, OrganizedSweep& sweep,
                             SweepTruth& truth, int threads);

SimulationResult simulate_sweeps(const Scene& scene, const TrajectorySpec& traj,
                                 const SensorSpec& sensor, std::uint64_t seed,
                                 int threads = 1);

// Writes sweep logs, label sidecars, truth instance sidecars, truth_poses.csv
// and truth_trees.csv into dir (created if missing).
void write_simulation(const SimulationResult& result,
                      const std::filesystem::path& dir);

}  // namespace sloam::sim
