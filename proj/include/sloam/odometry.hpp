#pragma once

#include "sloam/estimation.hpp"
#include "sloam/geometry.hpp"
#include "sloam/point_grid.hpp"
#include "sloam/trellis.hpp"

#include <optional>
#include <vector>

namespace sloam {

enum class AssociationMethod {
  ModelDistance,    // smallest orthogonal distance to a landmark model
  FeatureNeighbor,  // landmark of the nearest previous-sweep feature point
};

struct OdometrySettings {
  int n_odom{4};  // odometry executions per sweep
  AssociationMethod association{AssociationMethod::FeatureNeighbor};
  int outer_iterations{6};  // re-association rounds inside one execution
  double assoc_gate_tree{1.0};
  double assoc_gate_ground{0.5};
  int ground_k_neighbors{5};
  SolverSettings solver;
  double degeneracy_threshold{1e-6};  // relative eigenvalue cutoff
  int threads{1};

  void validate() const;
};

// Per-sweep extracted features plus the landmark models aligned with the
// instances.
struct SweepFeatures {
  std::vector<TreeInstance> tree_instances;
  std::vector<TimedPoint> ground_points;
  std::vector<CylinderModel> landmarks;  // 1:1 with tree_instances

  std::size_t tree_point_count() const {
    std::size_t n = 0;
    for (const TreeInstance& t : tree_instances) n += t.size();
    return n;
  }
};

// Flattened feature view consumed by the pose optimization.
struct FeatureCloud {
  std::vector<TimedPoint> tree;
  std::vector<TimedPoint> ground;
};

FeatureCloud flatten(const SweepFeatures& features);

struct TaggedPoint {
  Point3 point{Point3::Zero()};
  int landmark{-1};
};

// Reference data for one pose estimation: the previous sweep (odometry) or
// the world map (mapping), expressed in the frame being aligned to.
struct OdometryState {
  std::vector<CylinderModel> landmarks;
  std::vector<TaggedPoint> tree_features;  // each tagged with its landmark
  std::vector<Point3> ground_features;
  PoseTransform prev_delta;
  bool initialized{false};

  PointGrid tree_grid;
  PointGrid ground_grid;
  void rebuild_grids(double tree_cell, double ground_cell);
};

// Frequency-balancing weights (gamma / sum_delta and its reciprocal); neutral
// (1, 1) when either feature set is empty.
std::pair<double, double> balance_weights(std::size_t tree_points,
                                          std::size_t ground_points);

// Associated residuals for one linearization round. Points are stored
// motion-compensated by the association guess; the solver estimates a rigid
// correction on top (composing it into the delta each round), which keeps the
// update well conditioned for any landmark azimuth distribution.
struct ResidualSet {
  struct TreeResidual {
    Point3 compensated;
    int landmark;
    CylinderGeometry geometry;
  };
  struct GroundResidual {
    Point3 compensated;
    PlaneModel plane;
  };
  std::vector<TreeResidual> tree;
  std::vector<GroundResidual> ground;
  double lambda_tree{1.0};
  double lambda_ground{1.0};
  std::size_t tree_feature_count{0};    // sum of instance sizes
  std::size_t ground_feature_count{0};  // gamma
};

// Landmark index for a tree feature (-1 if unmatched): the point is first
// projected by the interpolated guess, then matched per the chosen method and
// gated.
int associate_tree(const Point3& p, double rel_time, const OdometryState& state,
                   AssociationMethod method, const PoseTransform& guess,
                   double gate);

// Local plane fit over the k nearest reference ground neighbors of the
// projected point; nullopt when gated out or the neighborhood is degenerate.
std::optional<PlaneModel> associate_ground(const Point3& p, double rel_time,
                                           const OdometryState& state,
                                           const PoseTransform& guess,
                                           int k_neighbors, double gate);

// Associates every feature under the pose guess (parallel over points).
ResidualSet assemble_residuals(const FeatureCloud& features,
                               const OdometryState& state,
                               const PoseTransform& guess,
                               const OdometrySettings& settings);

struct NormalEquations {
  Mat6 jtj = Mat6::Zero();
  Vec6 jtr = Vec6::Zero();
  double cost{0.0};
  std::size_t rows{0};
};

// Weighted Gauss-Newton system of the pose cost at the given rigid correction
// (applied to the compensated points). The serial variant accumulates rows
// directly in order; the parallel variant fills per-row slots concurrently
// and reduces them in the same order, so both produce bit-identical results.
NormalEquations build_normal_equations_serial(const ResidualSet& residuals,
                                              const PoseTransform& correction);
NormalEquations build_normal_equations_parallel(const ResidualSet& residuals,
                                                const PoseTransform& correction,
                                                int threads);

double residual_cost(const ResidualSet& residuals,
                     const PoseTransform& correction);

// Pose optimization with re-association on every outer iteration. Axes that
// the residuals do not constrain (by eigenvalue analysis of JtJ) keep their
// predicted values and are flagged in the report.
std::pair<PoseTransform, FitReport> estimate_motion(
    const FeatureCloud& features, const OdometryState& state,
    const OdometrySettings& settings, const PoseTransform& prediction);

// Per-sweep odometry output, expressed in the frame at the end of the sweep
// (the next sweep's start frame).
struct OdometryOutput {
  std::vector<CylinderModel> landmarks;  // fitted per instance
  std::vector<std::vector<Point3>> instance_points;
  std::vector<Point3> ground_points;
  PoseTransform delta;  // motion over the sweep
  FitReport report;
  int odometry_passes{0};
};

// One full sweep of semantic lidar odometry: n_odom alternations of model
// update (approximate-distance least squares per instance) and motion
// estimation, then projection of models and features into the next frame.
// The state is replaced by the projected sweep.
OdometryOutput run_odometry_sweep(const SweepFeatures& features,
                                  OdometryState& state,
                                  const OdometrySettings& settings);

}  // namespace sloam
