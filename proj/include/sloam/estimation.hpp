#pragma once

#include "sloam/geometry.hpp"

#include <array>
#include <span>
#include <utility>
#include <vector>

namespace sloam {

struct SolverSettings {
  int max_iterations{50};
  double initial_damping{1e-4};
  double damping_increase{10.0};
  double damping_decrease{10.0};
  double update_tolerance{1e-8};
  double residual_tolerance{1e-14};

  void validate() const;
};

struct FitReport {
  bool converged{false};
  int iterations{0};
  double final_cost{0.0};
  bool condition_warning{false};
  // Axes flagged unobservable by the pose solver ([tx,ty,tz,rx,ry,rz]).
  std::array<bool, 6> degenerate_axes{};
  // Cost after each accepted step, starting with the initial cost.
  std::vector<double> cost_history;
};

// Geometric least-squares cylinder fit: minimizes the sum of squared
// approximate point-to-cylinder distances over (sqrt(standoff), azimuth,
// tilt, axis_angle, sqrt(curvature)) with a damped Gauss-Newton schedule
// (damping is raised when a step increases the cost, lowered when it
// decreases). The square-root parameterization keeps standoff >= 0 and
// curvature > 0 by construction. Requires at least 6 points.
std::pair<CylinderModel, FitReport> fit_cylinder(std::span<const Point3> points,
                                                 const CylinderModel& init,
                                                 const SolverSettings& settings);

// Plane through the centroid whose normal is the singular direction of least
// variance. The normal is canonicalized to z >= 0 (tie: x >= 0, then y >= 0).
// Throws "degenerate plane" for fewer than 3 points or (near-)collinear input.
PlaneModel fit_plane_svd(std::span<const Point3> points);

// Batch cylinder fitting over instances; the parallel variant distributes
// instances over threads and is bit-identical to the serial reference.
std::vector<std::pair<CylinderModel, FitReport>> fit_cylinders_serial(
    const std::vector<std::vector<Point3>>& instance_points,
    const std::vector<CylinderModel>& inits, const SolverSettings& settings);
std::vector<std::pair<CylinderModel, FitReport>> fit_cylinders_parallel(
    const std::vector<std::vector<Point3>>& instance_points,
    const std::vector<CylinderModel>& inits, const SolverSettings& settings,
    int threads);

}  // namespace sloam
