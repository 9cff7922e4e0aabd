#pragma once

#include "sloam/geometry.hpp"
#include "sloam/sweep.hpp"

#include <filesystem>
#include <vector>

namespace sloam {

// One labeled return inside a tree instance, with its range-image address.
struct InstanceCell {
  int beam{0}, col{0};
  Point3 point{Point3::Zero()};
  double rel_time{0.0};
};

// Cluster of contiguous Tree cells within a single beam.
struct TrellisVertex {
  int beam{0};
  int col_begin{0};   // first azimuth column of the run (may wrap)
  int col_count{0};
  std::vector<InstanceCell> cells;
  Point3 centroid{Point3::Zero()};
  Point3 focus{Point3::Zero()};  // mean of the two mutually farthest members
  double radius{0.0};            // half the max pairwise member distance
};

enum class EdgeWeightMode { CentroidDistance, FocusDistance };
enum class ExtractStrategy { Greedy, Viterbi };

struct TrellisEdge {
  int to{-1};
  double weight{0.0};
};

// Layered graph over beams: slices hold vertex ids per beam (low to high),
// out-edges connect a vertex to vertices in the next `lookahead` slices.
struct TrellisGraph {
  std::vector<TrellisVertex> vertices;
  std::vector<std::vector<int>> slices;         // per beam
  std::vector<std::vector<TrellisEdge>> edges;  // out-edges per vertex, sorted
};

struct TreeInstance {
  std::vector<int> route;  // vertex ids, ascending slices
  std::vector<Point3> route_focus;
  std::vector<double> route_radius;
  std::vector<bool> fork_flags;  // per route position
  std::vector<InstanceCell> points;
  double path_cost{0.0};

  std::size_t size() const { return points.size(); }
};

// Within each beam, maximal runs of consecutive Tree cells whose adjacent
// range difference stays below depth_tol form one vertex. Runs touching both
// ends of the azimuth range are merged across the wrap seam.
std::vector<std::vector<TrellisVertex>> build_vertices(
    const OrganizedSweep& sweep, double depth_tol);

TrellisGraph build_edges(std::vector<std::vector<TrellisVertex>> slices,
                         double max_edge_dist, int lookahead = 2,
                         EdgeWeightMode mode = EdgeWeightMode::CentroidDistance);

// Routes through the trellis become instances when they span at least
// min_path_len slices at total cost at most max_path_cost. The greedy
// strategy follows minimum-weight outgoing edges (ties: smaller target slice,
// then smaller target centroid azimuth); Viterbi solves for optimal routes
// and is kept as a cross-checking strategy.
std::vector<TreeInstance> extract_instances(
    const TrellisGraph& graph, int min_path_len, double max_path_cost,
    ExtractStrategy strategy = ExtractStrategy::Greedy);

// Axis from the principal direction of the route focus points (orthogonal
// distance regression), radius from the median vertex radius. Falls back to a
// vertical axis when the focus points coincide.
CylinderModel initial_cylinder_guess(const TreeInstance& instance);

// Shared core of initial_cylinder_guess, also usable to initialize fits from
// externally computed focus points.
CylinderModel cylinder_guess_from_focus_points(
    const std::vector<Point3>& focus_points, double radius);

// Debug dump: instance_id,beam,col,x,y,z.
void write_instances_csv(const std::vector<TreeInstance>& instances,
                         const std::filesystem::path& path);

}  // namespace sloam
