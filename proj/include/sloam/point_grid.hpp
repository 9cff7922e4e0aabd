#pragma once

#include "sloam/types.hpp"

#include <cstdint>
#include <unordered_map>
#include <vector>

namespace sloam {

// Uniform hash grid over 3D points for nearest-neighbor and k-NN queries.
// Queries are deterministic: ties are broken by the smaller point index.
class PointGrid {
 public:
  PointGrid() = default;

  void build(const std::vector<Point3>& points, double cell_size);

  bool empty() const { return points_.empty(); }
  std::size_t size() const { return points_.size(); }
  const Point3& point(int i) const { return points_[i]; }

  // Index of the nearest point within max_dist, or -1.
  int nearest(const Point3& q, double max_dist) const;

  // Indices of up to k nearest points within max_dist, ordered by distance
  // (ties by index).
  std::vector<int> k_nearest(const Point3& q, int k, double max_dist) const;

 private:
  struct CellCoord {
    std::int64_t x, y, z;
  };
  CellCoord coord(const Point3& p) const;
  static std::uint64_t key(const CellCoord& c);
  void collect_ring(const CellCoord& center, std::int64_t ring,
                    std::vector<int>& out) const;

  std::vector<Point3> points_;
  double cell_{1.0};
  std::unordered_map<std::uint64_t, std::vector<int>> cells_;
};

}  // namespace sloam
