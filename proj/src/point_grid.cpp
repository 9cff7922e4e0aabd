#include "sloam/point_grid.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace sloam {

void PointGrid::build(const std::vector<Point3>& points, double cell_size) {
  points_ = points;
  cell_ = cell_size > 0.0 ? cell_size : 1.0;
  cells_.clear();
  cells_.reserve(points_.size());
  for (std::size_t i = 0; i < points_.size(); ++i) {
    cells_[key(coord(points_[i]))].push_back(static_cast<int>(i));
  }
}

PointGrid::CellCoord PointGrid::coord(const Point3& p) const {
  return {static_cast<std::int64_t>(std::floor(p.x() / cell_)),
          static_cast<std::int64_t>(std::floor(p.y() / cell_)),
          static_cast<std::int64_t>(std::floor(p.z() / cell_))};
}

std::uint64_t PointGrid::key(const CellCoord& c) {
  // 21 bits per axis, offset to non-negative.
  const std::uint64_t mask = (1ULL << 21) - 1;
  const std::uint64_t x = static_cast<std::uint64_t>(c.x + (1LL << 20)) & mask;
  const std::uint64_t y = static_cast<std::uint64_t>(c.y + (1LL << 20)) & mask;
  const std::uint64_t z = static_cast<std::uint64_t>(c.z + (1LL << 20)) & mask;
  return (x << 42) | (y << 21) | z;
}

void PointGrid::collect_ring(const CellCoord& center, std::int64_t ring,
                             std::vector<int>& out) const {
  const auto visit = [&](std::int64_t x, std::int64_t y, std::int64_t z) {
    auto it = cells_.find(key({x, y, z}));
    if (it != cells_.end()) {
      out.insert(out.end(), it->second.begin(), it->second.end());
    }
  };
  if (ring == 0) {
    visit(center.x, center.y, center.z);
    return;
  }
  // Shell of cells at Chebyshev distance `ring`, in a fixed scan order.
  for (std::int64_t dx = -ring; dx <= ring; ++dx) {
    for (std::int64_t dy = -ring; dy <= ring; ++dy) {
      for (std::int64_t dz = -ring; dz <= ring; ++dz) {
        if (std::max({std::llabs(dx), std::llabs(dy), std::llabs(dz)}) != ring)
          continue;
        visit(center.x + dx, center.y + dy, center.z + dz);
      }
    }
  }
}

int PointGrid::nearest(const Point3& q, double max_dist) const {
  const auto ids = k_nearest(q, 1, max_dist);
  return ids.empty() ? -1 : ids.front();
}

std::vector<int> PointGrid::k_nearest(const Point3& q, int k,
                                      double max_dist) const {
  std::vector<int> result;
  if (points_.empty() || k <= 0) return result;

  const CellCoord c = coord(q);
  const std::int64_t max_ring =
      static_cast<std::int64_t>(std::ceil(max_dist / cell_)) + 1;
  const double max_sq = max_dist * max_dist;

  // (squared distance, index) pairs kept sorted; ring expansion stops once
  // the next ring cannot beat the current k-th best.
  std::vector<std::pair<double, int>> best;
  std::vector<int> ring_ids;
  for (std::int64_t ring = 0; ring <= max_ring; ++ring) {
    if (static_cast<int>(best.size()) >= k) {
      const double ring_min = static_cast<double>(ring - 1) * cell_;
      if (ring_min > 0.0 && ring_min * ring_min > best[k - 1].first) break;
    }
    ring_ids.clear();
    collect_ring(c, ring, ring_ids);
    for (int id : ring_ids) {
      const double d2 = (points_[id] - q).squaredNorm();
      if (d2 > max_sq) continue;
      best.emplace_back(d2, id);
    }
    std::sort(best.begin(), best.end());
    if (static_cast<int>(best.size()) > k) best.resize(k);
  }

  result.reserve(best.size());
  for (const auto& [d2, id] : best) result.push_back(id);
  return result;
}

}  // namespace sloam
