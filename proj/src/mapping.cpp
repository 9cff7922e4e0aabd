#include "sloam/mapping.hpp"

#include "sloam/stats.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <limits>
#include <map>

namespace sloam {

void MappingSettings::validate() const {
  if (new_tree_min_pts < 1) throw Error("mapping.new_tree_min_pts: must be >= 1");
  if (min_obs < 1) throw Error("mapping.min_obs: must be >= 1");
  if (feature_window_sweeps < 0) {
    throw Error("mapping.feature_window_sweeps: must be >= 0");
  }
  if (!(breast_height > 0.0)) throw Error("mapping.breast_height_m: must be > 0");
}

namespace {

void trim_window(std::deque<std::pair<std::uint64_t, std::size_t>>& window,
                 std::uint64_t sweep_index, int window_sweeps,
                 std::size_t& drop_count) {
  drop_count = 0;
  if (window_sweeps <= 0) return;
  while (!window.empty() &&
         window.front().first + window_sweeps <= sweep_index) {
    drop_count += window.front().second;
    window.pop_front();
  }
}

OdometryState reference_from_map(const WorldMap& map,
                                 const OdometrySettings& settings) {
  OdometryState ref;
  ref.landmarks.reserve(map.landmarks.size());
  for (const WorldLandmark& l : map.landmarks) ref.landmarks.push_back(l.model);
  ref.tree_features = map.tree_features;
  ref.ground_features = map.ground_features;
  ref.initialized = true;
  ref.rebuild_grids(settings.assoc_gate_tree, settings.assoc_gate_ground);
  return ref;
}

}  // namespace

PoseTransform update_map(const OdometryOutput& odometry,
                         std::uint64_t sweep_index, WorldMap& map,
                         const OdometrySettings& odo_settings,
                         const MappingSettings& settings) {
  settings.validate();

  const PoseTransform guess =
      compose(map.trajectory.back(), odometry.delta);

  // Refine the world pose against the map with the odometry cost; features
  // are already motion compensated, so they warp with the full pose.
  PoseTransform world_pose = guess;
  OdometryState ref;
  const bool have_map = !map.landmarks.empty();
  if (have_map) {
    ref = reference_from_map(map, odo_settings);
    FeatureCloud cloud;
    for (const auto& pts : odometry.instance_points) {
      for (const Point3& p : pts) cloud.tree.push_back({p, 1.0});
    }
    cloud.ground.reserve(odometry.ground_points.size());
    for (const Point3& p : odometry.ground_points) {
      cloud.ground.push_back({p, 1.0});
    }
    world_pose = estimate_motion(cloud, ref, odo_settings, guess).first;
  }

  // Associate each tree feature (in world frame) to a map landmark.
  std::vector<CylinderGeometry> geometries;
  geometries.reserve(map.landmarks.size());
  for (const WorldLandmark& l : map.landmarks) {
    geometries.push_back(cylinder_geometry(l.model));
  }

  struct InstanceOutcome {
    std::vector<Point3> world_points;
    std::map<int, int> votes;  // landmark -> matched point count
    int unassigned{0};
    int assigned_landmark{-1};
  };
  std::vector<InstanceOutcome> outcomes(odometry.instance_points.size());

  for (std::size_t i = 0; i < odometry.instance_points.size(); ++i) {
    InstanceOutcome& oc = outcomes[i];
    oc.world_points.reserve(odometry.instance_points[i].size());
    for (const Point3& p : odometry.instance_points[i]) {
      const Point3 wp = transform_point(world_pose, p);
      oc.world_points.push_back(wp);
      int matched = -1;
      if (have_map) {
        if (odo_settings.association == AssociationMethod::FeatureNeighbor) {
          const int idx =
              ref.tree_grid.nearest(wp, odo_settings.assoc_gate_tree);
          if (idx >= 0) matched = ref.tree_features[idx].landmark;
        } else {
          double best = odo_settings.assoc_gate_tree;
          for (std::size_t g = 0; g < geometries.size(); ++g) {
            const double d = std::abs(cylinder_distance(geometries[g], wp));
            if (d < best) {
              best = d;
              matched = static_cast<int>(g);
            }
          }
        }
      }
      if (matched >= 0) {
        ++oc.votes[matched];
      } else {
        ++oc.unassigned;
      }
    }
  }

  // Admit new landmarks from large unassigned groups; credit matched
  // landmarks with this sweep's radius estimate (one instance per landmark,
  // the one with the most matched points).
  std::map<int, std::size_t> best_instance_for_landmark;
  for (std::size_t i = 0; i < outcomes.size(); ++i) {
    InstanceOutcome& oc = outcomes[i];
    if (oc.unassigned >= settings.new_tree_min_pts) {
      WorldLandmark fresh;
      fresh.model = transform_cylinder(world_pose, odometry.landmarks[i]);
      fresh.radius_history.push_back(fresh.model.radius());
      fresh.observations = 1;
      fresh.recent_points.emplace_back(sweep_index, oc.world_points);
      oc.assigned_landmark = static_cast<int>(map.landmarks.size());
      map.landmarks.push_back(std::move(fresh));
      continue;
    }
    int best_landmark = -1;
    int best_votes = 0;
    for (const auto& [landmark, votes] : oc.votes) {
      if (votes > best_votes) {
        best_votes = votes;
        best_landmark = landmark;
      }
    }
    if (best_landmark < 0) continue;  // small unmatched instance: dropped
    oc.assigned_landmark = best_landmark;
    const auto it = best_instance_for_landmark.find(best_landmark);
    if (it == best_instance_for_landmark.end() ||
        outcomes[it->second].votes[best_landmark] < best_votes) {
      best_instance_for_landmark[best_landmark] = i;
    }
  }

  for (const auto& [landmark_id, instance_id] : best_instance_for_landmark) {
    WorldLandmark& l = map.landmarks[landmark_id];
    l.radius_history.push_back(odometry.landmarks[instance_id].radius());
    ++l.observations;
    l.recent_points.emplace_back(sweep_index,
                                 outcomes[instance_id].world_points);
    if (settings.feature_window_sweeps > 0) {
      while (!l.recent_points.empty() &&
             l.recent_points.front().first + settings.feature_window_sweeps <=
                 sweep_index) {
        l.recent_points.pop_front();
      }
    }
    if (settings.refit_world_models) {
      std::vector<Point3> support;
      for (const auto& [k, pts] : l.recent_points) {
        support.insert(support.end(), pts.begin(), pts.end());
      }
      if (support.size() >= 6) {
        SolverSettings solver = odo_settings.solver;
        l.model = fit_cylinder(support, l.model, solver).first;
      }
    }
  }

  // Aggregate features (windowed).
  std::size_t drop = 0;
  trim_window(map.tree_window, sweep_index, settings.feature_window_sweeps,
              drop);
  if (drop > 0) {
    map.tree_features.erase(map.tree_features.begin(),
                            map.tree_features.begin() + drop);
  }
  std::size_t added_tree = 0;
  for (const InstanceOutcome& oc : outcomes) {
    if (oc.assigned_landmark < 0) continue;
    for (const Point3& p : oc.world_points) {
      map.tree_features.push_back({p, oc.assigned_landmark});
      ++added_tree;
    }
  }
  map.tree_window.emplace_back(sweep_index, added_tree);

  trim_window(map.ground_window, sweep_index, settings.feature_window_sweeps,
              drop);
  if (drop > 0) {
    map.ground_features.erase(map.ground_features.begin(),
                              map.ground_features.begin() + drop);
  }
  for (const Point3& p : odometry.ground_points) {
    map.ground_features.push_back(transform_point(world_pose, p));
  }
  map.ground_window.emplace_back(sweep_index, odometry.ground_points.size());

  map.trajectory.push_back(world_pose);
  return world_pose;
}

namespace {

// Local ground height near (x, y) from the mapped ground features; falls back
// to z = 0 when no neighborhood exists.
double ground_height_near(const WorldMap& map, double x, double y) {
  std::vector<std::pair<double, const Point3*>> near;
  for (const Point3& g : map.ground_features) {
    const double d = std::hypot(g.x() - x, g.y() - y);
    if (d < 3.0) near.emplace_back(d, &g);
  }
  if (near.size() < 3) {
    double best = std::numeric_limits<double>::max();
    double z = 0.0;
    for (const Point3& g : map.ground_features) {
      const double d = std::hypot(g.x() - x, g.y() - y);
      if (d < best) {
        best = d;
        z = g.z();
      }
    }
    return best < std::numeric_limits<double>::max() ? z : 0.0;
  }
  std::sort(near.begin(), near.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });
  const std::size_t k = std::min<std::size_t>(near.size(), 20);
  std::vector<Point3> neighborhood;
  neighborhood.reserve(k);
  for (std::size_t i = 0; i < k; ++i) neighborhood.push_back(*near[i].second);
  try {
    const PlaneModel plane = fit_plane_svd(neighborhood);
    if (std::abs(plane.normal.z()) > 0.1) {
      return -(plane.offset + plane.normal.x() * x + plane.normal.y() * y) /
             plane.normal.z();
    }
  } catch (const Error&) {
  }
  double z = 0.0;
  for (std::size_t i = 0; i < k; ++i) z += neighborhood[i].z();
  return z / static_cast<double>(k);
}

InventoryItem landmark_item(const WorldMap& map, int id,
                            const WorldLandmark& l, double breast_height) {
  InventoryItem item;
  item.id = id;
  item.dbh = 2.0 * median_of(l.radius_history);
  item.observations = l.observations;

  const CylinderGeometry geom = cylinder_geometry(l.model);
  item.axis = geom.axis;

  // Reference trunk location: centroid of the supporting points when
  // available, otherwise the axis point.
  Point3 trunk_ref = geom.axis_point;
  std::size_t n = 0;
  Point3 sum = Point3::Zero();
  for (const auto& [k, pts] : l.recent_points) {
    for (const Point3& p : pts) {
      sum += p;
      ++n;
    }
  }
  if (n > 0) trunk_ref = sum / static_cast<double>(n);

  const double ground_z = ground_height_near(map, trunk_ref.x(), trunk_ref.y());
  const double target_z = ground_z + breast_height;
  if (std::abs(geom.axis.z()) > 0.2) {
    // Project trunk_ref onto the axis, then slide along it to the target z.
    const double along = (trunk_ref - geom.axis_point).dot(geom.axis);
    const Point3 on_axis = geom.axis_point + along * geom.axis;
    const double t = (target_z - on_axis.z()) / geom.axis.z();
    item.position = on_axis + t * geom.axis;
  } else {
    item.position = Point3(trunk_ref.x(), trunk_ref.y(), target_z);
  }
  return item;
}

}  // namespace

InventoryReport dbh_report(const WorldMap& map, double breast_height,
                           int min_obs) {
  InventoryReport report;
  report.total_landmarks = static_cast<int>(map.landmarks.size());
  for (std::size_t i = 0; i < map.landmarks.size(); ++i) {
    const WorldLandmark& l = map.landmarks[i];
    if (l.observations < min_obs) {
      ++report.below_min_obs;
      continue;
    }
    report.trees.push_back(
        landmark_item(map, static_cast<int>(i), l, breast_height));
  }
  return report;
}

void export_map(const WorldMap& map, const std::filesystem::path& dir,
                double breast_height) {
  std::filesystem::create_directories(dir);

  // Registered point cloud.
  const std::size_t n = map.tree_features.size() + map.ground_features.size();
  std::ofstream ply(dir / "map.ply", std::ios::binary | std::ios::trunc);
  if (!ply) throw Error("cannot open for writing: " + (dir / "map.ply").string());
  ply << "ply\nformat binary_little_endian 1.0\n"
      << "element vertex " << n << "\n"
      << "property float x\nproperty float y\nproperty float z\n"
      << "property int instance_id\nend_header\n";
  const auto put_vertex = [&](const Point3& p, std::int32_t id) {
    float coords[3] = {static_cast<float>(p.x()), static_cast<float>(p.y()),
                       static_cast<float>(p.z())};
    ply.write(reinterpret_cast<const char*>(coords), sizeof(coords));
    ply.write(reinterpret_cast<const char*>(&id), sizeof(id));
  };
  for (const TaggedPoint& t : map.tree_features) {
    put_vertex(t.point, t.landmark);
  }
  for (const Point3& g : map.ground_features) put_vertex(g, -1);
  if (!ply) throw Error("write failed: " + (dir / "map.ply").string());

  // Landmark list.
  std::ofstream csv(dir / "landmarks.csv", std::ios::trunc);
  if (!csv) {
    throw Error("cannot open for writing: " + (dir / "landmarks.csv").string());
  }
  csv << "id,x,y,z,axis_x,axis_y,axis_z,dbh_m,obs_count\n";
  char line[320];
  for (std::size_t i = 0; i < map.landmarks.size(); ++i) {
    const InventoryItem item = landmark_item(
        map, static_cast<int>(i), map.landmarks[i], breast_height);
    std::snprintf(line, sizeof(line),
                  "%d,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%d\n", item.id,
                  item.position.x(), item.position.y(), item.position.z(),
                  item.axis.x(), item.axis.y(), item.axis.z(), item.dbh,
                  item.observations);
    csv << line;
  }
}

std::vector<std::pair<Point3, std::int32_t>> read_map_ply(
    const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open PLY: " + path.string());
  std::string line;
  std::size_t count = 0;
  bool header_done = false;
  while (std::getline(in, line)) {
    if (line.rfind("element vertex ", 0) == 0) {
      count = std::stoull(line.substr(15));
    }
    if (line == "end_header") {
      header_done = true;
      break;
    }
  }
  if (!header_done) throw Error("malformed PLY header: " + path.string());

  std::vector<std::pair<Point3, std::int32_t>> vertices;
  vertices.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    float coords[3];
    std::int32_t id;
    in.read(reinterpret_cast<char*>(coords), sizeof(coords));
    in.read(reinterpret_cast<char*>(&id), sizeof(id));
    if (!in) throw Error("truncated PLY payload: " + path.string());
    vertices.emplace_back(Point3(coords[0], coords[1], coords[2]), id);
  }
  return vertices;
}

}  // namespace sloam
