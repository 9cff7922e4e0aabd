#include "sloam/sim.hpp"

#include "sloam/parallel.hpp"
#include "sloam/rng.hpp"
#include "sloam/segmentation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

namespace sloam::sim {

namespace {
constexpr double kRayMinRange = 0.05;
}

double GroundModel::height_at(double x, double y) const {
  double z = slope_x * x + slope_y * y + offset;
  if (!is_plane()) {
    const double f = 2.0 * M_PI / wavelength;
    z += amplitude * std::sin(f * x) * std::sin(f * y);
  }
  return z;
}

Scene generate_forest(const ForestSpec& spec) {
  if (spec.tree_count < 0) throw Error("forest.tree_count: must be >= 0");
  if (!(spec.area_m2 > 0.0)) throw Error("forest.area_m2: must be > 0");
  if (!(spec.diameter_min > 0.0) || spec.diameter_max < spec.diameter_min) {
    throw Error("forest.diameter range: require 0 < min <= max");
  }

  Scene scene;
  scene.ground = spec.ground;
  scene.shrub_radius = spec.shrub_radius;
  scene.half_extent = std::sqrt(spec.area_m2) / 2.0;

  Rng rng(spec.seed);
  const double h = scene.half_extent;

  const long max_attempts = static_cast<long>(spec.tree_count) * 1000 + 1000;
  long attempts = 0;
  while (static_cast<int>(scene.trees.size()) < spec.tree_count) {
    if (++attempts > max_attempts) {
      throw Error("forest spacing infeasible: placed " +
                  std::to_string(scene.trees.size()) + " of " +
                  std::to_string(spec.tree_count) + " trees after " +
                  std::to_string(attempts - 1) + " attempts (min_spacing=" +
                  std::to_string(spec.min_spacing) + ")");
    }
    const double x = rng.uniform(-h, h);
    const double y = rng.uniform(-h, h);
    const double radius = 0.5 * rng.uniform(spec.diameter_min, spec.diameter_max);
    const double tilt = rng.uniform(0.0, spec.tilt_max_deg * M_PI / 180.0);
    const double tilt_az = rng.uniform(0.0, 2.0 * M_PI);
    const double height = rng.uniform(spec.tree_height_min, spec.tree_height_max);

    bool ok = true;
    for (const Tree& t : scene.trees) {
      const double dx = t.base.x() - x, dy = t.base.y() - y;
      if (std::hypot(dx, dy) < spec.min_spacing) {
        ok = false;
        break;
      }
    }
    if (ok) {
      for (const KeepoutDisc& d : spec.keepout) {
        if (std::hypot(x - d.x, y - d.y) < d.radius + radius) {
          ok = false;
          break;
        }
      }
    }
    if (!ok) continue;

    Tree tree;
    tree.base = Point3(x, y, spec.ground.height_at(x, y));
    tree.axis = Vec3(std::sin(tilt) * std::cos(tilt_az),
                     std::sin(tilt) * std::sin(tilt_az), std::cos(tilt));
    tree.radius = radius;
    tree.height = height;
    scene.trees.push_back(tree);
  }

  const long shrub_count =
      static_cast<long>(std::llround(spec.shrub_density * spec.area_m2));
  scene.shrubs.reserve(shrub_count);
  for (long i = 0; i < shrub_count; ++i) {
    const double x = rng.uniform(-h, h);
    const double y = rng.uniform(-h, h);
    const double z = spec.ground.height_at(x, y) +
                     rng.uniform(spec.shrub_height_min, spec.shrub_height_max);
    bool inside_trunk = false;
    for (const Tree& t : scene.trees) {
      if (std::hypot(x - t.base.x(), y - t.base.y()) < t.radius + 0.05) {
        inside_trunk = true;
        break;
      }
    }
    if (!inside_trunk) scene.shrubs.emplace_back(x, y, z);
  }
  return scene;
}

// --- trajectory --------------------------------------------------------------

TrajectorySampler::TrajectorySampler(const TrajectorySpec& spec,
                                     std::uint64_t seed)
    : start_yaw_(spec.start_yaw_deg * M_PI / 180.0),
      start_(spec.start),
      hz_(spec.sweep_hz) {
  if (!(hz_ > 0.0)) throw Error("trajectory.sweep_hz: must be > 0");

  Point3 from = spec.start;
  double t0 = 0.0;
  double yaw = start_yaw_;
  for (const TrajectorySegment& seg : spec.segments) {
    if (!(seg.speed > 0.0)) {
      throw Error("trajectory.segments.speed: must be > 0");
    }
    const double len = (seg.to - from).norm();
    const double dur = len / seg.speed;
    seg_start_times_.push_back(t0);
    seg_durations_.push_back(dur);
    seg_from_.push_back(from);
    seg_to_.push_back(seg.to);
    seg_yaw_start_.push_back(yaw);
    seg_yaw_rate_.push_back(seg.yaw_rate_dps * M_PI / 180.0);
    yaw += seg_yaw_rate_.back() * dur;
    t0 += dur;
    from = seg.to;
  }
  duration_ = t0;

  sweep_count_ = spec.sweeps > 0
                     ? spec.sweeps
                     : static_cast<int>(std::floor(duration_ * hz_ + 1e-9));
  if (sweep_count_ <= 0) {
    throw Error("trajectory yields zero sweeps; set segments or sweeps");
  }

  const double jitter = spec.jitter_deg * M_PI / 180.0;
  jitter_targets_.assign(sweep_count_ + 1, Vec3::Zero());
  for (int s = 1; s <= sweep_count_; ++s) {
    Rng r(mix_seed(seed ^ 0x4A495454ULL, static_cast<std::uint64_t>(s)));
    jitter_targets_[s] = Vec3(r.uniform(-jitter, jitter),
                              r.uniform(-jitter, jitter),
                              r.uniform(-jitter, jitter));
  }
}

Vec3 TrajectorySampler::jitter_at(double t) const {
  const double sweeps = t * hz_;
  int s = static_cast<int>(std::floor(sweeps));
  s = std::clamp(s, 0, sweep_count_ - 1);
  const double f = std::clamp(sweeps - s, 0.0, 1.0);
  return (1.0 - f) * jitter_targets_[s] + f * jitter_targets_[s + 1];
}

PoseTransform TrajectorySampler::pose_at(double t) const {
  Point3 pos = start_;
  double yaw = start_yaw_;
  if (!seg_start_times_.empty()) {
    if (t >= duration_) {
      pos = seg_to_.back();
      yaw = seg_yaw_start_.back() + seg_yaw_rate_.back() * seg_durations_.back();
    } else {
      std::size_t i = 0;
      while (i + 1 < seg_start_times_.size() && t >= seg_start_times_[i + 1]) {
        ++i;
      }
      const double dt = std::clamp(t - seg_start_times_[i], 0.0,
                                   seg_durations_[i]);
      const double f =
          seg_durations_[i] > 0.0 ? dt / seg_durations_[i] : 0.0;
      pos = seg_from_[i] + f * (seg_to_[i] - seg_from_[i]);
      yaw = seg_yaw_start_[i] + seg_yaw_rate_[i] * dt;
    }
  }
  const Vec3 j = jitter_at(std::clamp(t, 0.0, sweep_count_ / hz_));
  return {pos, Vec3(j.x(), j.y(), yaw + j.z())};
}

// --- ray casting -------------------------------------------------------------

namespace {

// Nearest t > kRayMinRange with the side hit inside the axial extent.
double ray_cylinder(const Point3& o, const Vec3& d, const Tree& tree) {
  const Vec3 q = o - tree.base;
  const double qa = q.dot(tree.axis);
  const double da = d.dot(tree.axis);
  const Vec3 u = d - da * tree.axis;
  const Vec3 v = q - qa * tree.axis;
  const double a = u.squaredNorm();
  if (a < 1e-14) return -1.0;  // ray parallel to the axis
  const double b = 2.0 * u.dot(v);
  const double c = v.squaredNorm() - tree.radius * tree.radius;
  const double disc = b * b - 4.0 * a * c;
  if (disc < 0.0) return -1.0;
  const double sq = std::sqrt(disc);
  for (const double t : {(-b - sq) / (2.0 * a), (-b + sq) / (2.0 * a)}) {
    if (t <= kRayMinRange) continue;
    const double axial = qa + t * da;
    if (axial >= 0.0 && axial <= tree.height) return t;
  }
  return -1.0;
}

double ray_sphere(const Point3& o, const Vec3& d, const Point3& center,
                  double radius) {
  const Vec3 oc = o - center;
  const double b = 2.0 * d.dot(oc);
  const double c = oc.squaredNorm() - radius * radius;
  const double disc = b * b - 4.0 * c;
  if (disc < 0.0) return -1.0;
  const double sq = std::sqrt(disc);
  for (const double t : {(-b - sq) / 2.0, (-b + sq) / 2.0}) {
    if (t > kRayMinRange) return t;
  }
  return -1.0;
}

double ray_ground(const Point3& o, const Vec3& d, const GroundModel& g,
                  double range_max) {
  if (g.is_plane()) {
    const double denom = d.z() - g.slope_x * d.x() - g.slope_y * d.y();
    if (std::abs(denom) < 1e-14) return -1.0;
    const double f0 = o.z() - g.slope_x * o.x() - g.slope_y * o.y() - g.offset;
    const double t = -f0 / denom;
    return t > kRayMinRange ? t : -1.0;
  }
  // Rolling field: march for a sign change, then bisect.
  const auto above = [&](double t) {
    const Point3 p = o + t * d;
    return p.z() - g.height_at(p.x(), p.y());
  };
  const double step = std::min(0.25, g.wavelength / 8.0);
  double t_prev = kRayMinRange;
  double f_prev = above(t_prev);
  if (f_prev < 0.0) return t_prev;  // starting below the surface
  for (double t = t_prev + step; t <= range_max + step; t += step) {
    const double f = above(t);
    if (f < 0.0) {
      double lo = t_prev, hi = t;
      for (int i = 0; i < 80; ++i) {
        const double mid = 0.5 * (lo + hi);
        (above(mid) >= 0.0 ? lo : hi) = mid;
      }
      return 0.5 * (lo + hi);
    }
    t_prev = t;
    f_prev = f;
  }
  return -1.0;
}

}  // namespace

RayHit cast_ray(const Scene& scene, const Point3& origin, const Vec3& dir,
                double range_max) {
  RayHit hit;
  double best = range_max;

  const double tg = ray_ground(origin, dir, scene.ground, range_max);
  if (tg > 0.0 && tg < best) {
    best = tg;
    hit = {tg, SemanticLabel::Ground, -1};
  }
  for (std::size_t i = 0; i < scene.trees.size(); ++i) {
    const double t = ray_cylinder(origin, dir, scene.trees[i]);
    if (t > 0.0 && t < best) {
      best = t;
      hit = {t, SemanticLabel::Tree, static_cast<std::int32_t>(i)};
    }
  }
  for (const Point3& s : scene.shrubs) {
    const double t = ray_sphere(origin, dir, s, scene.shrub_radius);
    if (t > 0.0 && t < best) {
      best = t;
      hit = {t, SemanticLabel::Other, -1};
    }
  }
  return hit;
}

// --- sweep generation --------------------------------------------------------

namespace {

void trace_column(const Scene& scene, const TrajectorySampler& traj,
                  const SensorSpec& sensor, std::uint64_t noise_seed,
                  int sweep_index, int col, OrganizedSweep& sweep,
                  SweepTruth& truth) {
  const int w = sensor.model.azimuth_bins;
  const int beams = sensor.model.beams();
  const double rel = static_cast<double>(col) / w;
  const double t = (sweep_index + rel) * traj.sweep_period();
  const PoseTransform pose = traj.pose_at(t);
  const Mat3 rot = rotation_matrix(pose);

  const double az = 2.0 * M_PI * (col + 0.5) / w;
  const double caz = std::cos(az), saz = std::sin(az);

  for (int b = 0; b < beams; ++b) {
    const double e = sensor.model.beam_elevations[b];
    const Vec3 dir_sensor(std::cos(e) * caz, std::cos(e) * saz, std::sin(e));
    const Vec3 dir_world = rot * dir_sensor;
    const RayHit hit =
        cast_ray(scene, pose.translation, dir_world, sensor.range_max);
    if (!hit.valid()) continue;

    double range = hit.range;
    if (sensor.noise_sigma > 0.0) {
      Rng rng(mix_seed(mix_seed(noise_seed, sweep_index),
                       static_cast<std::uint64_t>(b) * w + col));
      range += rng.normal(sensor.noise_sigma);
      if (range < kRayMinRange) continue;
    }
    sweep.set_cell(b, col, dir_sensor * range, hit.label, rel);
    truth.instances[static_cast<std::size_t>(b) * w + col] = hit.instance;
  }
}

void init_sweep(const TrajectorySampler& traj, const SensorSpec& sensor,
                int sweep_index, OrganizedSweep& sweep, SweepTruth& truth) {
  const int w = sensor.model.azimuth_bins;
  sweep = OrganizedSweep(sensor.model.beams(), w,
                         sweep_index * traj.sweep_period(),
                         static_cast<std::uint64_t>(sweep_index));
  truth.pose = traj.pose_at(sweep_index * traj.sweep_period());
  truth.instances.assign(static_cast<std::size_t>(sensor.model.beams()) * w,
                         -1);
}

}  // namespace

void simulate_sweep_serial(const Scene& scene, const TrajectorySampler& traj,
                           const SensorSpec& sensor, std::uint64_t noise_seed,
                           int sweep_index, OrganizedSweep& sweep,
                           SweepTruth& truth) {
  init_sweep(traj, sensor, sweep_index, sweep, truth);
  for (int col = 0; col < sensor.model.azimuth_bins; ++col) {
    trace_column(scene, traj, sensor, noise_seed, sweep_index, col, sweep,
                 truth);
  }
}

void simulate_sweep_parallel(const Scene& scene, const TrajectorySampler& traj,
                             const SensorSpec& sensor, std::uint64_t noise_seed,
                             int sweep_index, OrganizedSweep& sweep,
                             SweepTruth& truth, int threads) {
  init_sweep(traj, sensor, sweep_index, sweep, truth);
  parallel_for(static_cast<std::size_t>(sensor.model.azimuth_bins), threads,
               [&](std::size_t col) {
                 trace_column(scene, traj, sensor, noise_seed, sweep_index,
                              static_cast<int>(col), sweep, truth);
               });
}

SimulationResult simulate_sweeps(const Scene& scene, const TrajectorySpec& traj,
                                 const SensorSpec& sensor, std::uint64_t seed,
                                 int threads) {
  const TrajectorySampler sampler(traj, mix_seed(seed, 0x545241ULL));
  const std::uint64_t noise_seed = mix_seed(seed, 0x4E4F495345ULL);

  SimulationResult result;
  result.sweeps.resize(sampler.sweep_count());
  result.truth.sweeps.resize(sampler.sweep_count());
  for (int k = 0; k < sampler.sweep_count(); ++k) {
    simulate_sweep_parallel(scene, sampler, sensor, noise_seed, k,
                            result.sweeps[k], result.truth.sweeps[k], threads);
  }
  result.truth.end_pose =
      sampler.pose_at(sampler.sweep_count() * sampler.sweep_period());
  result.truth.trees = scene.trees;
  result.sweep_period = sampler.sweep_period();
  return result;
}

// --- file emission -----------------------------------------------------------

namespace {

std::string indexed_name(const char* stem, int k, const char* ext) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%s_%06d.%s", stem, k, ext);
  return buf;
}

void write_pose_row(std::ofstream& out, int k, double t,
                    const PoseTransform& pose) {
  char line[256];
  std::snprintf(line, sizeof(line), "%d,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g\n",
                k, t, pose.translation.x(), pose.translation.y(),
                pose.translation.z(), pose.rotation.x(), pose.rotation.y(),
                pose.rotation.z());
  out << line;
}

}  // namespace

void write_simulation(const SimulationResult& result,
                      const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);

  for (std::size_t k = 0; k < result.sweeps.size(); ++k) {
    const OrganizedSweep& sweep = result.sweeps[k];
    write_sweep(sweep, dir / indexed_name("sweep", static_cast<int>(k), "bin"));
    write_label_sidecar(sweep,
                        dir / indexed_name("labels", static_cast<int>(k), "csv"));

    // Truth instance sidecar: beam,col,tree_id for Tree cells.
    std::ofstream inst(dir / indexed_name("truth_instances",
                                          static_cast<int>(k), "csv"));
    inst << "beam,col,tree_id\n";
    const SweepTruth& truth = result.truth.sweeps[k];
    for (int b = 0; b < sweep.beams(); ++b) {
      for (int c = 0; c < sweep.azimuth_bins(); ++c) {
        const std::int32_t id =
            truth.instances[static_cast<std::size_t>(b) * sweep.azimuth_bins() +
                            c];
        if (id >= 0) inst << b << ',' << c << ',' << id << '\n';
      }
    }
  }

  std::ofstream poses(dir / "truth_poses.csv");
  poses << "k,t,tx,ty,tz,thx,thy,thz\n";
  for (std::size_t k = 0; k < result.truth.sweeps.size(); ++k) {
    write_pose_row(poses, static_cast<int>(k), result.sweeps[k].start_time(),
                   result.truth.sweeps[k].pose);
  }
  const double end_time = result.sweeps.size() * result.sweep_period;
  write_pose_row(poses, static_cast<int>(result.truth.sweeps.size()), end_time,
                 result.truth.end_pose);

  std::ofstream trees(dir / "truth_trees.csv");
  trees << "id,x,y,z,axis_x,axis_y,axis_z,diameter_m\n";
  char line[320];
  for (std::size_t i = 0; i < result.truth.trees.size(); ++i) {
    const Tree& t = result.truth.trees[i];
    std::snprintf(line, sizeof(line),
                  "%zu,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g\n", i, t.base.x(),
                  t.base.y(), t.base.z(), t.axis.x(), t.axis.y(), t.axis.z(),
                  2.0 * t.radius);
    trees << line;
  }
}

}  // namespace sloam::sim
