#include "sloam/rng.hpp"
#include "sloam/sim.hpp"

#include <doctest.h>

#include <cmath>

using namespace sloam;
using namespace sloam::sim;

namespace {

// Independent brute-force ray caster: marches the implicit inside/outside
// functions of every surface and refines sign changes by bisection. Shares no
// code with the closed-form caster.
double march_ray(const Scene& scene, const Point3& o, const Vec3& d,
                 double range_max) {
  const auto inside_any = [&](const Point3& p) {
    if (p.z() < scene.ground.height_at(p.x(), p.y())) return true;
    for (const Tree& t : scene.trees) {
      const Vec3 q = p - t.base;
      const double axial = q.dot(t.axis);
      if (axial < 0.0 || axial > t.height) continue;
      if ((q - axial * t.axis).squaredNorm() < t.radius * t.radius) return true;
    }
    for (const Point3& s : scene.shrubs) {
      if ((p - s).squaredNorm() < scene.shrub_radius * scene.shrub_radius) {
        return true;
      }
    }
    return false;
  };

  const double coarse = 0.01;
  double t_prev = 0.06;
  if (inside_any(o + t_prev * d)) return t_prev;
  for (double t = t_prev + coarse; t <= range_max; t += coarse) {
    if (inside_any(o + t * d)) {
      double lo = t_prev, hi = t;
      for (int i = 0; i < 60; ++i) {
        const double mid = 0.5 * (lo + hi);
        (inside_any(o + mid * d) ? hi : lo) = mid;
      }
      return 0.5 * (lo + hi);
    }
    t_prev = t;
  }
  return -1.0;
}

ForestSpec small_forest() {
  ForestSpec spec;
  spec.seed = 42;
  spec.area_m2 = 900.0;
  spec.tree_count = 12;
  spec.shrub_density = 0.2;
  spec.keepout.push_back({0.0, 0.0, 2.0});
  return spec;
}

}  // namespace

TEST_CASE("forest generation") {
  SUBCASE("deterministic for a fixed seed") {
    const Scene a = generate_forest(small_forest());
    const Scene b = generate_forest(small_forest());
    REQUIRE(a.trees.size() == b.trees.size());
    for (std::size_t i = 0; i < a.trees.size(); ++i) {
      CHECK(a.trees[i].base == b.trees[i].base);
      CHECK(a.trees[i].radius == b.trees[i].radius);
    }
    REQUIRE(a.shrubs.size() == b.shrubs.size());
    for (std::size_t i = 0; i < a.shrubs.size(); ++i) {
      CHECK(a.shrubs[i] == b.shrubs[i]);
    }
  }

  SUBCASE("pairwise spacing holds") {
    ForestSpec spec;
    spec.seed = 7;
    spec.area_m2 = 1600.0;
    spec.tree_count = 30;
    spec.min_spacing = 2.0;
    const Scene scene = generate_forest(spec);
    REQUIRE(scene.trees.size() == 30);
    for (std::size_t i = 0; i < scene.trees.size(); ++i) {
      for (std::size_t j = i + 1; j < scene.trees.size(); ++j) {
        const double d = std::hypot(
            scene.trees[i].base.x() - scene.trees[j].base.x(),
            scene.trees[i].base.y() - scene.trees[j].base.y());
        CHECK(d >= 2.0);
      }
    }
  }

  SUBCASE("tree bases sit on the sloped ground") {
    ForestSpec spec = small_forest();
    spec.ground.slope_x = std::tan(10.0 * M_PI / 180.0);
    const Scene scene = generate_forest(spec);
    for (const Tree& t : scene.trees) {
      CHECK(std::abs(t.base.z() -
                     scene.ground.height_at(t.base.x(), t.base.y())) < 1e-6);
    }
  }

  SUBCASE("infeasible spacing is diagnosed") {
    ForestSpec spec;
    spec.area_m2 = 25.0;
    spec.tree_count = 100;
    spec.min_spacing = 3.0;
    CHECK_THROWS_WITH_AS(generate_forest(spec), doctest::Contains("infeasible"),
                         Error);
  }
}

TEST_CASE("ray casting against the scene") {
  const Scene scene = generate_forest(small_forest());

  SUBCASE("matches the brute-force marcher on random rays") {
    Rng rng(1234);
    int hits = 0;
    for (int i = 0; i < 1000; ++i) {
      const Point3 o(rng.uniform(-5, 5), rng.uniform(-5, 5),
                     rng.uniform(0.5, 2.0));
      const double az = rng.uniform(0, 2 * M_PI);
      const double el = rng.uniform(-0.3, 0.25);
      const Vec3 d(std::cos(el) * std::cos(az), std::cos(el) * std::sin(az),
                   std::sin(el));
      const RayHit hit = cast_ray(scene, o, d, 40.0);
      const double marched = march_ray(scene, o, d, 40.0);
      if (hit.valid()) {
        ++hits;
        REQUIRE(marched > 0.0);
        REQUIRE(std::abs(hit.range - marched) < 1e-6);
      } else {
        REQUIRE(marched < 0.0);
      }
    }
    CHECK(hits > 200);  // scene dense enough for the check to mean something
  }

  SUBCASE("single tree dead ahead") {
    Scene solo;
    solo.ground.offset = -100.0;  // push the ground away
    Tree t;
    t.base = Point3(5.0, 0.0, -100.0);
    t.axis = Vec3(0, 0, 1);
    t.radius = 0.2;
    t.height = 200.0;
    solo.trees.push_back(t);
    const RayHit hit = cast_ray(solo, Point3(0, 0, 0), Vec3(1, 0, 0), 40.0);
    REQUIRE(hit.valid());
    CHECK(hit.range == doctest::Approx(4.8));
    CHECK(hit.label == SemanticLabel::Tree);
    CHECK(hit.instance == 0);
  }
}

TEST_CASE("sweep simulation") {
  const Scene scene = generate_forest(small_forest());

  TrajectorySpec traj;
  traj.start = Point3(0, 0, 1.0);
  traj.sweeps = 3;
  SensorSpec sensor;
  sensor.model = SensorModel::vlp16(720);

  SUBCASE("noise-free flat ground points satisfy z == 0") {
    Scene flat;  // no trees, no shrubs
    const SimulationResult r = simulate_sweeps(flat, traj, sensor, 5, 1);
    REQUIRE(r.sweeps.size() == 3);
    std::size_t ground_cells = 0;
    for (const auto& sweep : r.sweeps) {
      for (int b = 0; b < sweep.beams(); ++b) {
        for (int c = 0; c < sweep.azimuth_bins(); ++c) {
          if (!sweep.present(b, c)) continue;
          REQUIRE(sweep.cell(b, c).label == SemanticLabel::Ground);
          // Stationary upright sensor at z=1: sensor-frame z + 1 == 0.
          REQUIRE(std::abs(sweep.cell(b, c).point().z() + 1.0) < 1e-5);
          ++ground_cells;
        }
      }
    }
    CHECK(ground_cells > 1000);
  }

  SUBCASE("deterministic at fixed seed, independent of threads") {
    SensorSpec noisy = sensor;
    noisy.noise_sigma = 0.02;
    const SimulationResult a = simulate_sweeps(scene, traj, noisy, 99, 1);
    const SimulationResult b = simulate_sweeps(scene, traj, noisy, 99, 4);
    REQUIRE(a.sweeps.size() == b.sweeps.size());
    for (std::size_t k = 0; k < a.sweeps.size(); ++k) {
      for (int bm = 0; bm < a.sweeps[k].beams(); ++bm) {
        for (int c = 0; c < a.sweeps[k].azimuth_bins(); ++c) {
          REQUIRE(a.sweeps[k].present(bm, c) == b.sweeps[k].present(bm, c));
          if (!a.sweeps[k].present(bm, c)) continue;
          REQUIRE(a.sweeps[k].cell(bm, c).range ==
                  b.sweeps[k].cell(bm, c).range);
        }
      }
    }
  }

  SUBCASE("truth instances point at real trees containing the cell") {
    SensorSpec noisy = sensor;
    noisy.noise_sigma = 0.01;
    const SimulationResult r = simulate_sweeps(scene, traj, noisy, 3, 2);
    const double slack = 4.0 * noisy.noise_sigma + 1e-6;
    for (std::size_t k = 0; k < r.sweeps.size(); ++k) {
      const OrganizedSweep& sweep = r.sweeps[k];
      const SweepTruth& truth = r.truth.sweeps[k];
      const Mat3 rot = rotation_matrix(truth.pose);
      for (int b = 0; b < sweep.beams(); ++b) {
        for (int c = 0; c < sweep.azimuth_bins(); ++c) {
          if (!sweep.present(b, c)) continue;
          const std::int32_t id =
              truth.instances[static_cast<std::size_t>(b) *
                                  sweep.azimuth_bins() +
                              c];
          if (sweep.cell(b, c).label == SemanticLabel::Tree) {
            REQUIRE(id >= 0);
            REQUIRE(id < static_cast<std::int32_t>(scene.trees.size()));
            // Stationary trajectory: world point = R * p + origin.
            const Point3 world =
                rot * sweep.cell(b, c).point() + truth.pose.translation;
            const Tree& tree = scene.trees[id];
            const Vec3 q = world - tree.base;
            const double axial = q.dot(tree.axis);
            const double radial = (q - axial * tree.axis).norm();
            REQUIRE(std::abs(radial - tree.radius) < slack);
          } else {
            REQUIRE(id < 0);
          }
        }
      }
    }
  }

  SUBCASE("moving sensor: back-projection lands on scene surfaces") {
    TrajectorySpec moving;
    moving.start = Point3(-8, 0, 1.0);
    moving.segments.push_back({Point3(8, 0, 1.0), 1.0, 0.0});
    moving.jitter_deg = 5.0;
    SensorSpec noisy = sensor;
    noisy.noise_sigma = 0.01;
    const std::uint64_t seed = 17;
    const SimulationResult r = simulate_sweeps(scene, moving, noisy, seed, 2);
    REQUIRE(r.sweeps.size() >= 10);

    const TrajectorySampler sampler(moving, mix_seed(seed, 0x545241ULL));
    const double slack = 4.0 * noisy.noise_sigma + 1e-5;
    int checked = 0;
    for (std::size_t k = 0; k < r.sweeps.size(); k += 3) {
      const OrganizedSweep& sweep = r.sweeps[k];
      for (int b = 0; b < sweep.beams(); b += 3) {
        for (int c = 0; c < sweep.azimuth_bins(); c += 37) {
          if (!sweep.present(b, c)) continue;
          const SweepCell& cell = sweep.cell(b, c);
          const double t =
              (static_cast<double>(k) + cell.rel_time) * r.sweep_period;
          const PoseTransform pose = sampler.pose_at(t);
          const Point3 world = transform_point(pose, cell.point());

          double dist = std::abs(world.z() -
                                 scene.ground.height_at(world.x(), world.y()));
          for (const Tree& tree : scene.trees) {
            const Vec3 q = world - tree.base;
            const double axial = q.dot(tree.axis);
            if (axial < -0.5 || axial > tree.height + 0.5) continue;
            dist = std::min(
                dist, std::abs((q - axial * tree.axis).norm() - tree.radius));
          }
          for (const Point3& s : scene.shrubs) {
            dist = std::min(dist,
                            std::abs((world - s).norm() - scene.shrub_radius));
          }
          REQUIRE(dist < slack);
          ++checked;
        }
      }
    }
    CHECK(checked > 100);
  }
}
