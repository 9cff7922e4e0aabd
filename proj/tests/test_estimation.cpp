#include "sloam/estimation.hpp"
#include "sloam/rng.hpp"
#include "sloam/trellis.hpp"

#include <doctest.h>

#include <cmath>

using namespace sloam;

namespace {

// Points on a cylinder given by axis point / axis / radius, arc centered on
// the direction facing the origin (lidar sees roughly half the surface).
std::vector<Point3> cylinder_arc_points(Rng& rng, const Point3& axis_point,
                                        const Vec3& axis, double radius,
                                        int count, double arc, double h_lo,
                                        double h_hi, double sigma) {
  const Vec3 a = axis.normalized();
  Vec3 toward = -axis_point + axis_point.dot(a) * a;  // origin direction
  if (toward.norm() < 1e-9) toward = Vec3::UnitX();
  toward.normalize();
  const Vec3 side = a.cross(toward);

  std::vector<Point3> pts;
  pts.reserve(count);
  for (int i = 0; i < count; ++i) {
    const double ang = rng.uniform(-arc / 2, arc / 2);
    const double along = rng.uniform(h_lo, h_hi);
    Point3 p = axis_point +
               radius * (std::cos(ang) * toward + std::sin(ang) * side) +
               along * a;
    if (sigma > 0.0) {
      // Range-like noise along the surface normal direction.
      p += rng.normal(sigma) * (std::cos(ang) * toward + std::sin(ang) * side);
    }
    pts.push_back(p);
  }
  return pts;
}

// Trellis-style initialization: slice points into height bins, compute focus
// points and vertex radii, then run the shared guess builder.
CylinderModel trellis_style_init(const std::vector<Point3>& pts,
                                 const Vec3& rough_axis) {
  const Vec3 a = rough_axis.normalized();
  double lo = 1e30, hi = -1e30;
  for (const Point3& p : pts) {
    lo = std::min(lo, p.dot(a));
    hi = std::max(hi, p.dot(a));
  }
  const int bins = 8;
  std::vector<std::vector<Point3>> sliced(bins);
  for (const Point3& p : pts) {
    int b = static_cast<int>((p.dot(a) - lo) / (hi - lo + 1e-9) * bins);
    b = std::clamp(b, 0, bins - 1);
    sliced[b].push_back(p);
  }
  std::vector<Point3> focus;
  std::vector<double> radii;
  for (const auto& slice : sliced) {
    if (slice.size() < 2) continue;
    double best = -1.0;
    Point3 pa, pb;
    for (std::size_t i = 0; i < slice.size(); ++i) {
      for (std::size_t j = i + 1; j < slice.size(); ++j) {
        const double d = (slice[i] - slice[j]).squaredNorm();
        if (d > best) {
          best = d;
          pa = slice[i];
          pb = slice[j];
        }
      }
    }
    focus.push_back(0.5 * (pa + pb));
    radii.push_back(0.5 * std::sqrt(best));
  }
  double radius = 0.1;
  if (!radii.empty()) {
    std::sort(radii.begin(), radii.end());
    radius = radii[radii.size() / 2];
  }
  return cylinder_guess_from_focus_points(focus, radius);
}

}  // namespace

TEST_CASE("fit_plane_svd") {
  SUBCASE("exact plane z=2") {
    const std::vector<Point3> pts = {{0, 0, 2}, {1, 0, 2}, {0, 1, 2}, {5, 5, 2}};
    const PlaneModel p = fit_plane_svd(pts);
    CHECK(p.normal.isApprox(Vec3(0, 0, 1), 1e-12));
    CHECK(p.offset == doctest::Approx(-2.0));
  }

  SUBCASE("noisy sloped plane: normal within half a degree") {
    Rng rng(3);
    std::vector<Point3> pts;
    for (int i = 0; i < 100; ++i) {
      const double x = rng.uniform(-10, 10), y = rng.uniform(-10, 10);
      pts.emplace_back(x, y, 0.1 * x + rng.normal(0.01));
    }
    const PlaneModel p = fit_plane_svd(pts);
    const Vec3 truth = Vec3(-0.1, 0.0, 1.0).normalized();
    const double angle =
        std::acos(std::clamp(std::abs(p.normal.dot(truth)), -1.0, 1.0));
    CHECK(angle * 180.0 / M_PI < 0.5);
  }

  SUBCASE("collinear points are degenerate") {
    const std::vector<Point3> pts = {{0, 0, 0}, {1, 1, 1}, {2, 2, 2}};
    CHECK_THROWS_WITH_AS(fit_plane_svd(pts), doctest::Contains("degenerate"),
                         Error);
  }

  SUBCASE("fewer than three points are degenerate") {
    CHECK_THROWS_WITH_AS(fit_plane_svd(std::vector<Point3>{{0, 0, 0}, {1, 0, 0}}),
                         doctest::Contains("degenerate"), Error);
  }

  SUBCASE("optimality: beats 1000 random planes through the centroid") {
    Rng rng(5);
    std::vector<Point3> pts;
    for (int i = 0; i < 60; ++i) {
      pts.emplace_back(rng.uniform(-4, 4), rng.uniform(-4, 4),
                       rng.normal(0.3));
    }
    const PlaneModel fitted = fit_plane_svd(pts);
    const auto cost = [&](const PlaneModel& p) {
      double sum = 0.0;
      for (const Point3& q : pts) {
        const double d = plane_distance(p, q);
        sum += d * d;
      }
      return sum;
    };
    Point3 centroid = Point3::Zero();
    for (const Point3& q : pts) centroid += q;
    centroid /= static_cast<double>(pts.size());

    const double best = cost(fitted);
    for (int i = 0; i < 1000; ++i) {
      Vec3 n(rng.normal(), rng.normal(), rng.normal());
      if (n.norm() < 1e-6) continue;
      n.normalize();
      const PlaneModel random_plane{n, -centroid.dot(n)};
      CHECK(best <= cost(random_plane) + 1e-12);
    }
  }

  SUBCASE("rotation equivariance") {
    Rng rng(7);
    std::vector<Point3> pts;
    for (int i = 0; i < 50; ++i) {
      pts.emplace_back(rng.uniform(-3, 3), rng.uniform(-3, 3),
                       0.2 * rng.uniform(-3, 3) + rng.normal(0.005));
    }
    const PlaneModel base = fit_plane_svd(pts);

    PoseTransform rot;
    rot.rotation = Vec3(0.3, -0.2, 0.8);
    std::vector<Point3> rotated;
    for (const Point3& p : pts) rotated.push_back(transform_point(rot, p));
    const PlaneModel after = fit_plane_svd(rotated);

    const Vec3 expected = rotation_matrix(rot) * base.normal;
    // Up to canonical sign.
    const double agreement = std::abs(expected.dot(after.normal));
    CHECK(agreement > 1.0 - 1e-7);
  }

  SUBCASE("canonical sign: normal z is nonnegative") {
    Rng rng(9);
    for (int i = 0; i < 50; ++i) {
      std::vector<Point3> pts;
      const double sx = rng.uniform(-0.5, 0.5), sy = rng.uniform(-0.5, 0.5);
      for (int j = 0; j < 20; ++j) {
        const double x = rng.uniform(-2, 2), y = rng.uniform(-2, 2);
        pts.emplace_back(x, y, sx * x + sy * y + rng.normal(0.002));
      }
      CHECK(fit_plane_svd(pts).normal.z() >= 0.0);
    }
  }
}

TEST_CASE("fit_cylinder") {
  const SolverSettings settings;

  SUBCASE("noise-free points at the ground truth converge immediately") {
    Rng rng(11);
    const Point3 axis_point(4.0, 1.0, 0.0);
    const Vec3 axis = Vec3(0.05, -0.02, 1.0).normalized();
    const double radius = 0.22;
    const CylinderModel truth = cylinder_from_geometry(axis_point, axis, radius);
    const auto pts = cylinder_arc_points(rng, axis_point, axis, radius, 100,
                                         M_PI, -1.0, 1.0, 0.0);
    const auto [model, report] = fit_cylinder(pts, truth, settings);
    CHECK(report.converged);
    CHECK(report.iterations <= 2);
    CHECK(report.final_cost < 1e-12);
    CHECK(model.radius() == doctest::Approx(radius).epsilon(1e-6));
  }

  SUBCASE("half-visible noisy cylinder from trellis-style init") {
    Rng rng(13);
    const Point3 axis_point(5.0, -2.0, 0.0);
    const Vec3 axis = Vec3(0.03, 0.05, 1.0).normalized();
    const double radius = 0.15;
    const auto pts = cylinder_arc_points(rng, axis_point, axis, radius, 200,
                                         M_PI, -1.2, 1.2, 0.01);
    const CylinderModel init = trellis_style_init(pts, Vec3::UnitZ());
    const auto [model, report] = fit_cylinder(pts, init, settings);
    CHECK(std::abs(model.radius() - radius) < 0.005);
  }

  SUBCASE("underdetermined input throws") {
    const std::vector<Point3> five(5, Point3(1, 0, 0));
    CHECK_THROWS_WITH_AS(fit_cylinder(five, CylinderModel{}, settings),
                         doctest::Contains("underdetermined"), Error);
  }

  SUBCASE("accepted steps never increase the cost") {
    Rng rng(17);
    for (int trial = 0; trial < 20; ++trial) {
      const Point3 axis_point(rng.uniform(2, 8), rng.uniform(-3, 3), 0.0);
      const Vec3 axis =
          Vec3(rng.uniform(-0.2, 0.2), rng.uniform(-0.2, 0.2), 1.0).normalized();
      const double radius = rng.uniform(0.05, 0.5);
      const auto pts = cylinder_arc_points(rng, axis_point, axis, radius, 120,
                                           M_PI, -1, 1, 0.01);
      const CylinderModel init = trellis_style_init(pts, Vec3::UnitZ());
      const auto [model, report] = fit_cylinder(pts, init, settings);
      for (std::size_t i = 1; i < report.cost_history.size(); ++i) {
        REQUIRE(report.cost_history[i] <= report.cost_history[i - 1]);
      }
      // Reparameterization keeps the domain valid whatever happened.
      REQUIRE(model.standoff >= 0.0);
      REQUIRE(model.curvature > 0.0);
    }
  }
}

TEST_CASE("batch cylinder fitting: serial and parallel agree bitwise") {
  Rng rng(19);
  std::vector<std::vector<Point3>> instances;
  std::vector<CylinderModel> inits;
  for (int i = 0; i < 24; ++i) {
    const Point3 axis_point(rng.uniform(2, 9), rng.uniform(-5, 5), 0.0);
    const Vec3 axis =
        Vec3(rng.uniform(-0.1, 0.1), rng.uniform(-0.1, 0.1), 1.0).normalized();
    const double radius = rng.uniform(0.06, 0.4);
    instances.push_back(cylinder_arc_points(rng, axis_point, axis, radius, 150,
                                            M_PI, -1, 1, 0.008));
    inits.push_back(trellis_style_init(instances.back(), Vec3::UnitZ()));
  }
  const SolverSettings settings;
  const auto serial = fit_cylinders_serial(instances, inits, settings);
  const auto parallel = fit_cylinders_parallel(instances, inits, settings, 4);
  REQUIRE(serial.size() == parallel.size());
  for (std::size_t i = 0; i < serial.size(); ++i) {
    REQUIRE(serial[i].first.standoff == parallel[i].first.standoff);
    REQUIRE(serial[i].first.normal_azimuth == parallel[i].first.normal_azimuth);
    REQUIRE(serial[i].first.normal_tilt == parallel[i].first.normal_tilt);
    REQUIRE(serial[i].first.axis_angle == parallel[i].first.axis_angle);
    REQUIRE(serial[i].first.curvature == parallel[i].first.curvature);
    REQUIRE(serial[i].second.final_cost == parallel[i].second.final_cost);
  }
}
