#include "sloam/geometry.hpp"
#include "sloam/rng.hpp"

#include <doctest.h>

#include <cmath>

using namespace sloam;

namespace {

CylinderModel random_cylinder(Rng& rng) {
  CylinderModel s;
  s.standoff = rng.uniform(0.5, 10.0);
  s.normal_azimuth = rng.uniform(-M_PI, M_PI);
  s.normal_tilt = rng.uniform(0.05, M_PI - 0.05);
  s.axis_angle = rng.uniform(-M_PI, M_PI);
  s.curvature = 1.0 / rng.uniform(0.05, 0.6);
  return s;
}

// Independent surface sampler: orthonormal basis around the axis built by
// Gram-Schmidt, not by cylinder_frame.
Point3 surface_point(const CylinderModel& s, double angle, double along) {
  const CylinderGeometry g = cylinder_geometry(s);
  Vec3 seed = std::abs(g.axis.x()) < 0.9 ? Vec3::UnitX() : Vec3::UnitY();
  const Vec3 u = (seed - seed.dot(g.axis) * g.axis).normalized();
  const Vec3 v = g.axis.cross(u);
  return g.axis_point +
         g.radius * (std::cos(angle) * u + std::sin(angle) * v) +
         along * g.axis;
}

PoseTransform random_pose(Rng& rng, double trans = 2.0, double rot = M_PI) {
  PoseTransform t;
  t.translation = Vec3(rng.uniform(-trans, trans), rng.uniform(-trans, trans),
                       rng.uniform(-trans, trans));
  t.rotation = Vec3(rng.uniform(-rot, rot), rng.uniform(-rot, rot),
                    rng.uniform(-rot, rot));
  return t;
}

}  // namespace

TEST_CASE("plane distance matches the negated literal form") {
  PlaneModel plane{Vec3(0, 0, 1), 0.0};
  CHECK(plane_distance(plane, Point3(0, 0, 0)) == doctest::Approx(0.0));
  CHECK(plane_distance(plane, Point3(0, 0, 5)) == doctest::Approx(-5.0));

  PlaneModel z2{Vec3(0, 0, 1), -2.0};  // plane z = 2
  CHECK(plane_distance(z2, Point3(7, -3, 2)) == doctest::Approx(0.0));

  // Independent of the anchor point choice: any x0 on the plane gives the
  // same value.
  Rng rng(7);
  for (int i = 0; i < 50; ++i) {
    Vec3 n(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1));
    if (n.norm() < 1e-3) continue;
    n.normalize();
    const double offset = rng.uniform(-5, 5);
    const PlaneModel p{n, offset};
    const Point3 q(rng.uniform(-10, 10), rng.uniform(-10, 10),
                   rng.uniform(-10, 10));
    // x0 = -offset*n + in-plane displacement.
    Vec3 seed = std::abs(n.x()) < 0.9 ? Vec3::UnitX() : Vec3::UnitY();
    const Vec3 u = (seed - seed.dot(n) * n).normalized();
    const Vec3 x0 = -offset * n + rng.uniform(-3, 3) * u;
    const double literal = (-(q - x0)).dot(n) / n.norm();
    CHECK(plane_distance(p, q) == doctest::Approx(literal).epsilon(1e-12));
  }
}

TEST_CASE("cylinder frame identities") {
  SUBCASE("axis-aligned samples") {
    CylinderModel s{1.0, 0.0, M_PI / 2.0, 0.0, 1.0};
    const CylinderFrame f = cylinder_frame(s);
    CHECK(f.normal.isApprox(Vec3(1, 0, 0), 1e-12));
    CHECK(f.axis.isApprox(Vec3(0, 0, -1), 1e-12));

    CylinderModel s2{1.0, M_PI / 2.0, M_PI / 2.0, 0.0, 1.0};
    const CylinderFrame f2 = cylinder_frame(s2);
    CHECK(f2.normal.isApprox(Vec3(0, 1, 0), 1e-12));
    CHECK(f2.axis.isApprox(Vec3(0, 0, -1), 1e-12));
  }

  SUBCASE("unit norms and orthogonality for random parameters") {
    Rng rng(11);
    for (int i = 0; i < 500; ++i) {
      const CylinderModel s = random_cylinder(rng);
      const CylinderFrame f = cylinder_frame(s);
      CHECK(std::abs(f.normal.norm() - 1.0) < 1e-9);
      CHECK(std::abs(f.axis.norm() - 1.0) < 1e-9);
      CHECK(std::abs(f.normal.dot(f.axis)) < 1e-9);
    }
  }

  SUBCASE("degenerate tilt still yields the closed-form azimuth tangent") {
    CylinderModel s{1.0, 0.3, 0.0, 0.2, 2.0};
    const CylinderFrame f = cylinder_frame(s);
    CHECK(f.azimuth_tangent.isApprox(Vec3(-std::sin(0.3), std::cos(0.3), 0.0),
                                     1e-12));
  }
}

TEST_CASE("cylinder distance: frozen examples") {
  // axis through (2,0,0) pointing -z, radius 1, standoff 1.
  CylinderModel s{1.0, 0.0, M_PI / 2.0, 0.0, 1.0};
  CHECK(cylinder_distance(s, Point3(5, 0, 0)) == doctest::Approx(2.0));
  CHECK(cylinder_distance(s, Point3(3, 0, 0)) == doctest::Approx(0.0));
  CHECK(cylinder_distance(s, Point3(2, 0, 0)) == doctest::Approx(-1.0));
}

TEST_CASE("approximate cylinder distance: frozen examples and kappa limit") {
  CylinderModel s{1.0, 0.0, M_PI / 2.0, 0.0, 1.0};
  CHECK(cylinder_distance_approx(s, Point3(3, 0, 0)) == doctest::Approx(0.0));
  // Hand-evaluated: 0.5*(16 - 8 - 0 + 1) + 1 - 4 = 1.5.
  CHECK(cylinder_distance_approx(s, Point3(4, 0, 0)) == doctest::Approx(1.5));

  // kappa -> 0 degenerates to the plane distance standoff - <p, n>.
  CylinderModel flat{1.0, 0.0, M_PI / 2.0, 0.0, 1e-12};
  const double d = cylinder_distance_approx(flat, Point3(1, 0, 0));
  CHECK(std::isfinite(d));
  CHECK(d == doctest::Approx(0.0).epsilon(1e-9));
}

TEST_CASE("zero-set agreement between exact and approximate distances") {
  Rng rng(23);
  for (int i = 0; i < 1000; ++i) {
    const CylinderModel s = random_cylinder(rng);
    const Point3 p = surface_point(s, rng.uniform(0, 2 * M_PI),
                                   rng.uniform(-2.0, 2.0));
    CHECK(std::abs(cylinder_distance(s, p)) < 1e-9);
    CHECK(std::abs(cylinder_distance_approx(s, p)) < 1e-9);
  }
}

TEST_CASE("transform_point: frozen examples") {
  const PoseTransform identity;
  CHECK(transform_point(identity, Point3(3, -1, 2)).isApprox(Point3(3, -1, 2)));

  PoseTransform shift;
  shift.translation = Vec3(1, 2, 3);
  CHECK(transform_point(shift, Point3(0, 0, 0)).isApprox(Point3(1, 2, 3)));

  PoseTransform yaw90;
  yaw90.rotation = Vec3(0, 0, M_PI / 2.0);
  CHECK((transform_point(yaw90, Point3(1, 0, 0)) - Point3(0, 1, 0)).norm() <
        1e-12);
}

TEST_CASE("transform group laws") {
  Rng rng(31);
  for (int i = 0; i < 200; ++i) {
    const PoseTransform t = random_pose(rng);
    const PoseTransform inv = invert(t);
    const Point3 p(rng.uniform(-5, 5), rng.uniform(-5, 5), rng.uniform(-5, 5));
    CHECK((transform_point(inv, transform_point(t, p)) - p).norm() < 1e-9);
    CHECK((transform_point(compose(t, inv), p) - p).norm() < 1e-9);

    const PoseTransform u = random_pose(rng);
    const Point3 via_compose = transform_point(compose(t, u), p);
    const Point3 via_sequence = transform_point(t, transform_point(u, p));
    CHECK((via_compose - via_sequence).norm() < 1e-9);
  }
}

TEST_CASE("euler_from_rotation inverts rotation_matrix") {
  Rng rng(37);
  for (int i = 0; i < 200; ++i) {
    const Vec3 r(rng.uniform(-M_PI, M_PI), rng.uniform(-M_PI / 2, M_PI / 2),
                 rng.uniform(-M_PI, M_PI));
    const Mat3 m = rotation_matrix(r);
    const Mat3 back = rotation_matrix(euler_from_rotation(m));
    CHECK((m - back).norm() < 1e-9);
  }
}

TEST_CASE("transform_cylinder") {
  Rng rng(41);

  SUBCASE("identity keeps parameters") {
    for (int i = 0; i < 100; ++i) {
      const CylinderModel s = random_cylinder(rng);
      const CylinderModel t = transform_cylinder(PoseTransform{}, s);
      CHECK(t.standoff == doctest::Approx(s.standoff).epsilon(1e-9));
      CHECK(t.normal_azimuth == doctest::Approx(s.normal_azimuth).epsilon(1e-9));
      CHECK(t.normal_tilt == doctest::Approx(s.normal_tilt).epsilon(1e-9));
      CHECK(t.axis_angle == doctest::Approx(s.axis_angle).epsilon(1e-9));
      CHECK(t.curvature == doctest::Approx(s.curvature).epsilon(1e-12));
    }
  }

  SUBCASE("axis-parallel translation of a vertical cylinder") {
    // Vertical axis: normal in the xy plane (tilt pi/2), axis +-z.
    CylinderModel s{2.0, 0.4, M_PI / 2.0, 0.0, 1.0 / 0.2};
    PoseTransform lift;
    lift.translation = Vec3(0, 0, 3.5);
    const CylinderModel t = transform_cylinder(lift, s);
    CHECK(t.standoff == doctest::Approx(s.standoff).epsilon(1e-9));
    CHECK(t.normal_azimuth == doctest::Approx(s.normal_azimuth).epsilon(1e-9));
    CHECK(t.curvature == doctest::Approx(s.curvature).epsilon(1e-12));
  }

  SUBCASE("surface points transform onto the transformed model") {
    for (int i = 0; i < 50; ++i) {
      const CylinderModel s = random_cylinder(rng);
      const PoseTransform t = random_pose(rng);
      const CylinderModel st = transform_cylinder(t, s);
      for (int j = 0; j < 20; ++j) {
        const Point3 p = surface_point(s, rng.uniform(0, 2 * M_PI),
                                       rng.uniform(-1.5, 1.5));
        CHECK(std::abs(cylinder_distance(st, transform_point(t, p))) < 1e-7);
      }
    }
  }

  SUBCASE("isometry invariance of the distance") {
    for (int i = 0; i < 100; ++i) {
      const CylinderModel s = random_cylinder(rng);
      const PoseTransform t = random_pose(rng);
      const Point3 p(rng.uniform(-8, 8), rng.uniform(-8, 8),
                     rng.uniform(-8, 8));
      const double before = cylinder_distance(s, p);
      const double after =
          cylinder_distance(transform_cylinder(t, s), transform_point(t, p));
      CHECK(before == doctest::Approx(after).epsilon(1e-7));
    }
  }

  SUBCASE("axis through the origin uses the +x convention") {
    // Vertical axis through the origin, radius 0.5.
    const CylinderModel s = cylinder_from_geometry(Point3(0, 0, 1),
                                                   Vec3(0, 0, 1), 0.5);
    CHECK(s.standoff == doctest::Approx(0.0));
    // Normal should point along +x.
    const CylinderFrame f = cylinder_frame(s);
    CHECK(f.normal.isApprox(Vec3(1, 0, 0), 1e-9));
  }
}

TEST_CASE("analytic jacobians match central differences") {
  Rng rng(43);
  const double step = 1e-6;

  SUBCASE("approximate distance w.r.t. model parameters") {
    for (int trial = 0; trial < 100; ++trial) {
      const CylinderModel s = random_cylinder(rng);
      const Point3 p = surface_point(s, rng.uniform(0, 2 * M_PI),
                                     rng.uniform(-2, 2)) +
                       Vec3(rng.uniform(-0.3, 0.3), rng.uniform(-0.3, 0.3),
                            rng.uniform(-0.3, 0.3));
      const auto j = cylinder_distance_approx_jacobian(s, p);
      double params[5] = {s.standoff, s.normal_azimuth, s.normal_tilt,
                          s.axis_angle, s.curvature};
      for (int k = 0; k < 5; ++k) {
        double hi[5], lo[5];
        for (int q = 0; q < 5; ++q) hi[q] = lo[q] = params[q];
        hi[k] += step;
        lo[k] -= step;
        const CylinderModel sh{hi[0], hi[1], hi[2], hi[3], hi[4]};
        const CylinderModel sl{lo[0], lo[1], lo[2], lo[3], lo[4]};
        const double fd = (cylinder_distance_approx(sh, p) -
                           cylinder_distance_approx(sl, p)) /
                          (2.0 * step);
        const double scale = std::max({1.0, std::abs(fd), std::abs(j(k))});
        CHECK(std::abs(j(k) - fd) / scale < 1e-5);
      }
    }
  }

  SUBCASE("exact distance and plane distance w.r.t. pose parameters") {
    for (int trial = 0; trial < 100; ++trial) {
      const CylinderModel s = random_cylinder(rng);
      const PoseTransform t = random_pose(rng, 0.5, 0.3);
      const double frac = rng.uniform(0.1, 1.0);
      const Point3 p = surface_point(s, rng.uniform(0, 2 * M_PI),
                                     rng.uniform(-2, 2)) +
                       Vec3(rng.uniform(-0.2, 0.2), rng.uniform(-0.2, 0.2),
                            rng.uniform(-0.2, 0.2));

      const Point3 projected = transform_point_interp(t, frac, p);
      const Vec3 grad_point = cylinder_distance_gradient(s, projected);
      const Eigen::Matrix<double, 1, 6> grad_pose =
          grad_point.transpose() * transform_point_jacobian(t, frac, p);

      PlaneModel plane{Vec3(0.1, -0.2, 0.97).normalized(), 0.4};
      const Eigen::Matrix<double, 1, 6> grad_plane_pose =
          plane_distance_gradient(plane).transpose() *
          transform_point_jacobian(t, frac, p);

      Vec6 v = t.as_vector();
      for (int k = 0; k < 6; ++k) {
        Vec6 hi = v, lo = v;
        hi(k) += step;
        lo(k) -= step;
        const Point3 ph = transform_point_interp(PoseTransform::from_vector(hi),
                                                 frac, p);
        const Point3 pl = transform_point_interp(PoseTransform::from_vector(lo),
                                                 frac, p);
        const double fd_cyl =
            (cylinder_distance(s, ph) - cylinder_distance(s, pl)) /
            (2.0 * step);
        double scale = std::max({1.0, std::abs(fd_cyl), std::abs(grad_pose(k))});
        CHECK(std::abs(grad_pose(k) - fd_cyl) / scale < 1e-5);

        const double fd_plane =
            (plane_distance(plane, ph) - plane_distance(plane, pl)) /
            (2.0 * step);
        scale = std::max({1.0, std::abs(fd_plane), std::abs(grad_plane_pose(k))});
        CHECK(std::abs(grad_plane_pose(k) - fd_plane) / scale < 1e-5);
      }
    }
  }
}
