#include "sloam/geometry.hpp"

#include <cmath>

namespace sloam {

namespace {
constexpr double kAxisEps = 1e-12;
}  // namespace

double plane_distance(const PlaneModel& plane, const Point3& p) {
  // Evaluated with x0 = -offset * normal, a point satisfying the plane
  // equation; the value is independent of the choice of x0.
  return -(p.dot(plane.normal) + plane.offset) / plane.normal.norm();
}

Vec3 plane_distance_gradient(const PlaneModel& plane) {
  return -plane.normal / plane.normal.norm();
}

CylinderFrame cylinder_frame(const CylinderModel& s) {
  const double cphi = std::cos(s.normal_azimuth);
  const double sphi = std::sin(s.normal_azimuth);
  const double cnu = std::cos(s.normal_tilt);
  const double snu = std::sin(s.normal_tilt);
  const double ca = std::cos(s.axis_angle);
  const double sa = std::sin(s.axis_angle);

  CylinderFrame f;
  f.normal = Vec3(cphi * snu, sphi * snu, cnu);
  f.tilt_tangent = Vec3(cphi * cnu, sphi * cnu, -snu);
  f.azimuth_tangent = Vec3(-sphi, cphi, 0.0);
  f.axis = ca * f.tilt_tangent + sa * f.azimuth_tangent;
  return f;
}

double cylinder_distance(const CylinderGeometry& g, const Point3& p) {
  const Vec3 w = p - g.axis_point;
  return w.cross(g.axis).norm() - g.radius;
}

Vec3 cylinder_distance_gradient(const CylinderGeometry& g, const Point3& p) {
  const Vec3 w = p - g.axis_point;
  const Vec3 w_perp = w - w.dot(g.axis) * g.axis;
  const double norm = w_perp.norm();
  if (norm < kAxisEps) return Vec3::Zero();
  return w_perp / norm;
}

double cylinder_distance(const CylinderModel& s, const Point3& p) {
  const CylinderFrame f = cylinder_frame(s);
  const double radius = 1.0 / s.curvature;
  const Vec3 w = p - (s.standoff + radius) * f.normal;
  return w.cross(f.axis).norm() - radius;
}

double cylinder_distance_approx(const CylinderModel& s, const Point3& p) {
  const CylinderFrame f = cylinder_frame(s);
  const double u = p.dot(f.normal);
  const double v = p.dot(f.axis);
  const double rho = s.standoff;
  return 0.5 * s.curvature *
             (p.squaredNorm() - 2.0 * rho * u - v * v + rho * rho) +
         rho - u;
}

Eigen::Matrix<double, 1, 5> cylinder_distance_approx_jacobian(
    const CylinderModel& s, const Point3& p) {
  const CylinderFrame f = cylinder_frame(s);
  const double cphi = std::cos(s.normal_azimuth);
  const double sphi = std::sin(s.normal_azimuth);
  const double cnu = std::cos(s.normal_tilt);
  const double snu = std::sin(s.normal_tilt);
  const double ca = std::cos(s.axis_angle);
  const double sa = std::sin(s.axis_angle);

  const double u = p.dot(f.normal);
  const double v = p.dot(f.axis);
  const double rho = s.standoff;
  const double kappa = s.curvature;

  // Tangent derivatives. d(azimuth_tangent)/d(azimuth) has no closed name;
  // write it out directly.
  const Vec3 dn_dazimuth = snu * f.azimuth_tangent;
  const Vec3 dazimuth_tangent(-cphi, -sphi, 0.0);
  const Vec3 da_dazimuth = ca * cnu * f.azimuth_tangent + sa * dazimuth_tangent;
  const Vec3 da_dtilt = -ca * f.normal;
  const Vec3 da_daxis = -sa * f.tilt_tangent + ca * f.azimuth_tangent;

  const double u_phi = p.dot(dn_dazimuth);
  const double u_nu = p.dot(f.tilt_tangent);
  const double v_phi = p.dot(da_dazimuth);
  const double v_nu = p.dot(da_dtilt);
  const double v_alpha = p.dot(da_daxis);

  Eigen::Matrix<double, 1, 5> j;
  j(0) = kappa * (rho - u) + 1.0;
  j(1) = -(kappa * rho + 1.0) * u_phi - kappa * v * v_phi;
  j(2) = -(kappa * rho + 1.0) * u_nu - kappa * v * v_nu;
  j(3) = -kappa * v * v_alpha;
  j(4) = 0.5 * (p.squaredNorm() - 2.0 * rho * u - v * v + rho * rho);
  return j;
}

Vec3 cylinder_distance_gradient(const CylinderModel& s, const Point3& p) {
  const CylinderFrame f = cylinder_frame(s);
  const Vec3 w = p - (s.standoff + 1.0 / s.curvature) * f.normal;
  const Vec3 w_perp = w - w.dot(f.axis) * f.axis;
  const double norm = w_perp.norm();
  if (norm < kAxisEps) return Vec3::Zero();
  return w_perp / norm;
}

Mat3 rotation_matrix(const Vec3& rotation_xyz) {
  const double cx = std::cos(rotation_xyz.x()), sx = std::sin(rotation_xyz.x());
  const double cy = std::cos(rotation_xyz.y()), sy = std::sin(rotation_xyz.y());
  const double cz = std::cos(rotation_xyz.z()), sz = std::sin(rotation_xyz.z());
  Mat3 rx, ry, rz;
  rx << 1, 0, 0, 0, cx, -sx, 0, sx, cx;
  ry << cy, 0, sy, 0, 1, 0, -sy, 0, cy;
  rz << cz, -sz, 0, sz, cz, 0, 0, 0, 1;
  return rz * ry * rx;
}

Vec3 euler_from_rotation(const Mat3& r) {
  // R = Rz * Ry * Rx with R(2,0) = -sin(ry).
  if (std::abs(r(2, 0)) >= 1.0 - 1e-12) {
    const double ry = (r(2, 0) < 0.0) ? M_PI / 2.0 : -M_PI / 2.0;
    const double sign = (r(2, 0) < 0.0) ? 1.0 : -1.0;
    // Gimbal lock: only rx -+ rz is determined; pin rz = 0.
    const double rx = std::atan2(sign * r(0, 1), r(0, 2) * sign);
    return Vec3(rx, ry, 0.0);
  }
  const double ry = std::asin(-r(2, 0));
  const double rx = std::atan2(r(2, 1), r(2, 2));
  const double rz = std::atan2(r(1, 0), r(0, 0));
  return Vec3(rx, ry, rz);
}

Point3 transform_point(const PoseTransform& t, const Point3& p) {
  return rotation_matrix(t) * p + t.translation;
}

PoseTransform compose(const PoseTransform& a, const PoseTransform& b) {
  const Mat3 ra = rotation_matrix(a);
  const Mat3 rb = rotation_matrix(b);
  PoseTransform out;
  out.translation = ra * b.translation + a.translation;
  out.rotation = euler_from_rotation(ra * rb);
  return out;
}

PoseTransform invert(const PoseTransform& t) {
  const Mat3 r = rotation_matrix(t);
  PoseTransform out;
  out.translation = -(r.transpose() * t.translation);
  out.rotation = euler_from_rotation(r.transpose());
  return out;
}

PoseTransform interpolate_pose(const PoseTransform& t, double fraction) {
  return {fraction * t.translation, fraction * t.rotation};
}

Eigen::Matrix<double, 3, 6> transform_point_jacobian(const PoseTransform& t,
                                                     double fraction,
                                                     const Point3& p) {
  const Vec3 r = fraction * t.rotation;
  const double cx = std::cos(r.x()), sx = std::sin(r.x());
  const double cy = std::cos(r.y()), sy = std::sin(r.y());
  const double cz = std::cos(r.z()), sz = std::sin(r.z());
  Mat3 rx, ry, rz, drx, dry, drz;
  rx << 1, 0, 0, 0, cx, -sx, 0, sx, cx;
  ry << cy, 0, sy, 0, 1, 0, -sy, 0, cy;
  rz << cz, -sz, 0, sz, cz, 0, 0, 0, 1;
  drx << 0, 0, 0, 0, -sx, -cx, 0, cx, -sx;
  dry << -sy, 0, cy, 0, 0, 0, -cy, 0, -sy;
  drz << -sz, -cz, 0, cz, -sz, 0, 0, 0, 0;

  Eigen::Matrix<double, 3, 6> j;
  j.block<3, 3>(0, 0) = fraction * Mat3::Identity();
  j.col(3) = fraction * (rz * ry * drx * p);
  j.col(4) = fraction * (rz * dry * rx * p);
  j.col(5) = fraction * (drz * ry * rx * p);
  return j;
}

CylinderGeometry cylinder_geometry(const CylinderModel& s) {
  const CylinderFrame f = cylinder_frame(s);
  const double radius = 1.0 / s.curvature;
  return {(s.standoff + radius) * f.normal, f.axis, radius};
}

CylinderModel cylinder_from_geometry(const Point3& axis_point, const Vec3& axis,
                                     double radius) {
  const Vec3 a = axis.normalized();
  const Vec3 foot = axis_point - axis_point.dot(a) * a;
  const double dist = foot.norm();

  Vec3 n;
  if (dist > kAxisEps) {
    n = foot / dist;
  } else {
    Vec3 proj = Vec3::UnitX() - Vec3::UnitX().dot(a) * a;
    if (proj.norm() < 1e-9) proj = Vec3::UnitY() - Vec3::UnitY().dot(a) * a;
    n = proj.normalized();
  }

  const double planar = std::hypot(n.x(), n.y());
  const double tilt = std::atan2(planar, n.z());
  const double azimuth = planar > 1e-15 ? std::atan2(n.y(), n.x()) : 0.0;

  const double cphi = std::cos(azimuth), sphi = std::sin(azimuth);
  const double cnu = std::cos(tilt), snu = std::sin(tilt);
  const Vec3 tilt_tangent(cphi * cnu, sphi * cnu, -snu);
  const Vec3 azimuth_tangent(-sphi, cphi, 0.0);
  const double axis_angle =
      std::atan2(a.dot(azimuth_tangent), a.dot(tilt_tangent));

  CylinderModel out;
  out.standoff = std::max(0.0, dist - radius);
  out.normal_azimuth = azimuth;
  out.normal_tilt = tilt;
  out.axis_angle = axis_angle;
  out.curvature = 1.0 / radius;
  return out;
}

CylinderModel transform_cylinder(const PoseTransform& t,
                                 const CylinderModel& s) {
  const CylinderGeometry g = cylinder_geometry(s);
  const Mat3 r = rotation_matrix(t);
  return cylinder_from_geometry(r * g.axis_point + t.translation, r * g.axis,
                                g.radius);
}

}  // namespace sloam
