#pragma once

#include "sloam/types.hpp"

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace sloam {

// Local ground plane {x | <x, normal> + offset = 0}. normal is unit length.
struct PlaneModel {
  Vec3 normal{0.0, 0.0, 1.0};
  double offset{0.0};
};

// Cylinder in polar form. standoff is the distance from the origin to the
// closest point on the surface; (normal_azimuth, normal_tilt) orient the
// surface normal at that point (azimuth in the xy plane from +x, tilt from
// +z); axis_angle rotates the axis within the plane orthogonal to the
// normal; curvature is the reciprocal radius and stays strictly positive.
struct CylinderModel {
  double standoff{0.0};
  double normal_azimuth{0.0};
  double normal_tilt{0.0};
  double axis_angle{0.0};
  double curvature{1.0};

  double radius() const { return 1.0 / curvature; }
};

// Orthonormal quantities derived from a CylinderModel: the surface normal at
// the closest point, the axis direction, and the two unit tangents of the
// normal under tilt/azimuth perturbations (the axis lives in their span).
struct CylinderFrame {
  Vec3 normal;
  Vec3 axis;
  Vec3 tilt_tangent;     // d(normal)/d(tilt)
  Vec3 azimuth_tangent;  // d(normal)/d(azimuth), normalized
};

// Rigid 6-DOF transform: extrinsic X, then Y, then Z rotation (right-hand
// rule), followed by translation. This convention is used everywhere.
struct PoseTransform {
  Vec3 translation{Vec3::Zero()};
  Vec3 rotation{Vec3::Zero()};  // radians about x, y, z

  Vec6 as_vector() const {
    Vec6 v;
    v << translation, rotation;
    return v;
  }
  static PoseTransform from_vector(const Vec6& v) {
    return {v.head<3>(), v.tail<3>()};
  }
};

// Axis-point / axis-direction / radius view of a cylinder.
struct CylinderGeometry {
  Point3 axis_point;  // point on the axis closest to the origin
  Vec3 axis;          // unit direction
  double radius;
};

// --- Plane -----------------------------------------------------------------

// Signed point-to-plane distance, negated form: -(<p, normal> + offset) for a
// unit normal.
double plane_distance(const PlaneModel& plane, const Point3& p);

// Gradient of plane_distance with respect to the point (= -normal).
Vec3 plane_distance_gradient(const PlaneModel& plane);

// --- Cylinder --------------------------------------------------------------

CylinderFrame cylinder_frame(const CylinderModel& s);

// Signed point-to-cylinder distance: distance from the axis minus the
// radius. Zero on the surface, negative inside.
double cylinder_distance(const CylinderModel& s, const Point3& p);

// Quadratic surrogate with the same zero set and the same derivatives on the
// zero set; stays finite and smooth as curvature tends to zero.
double cylinder_distance_approx(const CylinderModel& s, const Point3& p);

// Row gradient of cylinder_distance_approx w.r.t.
// (standoff, normal_azimuth, normal_tilt, axis_angle, curvature).
Eigen::Matrix<double, 1, 5> cylinder_distance_approx_jacobian(
    const CylinderModel& s, const Point3& p);

// Gradient of cylinder_distance w.r.t. the point (unit radial direction from
// the axis; zero exactly on the axis where the distance is not smooth).
Vec3 cylinder_distance_gradient(const CylinderModel& s, const Point3& p);

// Hot-path overloads over the precomputed geometric form.
double cylinder_distance(const CylinderGeometry& g, const Point3& p);
Vec3 cylinder_distance_gradient(const CylinderGeometry& g, const Point3& p);

// --- Rigid transforms ------------------------------------------------------

Mat3 rotation_matrix(const Vec3& rotation_xyz);
inline Mat3 rotation_matrix(const PoseTransform& t) {
  return rotation_matrix(t.rotation);
}

// Euler angles (extrinsic X,Y,Z) from a rotation matrix; inverse of
// rotation_matrix up to angle wrapping.
Vec3 euler_from_rotation(const Mat3& r);

Point3 transform_point(const PoseTransform& t, const Point3& p);

// compose(a, b) applies b first, then a.
PoseTransform compose(const PoseTransform& a, const PoseTransform& b);
PoseTransform invert(const PoseTransform& t);

// Pose scaled toward identity: all six parameters multiplied by fraction.
// Used to place a point taken at a relative time within the sweep.
PoseTransform interpolate_pose(const PoseTransform& t, double fraction);

inline Point3 transform_point_interp(const PoseTransform& t, double fraction,
                                     const Point3& p) {
  return transform_point(interpolate_pose(t, fraction), p);
}

// Jacobian of transform_point_interp(t, fraction, p) w.r.t. the six pose
// parameters [tx, ty, tz, rx, ry, rz].
Eigen::Matrix<double, 3, 6> transform_point_jacobian(const PoseTransform& t,
                                                     double fraction,
                                                     const Point3& p);

// --- Cylinder <-> geometric form --------------------------------------------

CylinderGeometry cylinder_geometry(const CylinderModel& s);

// Rebuilds the polar parameters from an axis line and radius. If the axis
// passes through the origin the normal direction is taken as the
// axis-perpendicular direction of smallest angle to +x (then +y when the
// axis is along x), with standoff clamped to zero.
CylinderModel cylinder_from_geometry(const Point3& axis_point, const Vec3& axis,
                                     double radius);

// Transforms the cylinder as a rigid body: axis line and radius move, the
// polar parameters are re-derived. Curvature is unchanged.
CylinderModel transform_cylinder(const PoseTransform& t,
                                 const CylinderModel& s);

}  // namespace sloam
