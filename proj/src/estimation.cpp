#include "sloam/estimation.hpp"

#include "sloam/parallel.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>

namespace sloam {

void SolverSettings::validate() const {
  if (max_iterations < 1) throw Error("solver.max_iterations: must be >= 1");
  if (!(initial_damping > 0.0)) throw Error("solver.initial_damping: must be > 0");
  if (!(damping_increase > 1.0)) throw Error("solver.damping_increase: must be > 1");
  if (!(damping_decrease > 1.0)) throw Error("solver.damping_decrease: must be > 1");
  if (!(update_tolerance > 0.0)) throw Error("solver.update_tolerance: must be > 0");
  if (!(residual_tolerance > 0.0)) throw Error("solver.residual_tolerance: must be > 0");
}

namespace {

using Vec5 = Eigen::Matrix<double, 5, 1>;
using Mat5 = Eigen::Matrix<double, 5, 5>;

// Internal parameterization: x = (sqrt(standoff), azimuth, tilt, axis_angle,
// sqrt(curvature)).
Vec5 pack(const CylinderModel& s) {
  Vec5 x;
  x << std::sqrt(std::max(0.0, s.standoff)), s.normal_azimuth, s.normal_tilt,
      s.axis_angle, std::sqrt(std::max(1e-12, s.curvature));
  return x;
}

CylinderModel unpack(const Vec5& x) {
  CylinderModel s;
  s.standoff = x(0) * x(0);
  s.normal_azimuth = x(1);
  s.normal_tilt = x(2);
  s.axis_angle = x(3);
  const double root = std::abs(x(4)) < 1e-9 ? 1e-9 : x(4);
  s.curvature = root * root;
  return s;
}

double cylinder_cost(const CylinderModel& s, std::span<const Point3> points) {
  double cost = 0.0;
  for (const Point3& p : points) {
    const double r = cylinder_distance_approx(s, p);
    cost += r * r;
  }
  return cost;
}

}  // namespace

std::pair<CylinderModel, FitReport> fit_cylinder(std::span<const Point3> points,
                                                 const CylinderModel& init,
                                                 const SolverSettings& settings) {
  settings.validate();
  if (points.size() < 6) {
    throw Error("fit_cylinder: underdetermined (" +
                std::to_string(points.size()) + " points, need >= 6)");
  }

  Vec5 x = pack(init);
  CylinderModel model = unpack(x);
  double cost = cylinder_cost(model, points);
  double damping = settings.initial_damping;

  FitReport report;
  report.cost_history.push_back(cost);

  for (int iter = 0; iter < settings.max_iterations; ++iter) {
    report.iterations = iter + 1;

    Mat5 jtj = Mat5::Zero();
    Vec5 jtr = Vec5::Zero();
    for (const Point3& p : points) {
      const double r = cylinder_distance_approx(model, p);
      Eigen::Matrix<double, 1, 5> j =
          cylinder_distance_approx_jacobian(model, p);
      // Chain rule through the square-root parameterization.
      j(0) *= 2.0 * x(0);
      j(4) *= 2.0 * x(4);
      jtj += j.transpose() * j;
      jtr += j.transpose() * r;
    }

    Vec5 scale = jtj.diagonal().cwiseMax(1e-12);
    const Vec5 step =
        (jtj + damping * scale.asDiagonal().toDenseMatrix())
            .ldlt()
            .solve(-jtr);
    if (!step.allFinite()) {
      report.condition_warning = true;
      break;
    }

    const Vec5 x_new = x + step;
    const CylinderModel model_new = unpack(x_new);
    const double cost_new = cylinder_cost(model_new, points);

    if (cost_new < cost) {
      x = x_new;
      model = model_new;
      cost = cost_new;
      damping = std::max(1e-12, damping / settings.damping_decrease);
      report.cost_history.push_back(cost);
      if (step.lpNorm<Eigen::Infinity>() < settings.update_tolerance ||
          cost < settings.residual_tolerance) {
        report.converged = true;
        break;
      }
    } else {
      damping *= settings.damping_increase;
      if (damping > 1e12) {
        // No downhill direction left at any damping: treat as converged to a
        // local minimum.
        report.converged = true;
        break;
      }
      if (step.lpNorm<Eigen::Infinity>() < settings.update_tolerance) {
        report.converged = true;
        break;
      }
    }
  }

  report.final_cost = cost;
  return {model, report};
}

PlaneModel fit_plane_svd(std::span<const Point3> points) {
  if (points.size() < 3) {
    throw Error("fit_plane_svd: degenerate plane (need >= 3 points)");
  }

  Point3 centroid = Point3::Zero();
  for (const Point3& p : points) centroid += p;
  centroid /= static_cast<double>(points.size());

  Mat3 scatter = Mat3::Zero();
  for (const Point3& p : points) {
    const Vec3 d = p - centroid;
    scatter += d * d.transpose();
  }

  Eigen::SelfAdjointEigenSolver<Mat3> eig(scatter);
  const Vec3 eigenvalues = eig.eigenvalues();  // ascending
  // Collinear or coincident input: the two smallest variances both vanish.
  if (eigenvalues(1) <= 1e-12 * std::max(eigenvalues(2), 1e-300)) {
    throw Error("fit_plane_svd: degenerate plane (collinear points)");
  }

  Vec3 normal = eig.eigenvectors().col(0);
  const double eps = 1e-12;
  bool flip = false;
  if (normal.z() < -eps) {
    flip = true;
  } else if (std::abs(normal.z()) <= eps) {
    if (normal.x() < -eps) {
      flip = true;
    } else if (std::abs(normal.x()) <= eps && normal.y() < 0.0) {
      flip = true;
    }
  }
  if (flip) normal = -normal;
  normal.normalize();

  return {normal, -centroid.dot(normal)};
}

std::vector<std::pair<CylinderModel, FitReport>> fit_cylinders_serial(
    const std::vector<std::vector<Point3>>& instance_points,
    const std::vector<CylinderModel>& inits, const SolverSettings& settings) {
  return fit_cylinders_parallel(instance_points, inits, settings, 1);
}

std::vector<std::pair<CylinderModel, FitReport>> fit_cylinders_parallel(
    const std::vector<std::vector<Point3>>& instance_points,
    const std::vector<CylinderModel>& inits, const SolverSettings& settings,
    int threads) {
  if (instance_points.size() != inits.size()) {
    throw Error("fit_cylinders: instance/init count mismatch");
  }
  std::vector<std::pair<CylinderModel, FitReport>> out(instance_points.size());
  parallel_for(instance_points.size(), threads, [&](std::size_t i) {
    out[i] = fit_cylinder(instance_points[i], inits[i], settings);
  });
  return out;
}

}  // namespace sloam
