#include "sloam/odometry.hpp"

#include "sloam/parallel.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>

namespace sloam {

void OdometrySettings::validate() const {
  if (n_odom < 1) throw Error("odometry.n_odom: must be >= 1");
  if (outer_iterations < 1) throw Error("odometry.outer_iterations: must be >= 1");
  if (!(assoc_gate_tree > 0.0)) throw Error("odometry.assoc_gate_tree_m: must be > 0");
  if (!(assoc_gate_ground > 0.0)) throw Error("odometry.assoc_gate_ground_m: must be > 0");
  if (ground_k_neighbors < 3) throw Error("odometry.ground_k_neighbors: must be >= 3");
  solver.validate();
}

FeatureCloud flatten(const SweepFeatures& features) {
  FeatureCloud cloud;
  cloud.tree.reserve(features.tree_point_count());
  for (const TreeInstance& inst : features.tree_instances) {
    for (const InstanceCell& c : inst.points) {
      cloud.tree.push_back({c.point, c.rel_time});
    }
  }
  cloud.ground = features.ground_points;
  return cloud;
}

void OdometryState::rebuild_grids(double tree_cell, double ground_cell) {
  std::vector<Point3> pts;
  pts.reserve(tree_features.size());
  for (const TaggedPoint& t : tree_features) pts.push_back(t.point);
  tree_grid.build(pts, tree_cell);
  ground_grid.build(ground_features, ground_cell);
}

std::pair<double, double> balance_weights(std::size_t tree_points,
                                          std::size_t ground_points) {
  if (tree_points == 0 || ground_points == 0) return {1.0, 1.0};
  const double lambda_tree =
      static_cast<double>(ground_points) / static_cast<double>(tree_points);
  return {lambda_tree, 1.0 / lambda_tree};
}

namespace {

int associate_tree_impl(const Point3& projected, const OdometryState& state,
                        const std::vector<CylinderGeometry>& geometries,
                        AssociationMethod method, double gate) {
  if (method == AssociationMethod::FeatureNeighbor) {
    const int idx = state.tree_grid.nearest(projected, gate);
    return idx < 0 ? -1 : state.tree_features[idx].landmark;
  }
  int best = -1;
  double best_dist = gate;
  for (std::size_t i = 0; i < geometries.size(); ++i) {
    const double d = std::abs(cylinder_distance(geometries[i], projected));
    if (d < best_dist) {
      best_dist = d;
      best = static_cast<int>(i);
    }
  }
  return best;
}

std::optional<PlaneModel> associate_ground_impl(const Point3& projected,
                                                const OdometryState& state,
                                                int k_neighbors, double gate) {
  if (state.ground_grid.empty()) return std::nullopt;
  // Neighbors may spread wider than the gate; only the closest is gated.
  const std::vector<int> ids =
      state.ground_grid.k_nearest(projected, k_neighbors, 4.0 * gate);
  if (ids.size() < 3) return std::nullopt;
  if ((state.ground_grid.point(ids.front()) - projected).norm() > gate) {
    return std::nullopt;
  }
  std::vector<Point3> neighbors;
  neighbors.reserve(ids.size());
  for (int id : ids) neighbors.push_back(state.ground_grid.point(id));
  try {
    return fit_plane_svd(neighbors);
  } catch (const Error&) {
    return std::nullopt;  // degenerate neighborhood
  }
}

}  // namespace

int associate_tree(const Point3& p, double rel_time, const OdometryState& state,
                   AssociationMethod method, const PoseTransform& guess,
                   double gate) {
  std::vector<CylinderGeometry> geometries;
  if (method == AssociationMethod::ModelDistance) {
    geometries.reserve(state.landmarks.size());
    for (const CylinderModel& l : state.landmarks) {
      geometries.push_back(cylinder_geometry(l));
    }
  }
  return associate_tree_impl(transform_point_interp(guess, rel_time, p), state,
                             geometries, method, gate);
}

std::optional<PlaneModel> associate_ground(const Point3& p, double rel_time,
                                           const OdometryState& state,
                                           const PoseTransform& guess,
                                           int k_neighbors, double gate) {
  return associate_ground_impl(transform_point_interp(guess, rel_time, p),
                               state, k_neighbors, gate);
}

ResidualSet assemble_residuals(const FeatureCloud& features,
                               const OdometryState& state,
                               const PoseTransform& guess,
                               const OdometrySettings& settings) {
  ResidualSet rs;
  rs.tree_feature_count = features.tree.size();
  rs.ground_feature_count = features.ground.size();
  std::tie(rs.lambda_tree, rs.lambda_ground) =
      balance_weights(rs.tree_feature_count, rs.ground_feature_count);

  std::vector<CylinderGeometry> geometries;
  geometries.reserve(state.landmarks.size());
  for (const CylinderModel& l : state.landmarks) {
    geometries.push_back(cylinder_geometry(l));
  }

  std::vector<int> tree_match(features.tree.size(), -1);
  parallel_for(features.tree.size(), settings.threads, [&](std::size_t j) {
    const TimedPoint& f = features.tree[j];
    const Point3 projected = transform_point_interp(guess, f.rel_time, f.point);
    tree_match[j] = associate_tree_impl(projected, state, geometries,
                                        settings.association,
                                        settings.assoc_gate_tree);
  });

  std::vector<std::optional<PlaneModel>> ground_match(features.ground.size());
  parallel_for(features.ground.size(), settings.threads, [&](std::size_t l) {
    const TimedPoint& f = features.ground[l];
    const Point3 projected = transform_point_interp(guess, f.rel_time, f.point);
    ground_match[l] = associate_ground_impl(projected, state,
                                            settings.ground_k_neighbors,
                                            settings.assoc_gate_ground);
  });

  for (std::size_t j = 0; j < features.tree.size(); ++j) {
    if (tree_match[j] < 0) continue;
    rs.tree.push_back({features.tree[j].point, features.tree[j].rel_time,
                       tree_match[j], geometries[tree_match[j]]});
  }
  for (std::size_t l = 0; l < features.ground.size(); ++l) {
    if (!ground_match[l]) continue;
    rs.ground.push_back({features.ground[l].point, features.ground[l].rel_time,
                         *ground_match[l]});
  }
  return rs;
}

namespace {

struct ResidualRow {
  Vec6 gradient = Vec6::Zero();
  double value{0.0};
  double weight{1.0};
};

ResidualRow tree_row(const ResidualSet::TreeResidual& r,
                     const PoseTransform& pose, double weight) {
  ResidualRow row;
  const Point3 projected = transform_point_interp(pose, r.rel_time, r.point);
  row.value = cylinder_distance(r.geometry, projected);
  const Vec3 grad = cylinder_distance_gradient(r.geometry, projected);
  row.gradient =
      (grad.transpose() * transform_point_jacobian(pose, r.rel_time, r.point))
          .transpose();
  row.weight = weight;
  return row;
}

ResidualRow ground_row(const ResidualSet::GroundResidual& r,
                       const PoseTransform& pose, double weight) {
  ResidualRow row;
  const Point3 projected = transform_point_interp(pose, r.rel_time, r.point);
  row.value = plane_distance(r.plane, projected);
  const Vec3 grad = plane_distance_gradient(r.plane);
  row.gradient =
      (grad.transpose() * transform_point_jacobian(pose, r.rel_time, r.point))
          .transpose();
  row.weight = weight;
  return row;
}

void accumulate(NormalEquations& ne, const ResidualRow& row) {
  ne.jtj += row.weight * (row.gradient * row.gradient.transpose());
  ne.jtr += row.weight * row.value * row.gradient;
  ne.cost += row.weight * row.value * row.value;
  ++ne.rows;
}

}  // namespace

NormalEquations build_normal_equations_serial(const ResidualSet& residuals,
                                              const PoseTransform& pose) {
  NormalEquations ne;
  for (const auto& r : residuals.tree) {
    accumulate(ne, tree_row(r, pose, residuals.lambda_tree));
  }
  for (const auto& r : residuals.ground) {
    accumulate(ne, ground_row(r, pose, residuals.lambda_ground));
  }
  return ne;
}

NormalEquations build_normal_equations_parallel(const ResidualSet& residuals,
                                                const PoseTransform& pose,
                                                int threads) {
  const std::size_t nt = residuals.tree.size();
  const std::size_t ng = residuals.ground.size();
  std::vector<ResidualRow> rows(nt + ng);
  parallel_for(nt + ng, threads, [&](std::size_t i) {
    rows[i] = i < nt ? tree_row(residuals.tree[i], pose, residuals.lambda_tree)
                     : ground_row(residuals.ground[i - nt], pose,
                                  residuals.lambda_ground);
  });
  // Reduction in row order matches the serial accumulation bit for bit.
  NormalEquations ne;
  for (const ResidualRow& row : rows) accumulate(ne, row);
  return ne;
}

double residual_cost(const ResidualSet& residuals, const PoseTransform& pose) {
  double cost = 0.0;
  for (const auto& r : residuals.tree) {
    const double d = cylinder_distance(
        r.geometry, transform_point_interp(pose, r.rel_time, r.point));
    cost += residuals.lambda_tree * d * d;
  }
  for (const auto& r : residuals.ground) {
    const double d = plane_distance(
        r.plane, transform_point_interp(pose, r.rel_time, r.point));
    cost += residuals.lambda_ground * d * d;
  }
  return cost;
}

std::pair<PoseTransform, FitReport> estimate_motion(
    const FeatureCloud& features, const OdometryState& state,
    const OdometrySettings& settings, const PoseTransform& prediction) {
  settings.validate();

  PoseTransform pose = prediction;
  FitReport report;
  double damping = settings.solver.initial_damping;
  double last_cost = 0.0;

  for (int outer = 0; outer < settings.outer_iterations; ++outer) {
    report.iterations = outer + 1;
    const ResidualSet rs = assemble_residuals(features, state, pose, settings);
    if (rs.tree.empty() && rs.ground.empty()) {
      report.converged = false;
      report.condition_warning = true;
      report.degenerate_axes.fill(true);
      report.final_cost = 0.0;
      return {prediction, report};
    }

    const NormalEquations ne =
        build_normal_equations_parallel(rs, pose, settings.threads);
    last_cost = ne.cost;
    report.cost_history.push_back(ne.cost);

    Eigen::SelfAdjointEigenSolver<Mat6> eig(ne.jtj);
    const Vec6 evals = eig.eigenvalues();  // ascending
    const Mat6 evecs = eig.eigenvectors();
    const double cutoff =
        std::max(settings.degeneracy_threshold * std::max(evals(5), 0.0), 1e-12);
    std::array<bool, 6> degenerate_dirs{};
    for (int i = 0; i < 6; ++i) degenerate_dirs[i] = evals(i) <= cutoff;

    // An axis is unobservable when it mostly lies in the degenerate span;
    // its pose component stays at the prediction.
    report.degenerate_axes.fill(false);
    for (int axis = 0; axis < 6; ++axis) {
      double null_energy = 0.0;
      for (int i = 0; i < 6; ++i) {
        if (degenerate_dirs[i]) null_energy += evecs(axis, i) * evecs(axis, i);
      }
      if (null_energy > 0.5) report.degenerate_axes[axis] = true;
    }

    bool accepted = false;
    Vec6 step = Vec6::Zero();
    for (int attempt = 0; attempt < 8 && !accepted; ++attempt) {
      step.setZero();
      for (int i = 0; i < 6; ++i) {
        if (degenerate_dirs[i]) continue;
        const double gi = evecs.col(i).dot(ne.jtr);
        step -= evecs.col(i) * (gi / (evals(i) * (1.0 + damping)));
      }
      const PoseTransform trial =
          PoseTransform::from_vector(pose.as_vector() + step);
      const double trial_cost = residual_cost(rs, trial);
      if (trial_cost < ne.cost) {
        pose = trial;
        last_cost = trial_cost;
        damping = std::max(1e-12, damping / settings.solver.damping_decrease);
        accepted = true;
      } else {
        damping *= settings.solver.damping_increase;
      }
    }

    if (step.lpNorm<Eigen::Infinity>() < settings.solver.update_tolerance ||
        !accepted) {
      report.converged = true;
      break;
    }
  }

  report.final_cost = last_cost;
  bool any_degenerate = false;
  for (bool d : report.degenerate_axes) any_degenerate = any_degenerate || d;
  if (any_degenerate) {
    report.converged = false;
    report.condition_warning = true;
  }
  if (!pose.as_vector().allFinite()) {
    throw NumericalError("estimate_motion: non-finite pose");
  }
  return {pose, report};
}

namespace {

// Per-instance model update (approximate-distance least squares) with motion
// compensation by the current delta. Instances below the fit minimum keep
// their initialization.
std::vector<CylinderModel> update_models(const SweepFeatures& features,
                                         const PoseTransform& delta,
                                         const std::vector<CylinderModel>& inits,
                                         const OdometrySettings& settings) {
  const std::size_t n = features.tree_instances.size();
  std::vector<std::vector<Point3>> compensated(n);
  std::vector<std::size_t> fit_ids;
  for (std::size_t i = 0; i < n; ++i) {
    const TreeInstance& inst = features.tree_instances[i];
    compensated[i].reserve(inst.points.size());
    for (const InstanceCell& c : inst.points) {
      compensated[i].push_back(
          transform_point_interp(delta, c.rel_time, c.point));
    }
    if (compensated[i].size() >= 6) fit_ids.push_back(i);
  }

  std::vector<CylinderModel> models = inits;
  std::vector<std::vector<Point3>> fit_points;
  std::vector<CylinderModel> fit_inits;
  fit_points.reserve(fit_ids.size());
  for (std::size_t id : fit_ids) {
    fit_points.push_back(std::move(compensated[id]));
    fit_inits.push_back(inits[id]);
  }
  const auto results = fit_cylinders_parallel(fit_points, fit_inits,
                                              settings.solver, settings.threads);
  for (std::size_t k = 0; k < fit_ids.size(); ++k) {
    models[fit_ids[k]] = results[k].first;
  }
  return models;
}

// Warm start: if an instance's centroid matches a previous landmark, reuse
// that model; otherwise keep the trellis guess.
std::vector<CylinderModel> warm_starts(const SweepFeatures& features,
                                       const OdometryState& state,
                                       const PoseTransform& prediction,
                                       const OdometrySettings& settings) {
  std::vector<CylinderModel> inits = features.landmarks;
  if (state.tree_grid.empty()) return inits;
  for (std::size_t i = 0; i < features.tree_instances.size(); ++i) {
    const TreeInstance& inst = features.tree_instances[i];
    if (inst.points.empty()) continue;
    Point3 centroid = Point3::Zero();
    double mean_rel = 0.0;
    for (const InstanceCell& c : inst.points) {
      centroid += c.point;
      mean_rel += c.rel_time;
    }
    centroid /= static_cast<double>(inst.points.size());
    mean_rel /= static_cast<double>(inst.points.size());
    centroid = transform_point_interp(prediction, mean_rel, centroid);
    const int idx = state.tree_grid.nearest(centroid, settings.assoc_gate_tree);
    if (idx >= 0) inits[i] = state.landmarks[state.tree_features[idx].landmark];
  }
  return inits;
}

}  // namespace

OdometryOutput run_odometry_sweep(const SweepFeatures& features,
                                  OdometryState& state,
                                  const OdometrySettings& settings) {
  settings.validate();
  if (features.landmarks.size() != features.tree_instances.size()) {
    throw Error("sweep features: landmarks/instances size mismatch");
  }

  OdometryOutput out;
  const FeatureCloud cloud = flatten(features);

  PoseTransform delta = state.initialized ? state.prev_delta : PoseTransform{};
  std::vector<CylinderModel> models =
      warm_starts(features, state, delta, settings);
  FitReport report;
  report.converged = true;

  for (int pass = 0; pass < settings.n_odom; ++pass) {
    models = update_models(features, delta, models, settings);
    auto [new_delta, motion_report] =
        estimate_motion(cloud, state, settings, delta);
    delta = new_delta;
    report = motion_report;
    ++out.odometry_passes;
  }
  // Re-fit once with the final motion so the projected models match the
  // projected features (the in-loop fit used the pre-update delta).
  models = update_models(features, delta, models, settings);

  // Project models and features into the frame at the end of the sweep.
  const PoseTransform inv_delta = invert(delta);
  out.landmarks.reserve(models.size());
  for (const CylinderModel& m : models) {
    out.landmarks.push_back(transform_cylinder(inv_delta, m));
  }
  out.instance_points.resize(features.tree_instances.size());
  for (std::size_t i = 0; i < features.tree_instances.size(); ++i) {
    const TreeInstance& inst = features.tree_instances[i];
    out.instance_points[i].reserve(inst.points.size());
    for (const InstanceCell& c : inst.points) {
      out.instance_points[i].push_back(transform_point(
          inv_delta, transform_point_interp(delta, c.rel_time, c.point)));
    }
  }
  out.ground_points.reserve(features.ground_points.size());
  for (const TimedPoint& g : features.ground_points) {
    out.ground_points.push_back(transform_point(
        inv_delta, transform_point_interp(delta, g.rel_time, g.point)));
  }
  out.delta = delta;
  out.report = report;

  // The projected sweep becomes the reference for the next one.
  state.landmarks = out.landmarks;
  state.tree_features.clear();
  for (std::size_t i = 0; i < out.instance_points.size(); ++i) {
    for (const Point3& p : out.instance_points[i]) {
      state.tree_features.push_back({p, static_cast<int>(i)});
    }
  }
  state.ground_features = out.ground_points;
  state.prev_delta = delta;
  state.initialized = true;
  state.rebuild_grids(settings.assoc_gate_tree, settings.assoc_gate_ground);

  return out;
}

}  // namespace sloam
