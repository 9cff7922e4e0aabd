#include "sloam/pipeline.hpp"

#include "sloam/parallel.hpp"
#include "sloam/segmentation.hpp"
#include "sloam/stats.hpp"

#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <memory>
#include <ostream>

namespace sloam {

using nlohmann::json;

SweepFeatures extract_features(const OrganizedSweep& sweep,
                               const PipelineConfig& config) {
  SweepFeatures features;
  features.ground_points = ground_segment(sweep, config.grid_spec());

  auto slices = build_vertices(sweep, config.trellis.depth_tol_m);
  TrellisGraph graph =
      build_edges(std::move(slices), config.trellis.max_edge_dist_m,
                  config.trellis.lookahead, config.edge_weight_mode());
  features.tree_instances =
      extract_instances(graph, config.trellis.min_path_len,
                        config.trellis.max_path_cost_m,
                        config.extract_strategy());

  features.landmarks.reserve(features.tree_instances.size());
  for (const TreeInstance& inst : features.tree_instances) {
    features.landmarks.push_back(
        inst.route_focus.size() >= 2
            ? initial_cylinder_guess(inst)
            : cylinder_guess_from_focus_points(inst.route_focus,
                                               median_of(inst.route_radius)));
  }
  return features;
}

PipelineResult run_pipeline(const std::vector<OrganizedSweep>& sweeps,
                            const PipelineConfig& config, std::ostream* log,
                            int verbosity,
                            const std::filesystem::path* instance_dump_dir) {
  config.validate();
  OdometrySettings odo = config.odometry_settings();
  odo.threads = resolve_threads(config.execution.threads);
  const MappingSettings mapping = config.mapping_settings();

  std::unique_ptr<LabelProvider> provider;
  switch (config.labels.provider) {
    case LabelProviderKind::GroundTruth:
      provider = std::make_unique<GroundTruthLabelProvider>();
      break;
    case LabelProviderKind::Heuristic:
      provider =
          std::make_unique<HeuristicLabelProvider>(config.heuristic_settings());
      break;
    case LabelProviderKind::File:
      throw Error("run_pipeline: the file label provider needs the file-based "
                  "front end");
  }

  PipelineResult result;
  OdometryState state;

  for (const OrganizedSweep& raw : sweeps) {
    const auto t0 = std::chrono::steady_clock::now();

    OrganizedSweep sweep =
        radius_band_filter(raw, config.sweep.radius_min_m,
                           config.sweep.radius_max_m);
    sweep = provider->label(sweep, sweep.index());
    SweepFeatures features = extract_features(sweep, config);

    if (instance_dump_dir != nullptr) {
      char name[64];
      std::snprintf(name, sizeof(name), "instances_%06llu.csv",
                    static_cast<unsigned long long>(sweep.index()));
      write_instances_csv(features.tree_instances, *instance_dump_dir / name);
    }

    OdometryOutput odo_out = run_odometry_sweep(features, state, odo);
    result.counters.odometry_passes += odo_out.odometry_passes;

    update_map(odo_out, sweep.index(), result.map, odo, mapping);
    ++result.counters.mapping_updates;
    ++result.counters.sweeps;

    result.sweep_times.push_back(sweep.start_time());
    result.sweep_converged.push_back(odo_out.report.converged);

    const auto t1 = std::chrono::steady_clock::now();
    const double ms =
        std::chrono::duration<double, std::milli>(t1 - t0).count();
    result.sweep_ms.push_back(ms);
    if (log != nullptr && verbosity >= 1) {
      char line[160];
      std::snprintf(line, sizeof(line),
                    "sweep %llu: %zu instances, %zu ground, %.1f ms\n",
                    static_cast<unsigned long long>(sweep.index()),
                    features.tree_instances.size(),
                    features.ground_points.size(), ms);
      (*log) << line << std::flush;
    }
  }

  result.inventory =
      dbh_report(result.map, mapping.breast_height, mapping.min_obs);
  return result;
}

std::vector<std::filesystem::path> discover_sweeps(
    const std::filesystem::path& dir) {
  std::vector<std::filesystem::path> files;
  if (!std::filesystem::is_directory(dir)) {
    throw Error("no sweeps found: not a directory: " + dir.string());
  }
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    const std::string name = entry.path().filename().string();
    if (name.rfind("sweep_", 0) == 0 && entry.path().extension() == ".bin") {
      files.push_back(entry.path());
    }
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) throw Error("no sweeps found in " + dir.string());
  return files;
}

PipelineResult run_pipeline_files(const std::filesystem::path& in_dir,
                                  const std::filesystem::path& out_dir,
                                  const PipelineConfig& config,
                                  std::ostream* log, int verbosity) {
  const auto files = discover_sweeps(in_dir);

  std::vector<OrganizedSweep> sweeps;
  sweeps.reserve(files.size());
  for (const auto& f : files) sweeps.push_back(read_sweep(f));
  std::sort(sweeps.begin(), sweeps.end(),
            [](const OrganizedSweep& a, const OrganizedSweep& b) {
              return a.index() < b.index();
            });

  if (config.labels.provider == LabelProviderKind::File) {
    FileLabelProvider provider(in_dir);
    for (OrganizedSweep& s : sweeps) s = provider.label(s, s.index());
  }
  PipelineConfig cfg = config;
  if (cfg.labels.provider == LabelProviderKind::File) {
    cfg.labels.provider = LabelProviderKind::GroundTruth;  // labels applied
  }

  std::filesystem::create_directories(out_dir);
  std::filesystem::path dump_dir = out_dir / "instances";
  const std::filesystem::path* dump = nullptr;
  if (verbosity >= 2) {
    std::filesystem::create_directories(dump_dir);
    dump = &dump_dir;
  }

  PipelineResult result = run_pipeline(sweeps, cfg, log, verbosity, dump);

  write_trajectory_csv(result, out_dir / "trajectory.csv");
  export_map(result.map, out_dir, config.mapping.breast_height_m);
  write_inventory_json(result.inventory, out_dir / "inventory.json");
  return result;
}

void write_trajectory_csv(const PipelineResult& result,
                          const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot open for writing: " + path.string());
  out << "k,t,tx,ty,tz,thx,thy,thz,converged\n";

  const std::size_t n = result.map.trajectory.size();
  char line[256];
  for (std::size_t k = 0; k < n; ++k) {
    double t = 0.0;
    if (k < result.sweep_times.size()) {
      t = result.sweep_times[k];
    } else if (!result.sweep_times.empty()) {
      const double period =
          result.sweep_times.size() > 1
              ? result.sweep_times[1] - result.sweep_times[0]
              : 0.0;
      t = result.sweep_times.back() + period;
    }
    const PoseTransform& pose = result.map.trajectory[k];
    const bool converged = k == 0 || result.sweep_converged[k - 1];
    std::snprintf(line, sizeof(line),
                  "%zu,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%d\n", k, t,
                  pose.translation.x(), pose.translation.y(),
                  pose.translation.z(), pose.rotation.x(), pose.rotation.y(),
                  pose.rotation.z(), converged ? 1 : 0);
    out << line;
  }
}

void write_inventory_json(const InventoryReport& report,
                          const std::filesystem::path& path) {
  json trees = json::array();
  for (const InventoryItem& item : report.trees) {
    trees.push_back({{"id", item.id},
                     {"x", item.position.x()},
                     {"y", item.position.y()},
                     {"z", item.position.z()},
                     {"dbh_m", item.dbh},
                     {"dbh_in", item.dbh * 39.3701},
                     {"obs", item.observations}});
  }
  json j = {{"n_trees", static_cast<int>(report.trees.size())},
            {"trees", trees}};
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot open for writing: " + path.string());
  out << j.dump(2) << "\n";
}

// --- evaluation --------------------------------------------------------------

namespace {

std::vector<std::vector<double>> read_csv_rows(
    const std::filesystem::path& path, std::size_t min_fields) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open: " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw Error("empty file: " + path.string());
  std::vector<std::vector<double>> rows;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<double> fields;
    std::size_t pos = 0;
    while (pos <= line.size()) {
      const std::size_t comma = line.find(',', pos);
      const std::string cell =
          line.substr(pos, comma == std::string::npos ? comma : comma - pos);
      try {
        fields.push_back(std::stod(cell));
      } catch (const std::exception&) {
        throw Error("bad numeric field at " + path.string() + ":" +
                    std::to_string(line_no));
      }
      if (comma == std::string::npos) break;
      pos = comma + 1;
    }
    if (fields.size() < min_fields) {
      throw Error("short row at " + path.string() + ":" +
                  std::to_string(line_no));
    }
    rows.push_back(std::move(fields));
  }
  return rows;
}

PoseTransform pose_from_fields(const std::vector<double>& f, std::size_t off) {
  PoseTransform p;
  p.translation = Vec3(f[off], f[off + 1], f[off + 2]);
  p.rotation = Vec3(f[off + 3], f[off + 4], f[off + 5]);
  return p;
}

}  // namespace

EvalMetrics evaluate_run(const std::filesystem::path& run_dir,
                         const std::filesystem::path& truth_dir) {
  EvalMetrics m;

  // Trajectories: align truth to its first pose (the run starts at identity).
  const auto est_rows = read_csv_rows(run_dir / "trajectory.csv", 9);
  const auto truth_rows = read_csv_rows(truth_dir / "truth_poses.csv", 8);
  if (est_rows.empty() || truth_rows.empty()) {
    throw Error("evaluate_run: empty trajectory data");
  }
  const PoseTransform truth_origin = pose_from_fields(truth_rows.front(), 2);
  const PoseTransform align = invert(truth_origin);

  std::vector<Point3> truth_positions;
  truth_positions.reserve(truth_rows.size());
  for (const auto& row : truth_rows) {
    const PoseTransform pose = pose_from_fields(row, 2);
    truth_positions.push_back(
        transform_point(align, pose.translation));
  }
  for (std::size_t k = 1; k < truth_positions.size(); ++k) {
    m.path_length_m += (truth_positions[k] - truth_positions[k - 1]).norm();
  }

  const std::size_t n = std::min(est_rows.size(), truth_positions.size());
  double sq_sum = 0.0, abs_sum = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    const Point3 est(est_rows[k][2], est_rows[k][3], est_rows[k][4]);
    const double err = (est - truth_positions[k]).norm();
    sq_sum += err * err;
    abs_sum += err;
    if (k == n - 1) m.endpoint_drift_m = err;
  }
  m.ate_rmse_m = std::sqrt(sq_sum / static_cast<double>(n));
  m.ate_mean_m = abs_sum / static_cast<double>(n);
  m.drift_pct =
      m.path_length_m > 0.0 ? 100.0 * m.endpoint_drift_m / m.path_length_m : 0.0;

  // DBH: match inventory trees to truth by nearest planar position <= 1 m.
  std::ifstream inv_in(run_dir / "inventory.json");
  if (!inv_in) {
    throw Error("cannot open: " + (run_dir / "inventory.json").string());
  }
  json inv = json::parse(inv_in);
  struct ReportTree {
    Point3 pos;
    double dbh;
  };
  std::vector<ReportTree> detected;
  for (const auto& t : inv.at("trees")) {
    detected.push_back({Point3(t.at("x").get<double>(), t.at("y").get<double>(),
                               t.at("z").get<double>()),
                        t.at("dbh_m").get<double>()});
  }
  const auto tree_rows = read_csv_rows(truth_dir / "truth_trees.csv", 8);
  struct TruthTree {
    Point3 pos;
    double dbh;
  };
  std::vector<TruthTree> truth_trees;
  for (const auto& row : tree_rows) {
    truth_trees.push_back(
        {transform_point(align, Point3(row[1], row[2], row[3])), row[7]});
  }

  m.n_true = static_cast<int>(truth_trees.size());
  m.n_detected = static_cast<int>(detected.size());

  struct Pair {
    double dist;
    std::size_t det, truth;
  };
  std::vector<Pair> pairs;
  for (std::size_t i = 0; i < detected.size(); ++i) {
    for (std::size_t j = 0; j < truth_trees.size(); ++j) {
      const double d = std::hypot(detected[i].pos.x() - truth_trees[j].pos.x(),
                                  detected[i].pos.y() - truth_trees[j].pos.y());
      if (d <= 1.0) pairs.push_back({d, i, j});
    }
  }
  std::sort(pairs.begin(), pairs.end(), [](const Pair& a, const Pair& b) {
    if (a.dist != b.dist) return a.dist < b.dist;
    if (a.det != b.det) return a.det < b.det;
    return a.truth < b.truth;
  });
  std::vector<bool> det_used(detected.size(), false);
  std::vector<bool> truth_used(truth_trees.size(), false);
  std::vector<double> errors;
  for (const Pair& p : pairs) {
    if (det_used[p.det] || truth_used[p.truth]) continue;
    det_used[p.det] = true;
    truth_used[p.truth] = true;
    errors.push_back(std::abs(detected[p.det].dbh - truth_trees[p.truth].dbh));
  }
  m.n_matched = static_cast<int>(errors.size());
  m.n_missed = m.n_true - m.n_matched;
  if (!errors.empty()) {
    m.dbh_mean_abs_err_m = 0.0;
    m.dbh_max_abs_err_m = 0.0;
    m.dbh_min_abs_err_m = errors.front();
    for (double e : errors) {
      m.dbh_mean_abs_err_m += e;
      m.dbh_max_abs_err_m = std::max(m.dbh_max_abs_err_m, e);
      m.dbh_min_abs_err_m = std::min(m.dbh_min_abs_err_m, e);
    }
    m.dbh_mean_abs_err_m /= static_cast<double>(errors.size());
    m.dbh_median_abs_err_m = median_of(errors);
  }
  return m;
}

void write_metrics_json(const EvalMetrics& m,
                        const std::filesystem::path& path) {
  json j = {{"endpoint_drift_m", m.endpoint_drift_m},
            {"drift_pct", m.drift_pct},
            {"path_length_m", m.path_length_m},
            {"ate_rmse_m", m.ate_rmse_m},
            {"ate_mean_m", m.ate_mean_m},
            {"dbh",
             {{"mean_abs_err_m", m.dbh_mean_abs_err_m},
              {"median_abs_err_m", m.dbh_median_abs_err_m},
              {"max_abs_err_m", m.dbh_max_abs_err_m},
              {"min_abs_err_m", m.dbh_min_abs_err_m},
              {"n_true", m.n_true},
              {"n_detected", m.n_detected},
              {"n_matched", m.n_matched},
              {"n_missed", m.n_missed}}}};
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot open for writing: " + path.string());
  out << j.dump(2) << "\n";
}

}  // namespace sloam
