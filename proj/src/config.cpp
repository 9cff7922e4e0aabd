#include "sloam/config.hpp"

#include <json.hpp>

#include <cmath>
#include <fstream>

namespace sloam {

using nlohmann::json;

namespace {

// Applies known keys and rejects unknown ones so config typos fail loudly.
class SectionReader {
 public:
  SectionReader(const json& j, std::string name) : name_(std::move(name)) {
    if (!j.is_object()) throw Error("config." + name_ + ": must be an object");
    for (auto it = j.begin(); it != j.end(); ++it) {
      pending_[it.key()] = it.value();
    }
  }

  template <class T>
  void get(const char* key, T& out) {
    auto it = pending_.find(key);
    if (it == pending_.end()) return;
    try {
      out = it->second.get<T>();
    } catch (const json::exception&) {
      throw Error("config." + name_ + "." + key + ": wrong type");
    }
    pending_.erase(it);
  }

  void finish() const {
    if (!pending_.empty()) {
      throw Error("config." + name_ + ": unknown field '" +
                  pending_.begin()->first + "'");
    }
  }

 private:
  std::string name_;
  std::map<std::string, json> pending_;
};

}  // namespace

SensorModel PipelineConfig::sensor_model() const {
  SensorModel m;
  m.azimuth_bins = sweep.azimuth_bins;
  m.beam_elevations.resize(sweep.beams);
  const double lo = sweep.elev_min_deg * M_PI / 180.0;
  const double hi = sweep.elev_max_deg * M_PI / 180.0;
  for (int i = 0; i < sweep.beams; ++i) {
    const double f = sweep.beams > 1 ? static_cast<double>(i) / (sweep.beams - 1)
                                     : 0.0;
    m.beam_elevations[i] = lo + f * (hi - lo);
  }
  return m;
}

CircularGridSpec PipelineConfig::grid_spec() const {
  CircularGridSpec g;
  g.radial_edges = ground.radial_edges_m;
  g.angular_bins = ground.angular_bins;
  g.keep_lowest = ground.keep_lowest;
  return g;
}

HeuristicLabelSettings PipelineConfig::heuristic_settings() const {
  return {labels.heuristic_min_run, labels.heuristic_depth_tol_m};
}

SolverSettings PipelineConfig::cylinder_solver() const {
  SolverSettings s;
  s.max_iterations = cylinder_fit.max_iterations;
  s.initial_damping = cylinder_fit.initial_damping;
  s.damping_increase = cylinder_fit.damping_increase;
  s.damping_decrease = cylinder_fit.damping_decrease;
  s.update_tolerance = cylinder_fit.update_tolerance;
  s.residual_tolerance = cylinder_fit.residual_tolerance;
  return s;
}

OdometrySettings PipelineConfig::odometry_settings() const {
  OdometrySettings s;
  s.n_odom = odometry.n_odom;
  s.association = odometry.association == "model"
                      ? AssociationMethod::ModelDistance
                      : AssociationMethod::FeatureNeighbor;
  s.outer_iterations = odometry.outer_iterations;
  s.assoc_gate_tree = odometry.assoc_gate_tree_m;
  s.assoc_gate_ground = odometry.assoc_gate_ground_m;
  s.ground_k_neighbors = odometry.ground_k_neighbors;
  s.degeneracy_threshold = odometry.degeneracy_threshold;
  s.solver = cylinder_solver();
  s.threads = execution.threads;
  return s;
}

MappingSettings PipelineConfig::mapping_settings() const {
  MappingSettings s;
  s.new_tree_min_pts = mapping.new_tree_min_pts;
  s.min_obs = mapping.min_obs;
  s.feature_window_sweeps = mapping.feature_window_sweeps;
  s.refit_world_models = mapping.refit_world_models;
  s.breast_height = mapping.breast_height_m;
  return s;
}

EdgeWeightMode PipelineConfig::edge_weight_mode() const {
  return trellis.edge_weight == "focus" ? EdgeWeightMode::FocusDistance
                                        : EdgeWeightMode::CentroidDistance;
}

ExtractStrategy PipelineConfig::extract_strategy() const {
  return trellis.strategy == "viterbi" ? ExtractStrategy::Viterbi
                                       : ExtractStrategy::Greedy;
}

void PipelineConfig::validate() const {
  if (sweep.beams < 1 || sweep.beams > 128) {
    throw Error("config.sweep.beams: must be in [1, 128]");
  }
  if (sweep.azimuth_bins < 1 || sweep.azimuth_bins > 8192) {
    throw Error("config.sweep.azimuth_bins: must be in [1, 8192]");
  }
  if (!(sweep.elev_min_deg < sweep.elev_max_deg)) {
    throw Error("config.sweep.elev range: require min < max");
  }
  if (!(sweep.radius_min_m >= 0.0) ||
      !(sweep.radius_min_m < sweep.radius_max_m)) {
    throw Error("config.sweep.radius band: require 0 <= min < max");
  }
  if (labels.heuristic_min_run < 1) {
    throw Error("config.labels.heuristic_min_run: must be >= 1");
  }
  if (!(labels.heuristic_depth_tol_m > 0.0)) {
    throw Error("config.labels.heuristic_depth_tol_m: must be > 0");
  }
  grid_spec().validate();
  if (!(trellis.depth_tol_m > 0.0)) {
    throw Error("config.trellis.depth_tol_m: must be > 0");
  }
  if (!(trellis.max_edge_dist_m > 0.0)) {
    throw Error("config.trellis.max_edge_dist_m: must be > 0");
  }
  if (trellis.min_path_len < 1) {
    throw Error("config.trellis.min_path_len: must be >= 1");
  }
  if (!(trellis.max_path_cost_m > 0.0)) {
    throw Error("config.trellis.max_path_cost_m: must be > 0");
  }
  if (trellis.lookahead < 1) {
    throw Error("config.trellis.lookahead: must be >= 1");
  }
  if (trellis.edge_weight != "centroid" && trellis.edge_weight != "focus") {
    throw Error("config.trellis.edge_weight: must be 'centroid' or 'focus'");
  }
  if (trellis.strategy != "greedy" && trellis.strategy != "viterbi") {
    throw Error("config.trellis.strategy: must be 'greedy' or 'viterbi'");
  }
  if (cylinder_fit.min_points < 6) {
    throw Error("config.cylinder_fit.min_points: must be >= 6");
  }
  cylinder_solver().validate();
  if (odometry.association != "feature" && odometry.association != "model") {
    throw Error("config.odometry.association: must be 'feature' or 'model'");
  }
  odometry_settings().validate();
  mapping_settings().validate();
  if (execution.threads < 0) {
    throw Error("config.execution.threads: must be >= 0");
  }
}

std::string PipelineConfig::to_json_text() const {
  json j;
  j["sweep"] = {{"beams", sweep.beams},
                {"elev_min_deg", sweep.elev_min_deg},
                {"elev_max_deg", sweep.elev_max_deg},
                {"azimuth_bins", sweep.azimuth_bins},
                {"radius_min_m", sweep.radius_min_m},
                {"radius_max_m", sweep.radius_max_m}};
  const char* provider = "groundtruth";
  if (labels.provider == LabelProviderKind::File) provider = "file";
  if (labels.provider == LabelProviderKind::Heuristic) provider = "heuristic";
  j["labels"] = {{"provider", provider},
                 {"heuristic_min_run", labels.heuristic_min_run},
                 {"heuristic_depth_tol_m", labels.heuristic_depth_tol_m}};
  j["ground"] = {{"radial_edges_m", ground.radial_edges_m},
                 {"angular_bins", ground.angular_bins},
                 {"keep_lowest", ground.keep_lowest}};
  j["trellis"] = {{"depth_tol_m", trellis.depth_tol_m},
                  {"max_edge_dist_m", trellis.max_edge_dist_m},
                  {"min_path_len", trellis.min_path_len},
                  {"max_path_cost_m", trellis.max_path_cost_m},
                  {"lookahead", trellis.lookahead},
                  {"edge_weight", trellis.edge_weight},
                  {"strategy", trellis.strategy}};
  j["cylinder_fit"] = {{"max_iterations", cylinder_fit.max_iterations},
                       {"initial_damping", cylinder_fit.initial_damping},
                       {"damping_increase", cylinder_fit.damping_increase},
                       {"damping_decrease", cylinder_fit.damping_decrease},
                       {"update_tolerance", cylinder_fit.update_tolerance},
                       {"residual_tolerance", cylinder_fit.residual_tolerance},
                       {"min_points", cylinder_fit.min_points}};
  j["odometry"] = {{"n_odom", odometry.n_odom},
                   {"association", odometry.association},
                   {"outer_iterations", odometry.outer_iterations},
                   {"assoc_gate_tree_m", odometry.assoc_gate_tree_m},
                   {"assoc_gate_ground_m", odometry.assoc_gate_ground_m},
                   {"ground_k_neighbors", odometry.ground_k_neighbors},
                   {"degeneracy_threshold", odometry.degeneracy_threshold}};
  j["mapping"] = {{"new_tree_min_pts", mapping.new_tree_min_pts},
                  {"min_obs", mapping.min_obs},
                  {"feature_window_sweeps", mapping.feature_window_sweeps},
                  {"refit_world_models", mapping.refit_world_models},
                  {"breast_height_m", mapping.breast_height_m}};
  j["execution"] = {{"threads", execution.threads}};
  return j.dump(2) + "\n";
}

PipelineConfig PipelineConfig::from_json_text(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw Error(std::string("config: invalid JSON: ") + e.what());
  }
  if (!j.is_object()) throw Error("config: top level must be an object");

  PipelineConfig cfg;
  for (auto it = j.begin(); it != j.end(); ++it) {
    const std::string& section = it.key();
    if (section == "sweep") {
      SectionReader r(it.value(), section);
      r.get("beams", cfg.sweep.beams);
      r.get("elev_min_deg", cfg.sweep.elev_min_deg);
      r.get("elev_max_deg", cfg.sweep.elev_max_deg);
      r.get("azimuth_bins", cfg.sweep.azimuth_bins);
      r.get("radius_min_m", cfg.sweep.radius_min_m);
      r.get("radius_max_m", cfg.sweep.radius_max_m);
      r.finish();
    } else if (section == "labels") {
      SectionReader r(it.value(), section);
      std::string provider = "groundtruth";
      r.get("provider", provider);
      if (provider == "groundtruth") {
        cfg.labels.provider = LabelProviderKind::GroundTruth;
      } else if (provider == "file") {
        cfg.labels.provider = LabelProviderKind::File;
      } else if (provider == "heuristic") {
        cfg.labels.provider = LabelProviderKind::Heuristic;
      } else {
        throw Error("config.labels.provider: must be one of "
                    "'groundtruth', 'file', 'heuristic'");
      }
      r.get("heuristic_min_run", cfg.labels.heuristic_min_run);
      r.get("heuristic_depth_tol_m", cfg.labels.heuristic_depth_tol_m);
      r.finish();
    } else if (section == "ground") {
      SectionReader r(it.value(), section);
      r.get("radial_edges_m", cfg.ground.radial_edges_m);
      r.get("angular_bins", cfg.ground.angular_bins);
      r.get("keep_lowest", cfg.ground.keep_lowest);
      r.finish();
    } else if (section == "trellis") {
      SectionReader r(it.value(), section);
      r.get("depth_tol_m", cfg.trellis.depth_tol_m);
      r.get("max_edge_dist_m", cfg.trellis.max_edge_dist_m);
      r.get("min_path_len", cfg.trellis.min_path_len);
      r.get("max_path_cost_m", cfg.trellis.max_path_cost_m);
      r.get("lookahead", cfg.trellis.lookahead);
      r.get("edge_weight", cfg.trellis.edge_weight);
      r.get("strategy", cfg.trellis.strategy);
      r.finish();
    } else if (section == "cylinder_fit") {
      SectionReader r(it.value(), section);
      r.get("max_iterations", cfg.cylinder_fit.max_iterations);
      r.get("initial_damping", cfg.cylinder_fit.initial_damping);
      r.get("damping_increase", cfg.cylinder_fit.damping_increase);
      r.get("damping_decrease", cfg.cylinder_fit.damping_decrease);
      r.get("update_tolerance", cfg.cylinder_fit.update_tolerance);
      r.get("residual_tolerance", cfg.cylinder_fit.residual_tolerance);
      r.get("min_points", cfg.cylinder_fit.min_points);
      r.finish();
    } else if (section == "odometry") {
      SectionReader r(it.value(), section);
      r.get("n_odom", cfg.odometry.n_odom);
      r.get("association", cfg.odometry.association);
      r.get("outer_iterations", cfg.odometry.outer_iterations);
      r.get("assoc_gate_tree_m", cfg.odometry.assoc_gate_tree_m);
      r.get("assoc_gate_ground_m", cfg.odometry.assoc_gate_ground_m);
      r.get("ground_k_neighbors", cfg.odometry.ground_k_neighbors);
      r.get("degeneracy_threshold", cfg.odometry.degeneracy_threshold);
      r.finish();
    } else if (section == "mapping") {
      SectionReader r(it.value(), section);
      r.get("new_tree_min_pts", cfg.mapping.new_tree_min_pts);
      r.get("min_obs", cfg.mapping.min_obs);
      r.get("feature_window_sweeps", cfg.mapping.feature_window_sweeps);
      r.get("refit_world_models", cfg.mapping.refit_world_models);
      r.get("breast_height_m", cfg.mapping.breast_height_m);
      r.finish();
    } else if (section == "execution") {
      SectionReader r(it.value(), section);
      r.get("threads", cfg.execution.threads);
      r.finish();
    } else {
      throw Error("config: unknown section '" + section + "'");
    }
  }
  cfg.validate();
  return cfg;
}

PipelineConfig PipelineConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open config: " + path.string());
  std::string text((std::istreambuf_iterator<char>(in)),
                   std::istreambuf_iterator<char>());
  return from_json_text(text);
}

}  // namespace sloam
