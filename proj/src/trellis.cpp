#include "sloam/trellis.hpp"

#include "sloam/stats.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

namespace sloam {

namespace {

double planar_azimuth(const Point3& p) {
  double a = std::atan2(p.y(), p.x());
  if (a < 0.0) a += 2.0 * M_PI;
  return a;
}

void finalize_vertex(TrellisVertex& v) {
  Point3 sum = Point3::Zero();
  for (const InstanceCell& c : v.cells) sum += c.point;
  v.centroid = sum / static_cast<double>(v.cells.size());

  // Focus point: mean of the two mutually farthest members.
  double best = -1.0;
  std::size_t bi = 0, bj = 0;
  for (std::size_t i = 0; i < v.cells.size(); ++i) {
    for (std::size_t j = i; j < v.cells.size(); ++j) {
      const double d2 = (v.cells[i].point - v.cells[j].point).squaredNorm();
      if (d2 > best) {
        best = d2;
        bi = i;
        bj = j;
      }
    }
  }
  v.focus = 0.5 * (v.cells[bi].point + v.cells[bj].point);
  v.radius = 0.5 * std::sqrt(std::max(0.0, best));
}

}  // namespace

std::vector<std::vector<TrellisVertex>> build_vertices(
    const OrganizedSweep& sweep, double depth_tol) {
  const int w = sweep.azimuth_bins();
  std::vector<std::vector<TrellisVertex>> slices(sweep.beams());

  for (int b = 0; b < sweep.beams(); ++b) {
    std::vector<TrellisVertex>& slice = slices[b];
    TrellisVertex run;
    float prev_range = 0.0f;
    const auto flush = [&]() {
      if (!run.cells.empty()) {
        slice.push_back(std::move(run));
        run = TrellisVertex{};
      }
    };
    for (int c = 0; c < w; ++c) {
      const SweepCell& cell = sweep.cell(b, c);
      if (!cell.present || cell.label != SemanticLabel::Tree) {
        flush();
        continue;
      }
      if (!run.cells.empty() &&
          std::abs(static_cast<double>(cell.range) - prev_range) >= depth_tol) {
        flush();
      }
      if (run.cells.empty()) {
        run.beam = b;
        run.col_begin = c;
      }
      run.cells.push_back({b, c, cell.point(), cell.rel_time});
      run.col_count = c - run.col_begin + 1;
      prev_range = cell.range;
    }
    flush();

    // Merge a run pair straddling the azimuth wrap seam.
    if (slice.size() >= 2) {
      TrellisVertex& first = slice.front();
      TrellisVertex& last = slice.back();
      const bool touches_seam = first.col_begin == 0 &&
                                last.col_begin + last.col_count == w;
      if (touches_seam &&
          std::abs(static_cast<double>(sweep.cell(b, w - 1).range) -
                   sweep.cell(b, 0).range) < depth_tol) {
        last.cells.insert(last.cells.end(), first.cells.begin(),
                          first.cells.end());
        last.col_count += first.col_count;
        slice.erase(slice.begin());
      }
    }

    for (TrellisVertex& v : slice) finalize_vertex(v);
  }
  return slices;
}

TrellisGraph build_edges(std::vector<std::vector<TrellisVertex>> slices,
                         double max_edge_dist, int lookahead,
                         EdgeWeightMode mode) {
  TrellisGraph g;
  g.slices.resize(slices.size());
  for (std::size_t b = 0; b < slices.size(); ++b) {
    for (TrellisVertex& v : slices[b]) {
      g.slices[b].push_back(static_cast<int>(g.vertices.size()));
      g.vertices.push_back(std::move(v));
    }
  }

  g.edges.resize(g.vertices.size());
  const int beams = static_cast<int>(g.slices.size());
  for (int b = 0; b < beams; ++b) {
    for (int vid : g.slices[b]) {
      const TrellisVertex& v = g.vertices[vid];
      for (int db = 1; db <= lookahead && b + db < beams; ++db) {
        for (int uid : g.slices[b + db]) {
          const TrellisVertex& u = g.vertices[uid];
          const double weight = mode == EdgeWeightMode::CentroidDistance
                                    ? (v.centroid - u.centroid).norm()
                                    : (v.focus - u.focus).norm();
          if (weight < max_edge_dist) g.edges[vid].push_back({uid, weight});
        }
      }
      // Deterministic selection order: weight, then earlier slice, then
      // smaller azimuth of the target centroid.
      std::sort(g.edges[vid].begin(), g.edges[vid].end(),
                [&](const TrellisEdge& a, const TrellisEdge& b2) {
                  if (a.weight != b2.weight) return a.weight < b2.weight;
                  const TrellisVertex& ta = g.vertices[a.to];
                  const TrellisVertex& tb = g.vertices[b2.to];
                  if (ta.beam != tb.beam) return ta.beam < tb.beam;
                  return planar_azimuth(ta.centroid) <
                         planar_azimuth(tb.centroid);
                });
    }
  }
  return g;
}

namespace {

TreeInstance make_instance(const TrellisGraph& g, const std::vector<int>& route,
                           double cost) {
  TreeInstance inst;
  inst.route = route;
  inst.path_cost = cost;
  inst.fork_flags.assign(route.size(), false);
  for (int vid : route) {
    const TrellisVertex& v = g.vertices[vid];
    inst.route_focus.push_back(v.focus);
    inst.route_radius.push_back(v.radius);
    inst.points.insert(inst.points.end(), v.cells.begin(), v.cells.end());
  }
  return inst;
}

void flag_forks(const TrellisGraph& g, std::vector<TreeInstance>& instances) {
  std::vector<int> owner(g.vertices.size(), -1);
  for (std::size_t i = 0; i < instances.size(); ++i) {
    for (int vid : instances[i].route) owner[vid] = static_cast<int>(i);
  }
  for (std::size_t i = 0; i < instances.size(); ++i) {
    TreeInstance& inst = instances[i];
    for (std::size_t pos = 0; pos < inst.route.size(); ++pos) {
      for (const TrellisEdge& e : g.edges[inst.route[pos]]) {
        const int other = owner[e.to];
        if (other >= 0 && other != static_cast<int>(i)) {
          inst.fork_flags[pos] = true;
          break;
        }
      }
    }
  }
}

std::vector<TreeInstance> extract_greedy(const TrellisGraph& g,
                                         int min_path_len,
                                         double max_path_cost) {
  std::vector<bool> consumed(g.vertices.size(), false);
  std::vector<TreeInstance> instances;

  for (std::size_t b = 0; b < g.slices.size(); ++b) {
    for (int start : g.slices[b]) {
      if (consumed[start]) continue;
      std::vector<int> route{start};
      double cost = 0.0;
      int cur = start;
      while (true) {
        const TrellisEdge* next = nullptr;
        for (const TrellisEdge& e : g.edges[cur]) {
          if (!consumed[e.to] &&
              std::find(route.begin(), route.end(), e.to) == route.end()) {
            next = &e;
            break;  // edges are pre-sorted by the tie-break order
          }
        }
        if (next == nullptr || cost + next->weight > max_path_cost) break;
        cost += next->weight;
        cur = next->to;
        route.push_back(cur);
      }
      if (static_cast<int>(route.size()) >= min_path_len &&
          cost <= max_path_cost) {
        for (int vid : route) consumed[vid] = true;
        instances.push_back(make_instance(g, route, cost));
      }
    }
  }
  flag_forks(g, instances);
  return instances;
}

std::vector<TreeInstance> extract_viterbi(const TrellisGraph& g,
                                          int min_path_len,
                                          double max_path_cost) {
  std::vector<bool> consumed(g.vertices.size(), false);
  std::vector<TreeInstance> instances;

  // In-edges, derived once.
  std::vector<std::vector<TrellisEdge>> in_edges(g.vertices.size());
  for (std::size_t v = 0; v < g.vertices.size(); ++v) {
    for (const TrellisEdge& e : g.edges[v]) {
      in_edges[e.to].push_back({static_cast<int>(v), e.weight});
    }
  }

  while (true) {
    // Longest (then cheapest) cost-bounded path over unconsumed vertices.
    const std::size_t n = g.vertices.size();
    std::vector<int> best_len(n, 0);
    std::vector<double> best_cost(n, 0.0);
    std::vector<int> pred(n, -1);
    for (const auto& slice : g.slices) {
      for (int vid : slice) {
        if (consumed[vid]) continue;
        best_len[vid] = 1;
        best_cost[vid] = 0.0;
        for (const TrellisEdge& e : in_edges[vid]) {
          if (consumed[e.to] || best_len[e.to] == 0) continue;
          const double c = best_cost[e.to] + e.weight;
          if (c > max_path_cost) continue;
          if (best_len[e.to] + 1 > best_len[vid] ||
              (best_len[e.to] + 1 == best_len[vid] && c < best_cost[vid])) {
            best_len[vid] = best_len[e.to] + 1;
            best_cost[vid] = c;
            pred[vid] = e.to;
          }
        }
      }
    }

    int terminal = -1;
    for (const auto& slice : g.slices) {
      for (int vid : slice) {
        if (consumed[vid] || best_len[vid] < min_path_len) continue;
        if (terminal < 0 || best_len[vid] > best_len[terminal] ||
            (best_len[vid] == best_len[terminal] &&
             best_cost[vid] < best_cost[terminal])) {
          terminal = vid;
        }
      }
    }
    if (terminal < 0) break;

    std::vector<int> route;
    for (int v = terminal; v >= 0; v = pred[v]) route.push_back(v);
    std::reverse(route.begin(), route.end());
    for (int vid : route) consumed[vid] = true;
    instances.push_back(make_instance(g, route, best_cost[terminal]));
  }

  // Order instances like the greedy scan: by starting slice, then column.
  std::sort(instances.begin(), instances.end(),
            [&](const TreeInstance& a, const TreeInstance& b) {
              const TrellisVertex& va = g.vertices[a.route.front()];
              const TrellisVertex& vb = g.vertices[b.route.front()];
              if (va.beam != vb.beam) return va.beam < vb.beam;
              return va.col_begin < vb.col_begin;
            });
  flag_forks(g, instances);
  return instances;
}

}  // namespace

std::vector<TreeInstance> extract_instances(const TrellisGraph& graph,
                                            int min_path_len,
                                            double max_path_cost,
                                            ExtractStrategy strategy) {
  if (min_path_len < 1) throw Error("trellis.min_path_len: must be >= 1");
  if (!(max_path_cost > 0.0)) throw Error("trellis.max_path_cost_m: must be > 0");
  return strategy == ExtractStrategy::Greedy
             ? extract_greedy(graph, min_path_len, max_path_cost)
             : extract_viterbi(graph, min_path_len, max_path_cost);
}

CylinderModel cylinder_guess_from_focus_points(
    const std::vector<Point3>& focus_points, double radius) {
  if (focus_points.empty()) {
    throw Error("cylinder_guess_from_focus_points: no focus points");
  }
  radius = std::max(radius, 0.02);

  Point3 mean = Point3::Zero();
  for (const Point3& f : focus_points) mean += f;
  mean /= static_cast<double>(focus_points.size());

  Mat3 scatter = Mat3::Zero();
  for (const Point3& f : focus_points) {
    const Vec3 d = f - mean;
    scatter += d * d.transpose();
  }

  Vec3 axis;
  Eigen::SelfAdjointEigenSolver<Mat3> eig(scatter);
  if (eig.eigenvalues()(2) < 1e-18) {
    axis = Vec3::UnitZ();  // coincident focus points
  } else {
    axis = eig.eigenvectors().col(2);  // largest eigenvalue
    // Deterministic sign: trees point up.
    if (axis.z() < 0.0 ||
        (axis.z() == 0.0 && (axis.x() < 0.0 ||
                             (axis.x() == 0.0 && axis.y() < 0.0)))) {
      axis = -axis;
    }
  }
  return cylinder_from_geometry(mean, axis, radius);
}

CylinderModel initial_cylinder_guess(const TreeInstance& instance) {
  if (instance.route_focus.size() < 2) {
    throw Error("initial_cylinder_guess: need a route of length >= 2");
  }
  return cylinder_guess_from_focus_points(instance.route_focus,
                                          median_of(instance.route_radius));
}

void write_instances_csv(const std::vector<TreeInstance>& instances,
                         const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot open for writing: " + path.string());
  out << "instance_id,beam,col,x,y,z\n";
  char line[256];
  for (std::size_t i = 0; i < instances.size(); ++i) {
    for (const InstanceCell& c : instances[i].points) {
      std::snprintf(line, sizeof(line), "%zu,%d,%d,%.9g,%.9g,%.9g\n", i, c.beam,
                    c.col, c.point.x(), c.point.y(), c.point.z());
      out << line;
    }
  }
}

}  // namespace sloam
