#include "sloam/segmentation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

namespace sloam {

void CircularGridSpec::validate() const {
  if (radial_edges.size() < 2) {
    throw Error("ground.radial_edges_m: need at least 2 edges");
  }
  for (std::size_t i = 1; i < radial_edges.size(); ++i) {
    if (!(radial_edges[i] > radial_edges[i - 1])) {
      throw Error("ground.radial_edges_m: must be strictly increasing");
    }
  }
  if (angular_bins < 4) throw Error("ground.angular_bins: must be >= 4");
  if (keep_lowest < 1) throw Error("ground.keep_lowest: must be >= 1");
}

std::vector<TimedPoint> ground_segment(const OrganizedSweep& sweep,
                                       const CircularGridSpec& grid) {
  grid.validate();
  const int radial_bins = static_cast<int>(grid.radial_edges.size()) - 1;

  struct Candidate {
    double z;
    int beam, col;
  };
  std::vector<std::vector<Candidate>> bins(
      static_cast<std::size_t>(radial_bins) * grid.angular_bins);

  for (int b = 0; b < sweep.beams(); ++b) {
    for (int c = 0; c < sweep.azimuth_bins(); ++c) {
      const SweepCell& cell = sweep.cell(b, c);
      if (!cell.present || cell.label == SemanticLabel::Tree) continue;
      const double planar = std::hypot(cell.x, cell.y);
      if (planar < grid.radial_edges.front() ||
          planar >= grid.radial_edges.back()) {
        continue;
      }
      const auto it = std::upper_bound(grid.radial_edges.begin(),
                                       grid.radial_edges.end(), planar);
      const int radial = static_cast<int>(it - grid.radial_edges.begin()) - 1;
      double azimuth = std::atan2(cell.y, cell.x);
      if (azimuth < 0.0) azimuth += 2.0 * M_PI;
      int angular = static_cast<int>(azimuth / (2.0 * M_PI) * grid.angular_bins);
      angular = std::clamp(angular, 0, grid.angular_bins - 1);
      bins[static_cast<std::size_t>(radial) * grid.angular_bins + angular]
          .push_back({static_cast<double>(cell.z), b, c});
    }
  }

  std::vector<TimedPoint> out;
  for (auto& bin : bins) {
    // Lowest keep_lowest by z; ties by cell position for determinism.
    std::sort(bin.begin(), bin.end(), [](const Candidate& a, const Candidate& b) {
      if (a.z != b.z) return a.z < b.z;
      if (a.beam != b.beam) return a.beam < b.beam;
      return a.col < b.col;
    });
    const std::size_t n = std::min<std::size_t>(bin.size(), grid.keep_lowest);
    for (std::size_t i = 0; i < n; ++i) {
      const SweepCell& cell = sweep.cell(bin[i].beam, bin[i].col);
      out.push_back({cell.point(), cell.rel_time});
    }
  }
  return out;
}

OrganizedSweep heuristic_tree_labels(const OrganizedSweep& sweep,
                                     const HeuristicLabelSettings& settings) {
  OrganizedSweep out = sweep;
  for (int b = 0; b < sweep.beams(); ++b) {
    for (int c = 0; c < sweep.azimuth_bins(); ++c) {
      if (sweep.present(b, c)) out.set_label(b, c, SemanticLabel::Other);
    }
  }

  // A trunk shows up as consecutive beams at nearly the same range within one
  // azimuth column; ground and scattered clutter do not.
  for (int c = 0; c < sweep.azimuth_bins(); ++c) {
    int run_start = -1;
    float prev_range = 0.0f;
    const auto flush = [&](int run_end) {
      if (run_start >= 0 && run_end - run_start >= settings.min_vertical_run) {
        for (int b = run_start; b < run_end; ++b) {
          out.set_label(b, c, SemanticLabel::Tree);
        }
      }
      run_start = -1;
    };
    for (int b = 0; b < sweep.beams(); ++b) {
      const SweepCell& cell = sweep.cell(b, c);
      if (!cell.present) {
        flush(b);
        continue;
      }
      if (run_start < 0) {
        run_start = b;
      } else if (std::abs(static_cast<double>(cell.range) - prev_range) >=
                 settings.depth_tolerance) {
        flush(b);
        run_start = b;
      }
      prev_range = cell.range;
    }
    flush(sweep.beams());
  }
  return out;
}

OrganizedSweep FileLabelProvider::label(const OrganizedSweep& sweep,
                                        std::uint64_t sweep_index) {
  char name[64];
  std::snprintf(name, sizeof(name), "labels_%06llu.csv",
                static_cast<unsigned long long>(sweep_index));
  OrganizedSweep out = sweep;
  apply_label_sidecar(out, dir_ / name);
  return out;
}

void write_label_sidecar(const OrganizedSweep& sweep,
                         const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot open for writing: " + path.string());
  out << "beam,col,label\n";
  for (int b = 0; b < sweep.beams(); ++b) {
    for (int c = 0; c < sweep.azimuth_bins(); ++c) {
      const SweepCell& cell = sweep.cell(b, c);
      if (!cell.present) continue;
      int code = 0;
      if (cell.label == SemanticLabel::Tree) code = 1;
      if (cell.label == SemanticLabel::Ground) code = 2;
      out << b << ',' << c << ',' << code << '\n';
    }
  }
}

void apply_label_sidecar(OrganizedSweep& sweep,
                         const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open label sidecar: " + path.string());
  std::string line;
  if (!std::getline(in, line)) {
    throw Error("empty label sidecar: " + path.string());
  }
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    int beam, col, code;
    if (std::sscanf(line.c_str(), "%d,%d,%d", &beam, &col, &code) != 3) {
      throw Error("malformed label sidecar row " + std::to_string(line_no) +
                  " in " + path.string());
    }
    if (beam < 0 || beam >= sweep.beams() || col < 0 ||
        col >= sweep.azimuth_bins() || code < 0 || code > 2) {
      throw Error("label sidecar row " + std::to_string(line_no) +
                  " out of range in " + path.string());
    }
    if (!sweep.present(beam, col)) continue;
    SemanticLabel label = SemanticLabel::Other;
    if (code == 1) label = SemanticLabel::Tree;
    if (code == 2) label = SemanticLabel::Ground;
    sweep.set_label(beam, col, label);
  }
}

}  // namespace sloam
