#pragma once

#include "sloam/sweep.hpp"
#include "sloam/types.hpp"

#include <filesystem>
#include <memory>
#include <vector>

namespace sloam {

// Circular grid around the sensor used for ground extraction: annular bins by
// planar distance, angular bins by azimuth; the keep_lowest lowest-z points
// survive per cell.
struct CircularGridSpec {
  std::vector<double> radial_edges{1.0, 3.0, 6.0, 10.0, 16.0, 25.0};  // meters
  int angular_bins{16};
  int keep_lowest{3};

  void validate() const;
};

// Ground feature extraction: cells already labeled Tree are excluded as
// candidates, every other present cell competes within its grid bin and the
// keep_lowest lowest points (by z) are returned.
std::vector<TimedPoint> ground_segment(const OrganizedSweep& sweep,
                                       const CircularGridSpec& grid);

struct HeuristicLabelSettings {
  int min_vertical_run{4};    // beams
  double depth_tolerance{0.3};  // meters between consecutive beams
};

// Stand-in tree labeler: marks as Tree the cells of range-consistent vertical
// runs within an azimuth column. Everything else keeps its label if it was
// Ground, otherwise becomes Other.
OrganizedSweep heuristic_tree_labels(const OrganizedSweep& sweep,
                                     const HeuristicLabelSettings& settings);

// Pluggable source of per-cell semantic labels.
class LabelProvider {
 public:
  virtual ~LabelProvider() = default;
  // Returns the sweep with labels assigned to every present cell.
  virtual OrganizedSweep label(const OrganizedSweep& sweep,
                               std::uint64_t sweep_index) = 0;
};

// Uses the labels already carried by the sweep (simulator ground truth).
class GroundTruthLabelProvider final : public LabelProvider {
 public:
  OrganizedSweep label(const OrganizedSweep& sweep, std::uint64_t) override {
    return sweep;
  }
};

// Reads labels_<k>.csv sidecars next to the sweep logs.
class FileLabelProvider final : public LabelProvider {
 public:
  explicit FileLabelProvider(std::filesystem::path dir) : dir_(std::move(dir)) {}
  OrganizedSweep label(const OrganizedSweep& sweep,
                       std::uint64_t sweep_index) override;

 private:
  std::filesystem::path dir_;
};

class HeuristicLabelProvider final : public LabelProvider {
 public:
  explicit HeuristicLabelProvider(HeuristicLabelSettings settings)
      : settings_(settings) {}
  OrganizedSweep label(const OrganizedSweep& sweep, std::uint64_t) override {
    return heuristic_tree_labels(sweep, settings_);
  }

 private:
  HeuristicLabelSettings settings_;
};

// Label sidecar: CSV beam,col,label with 0=Other, 1=Tree, 2=Ground.
void write_label_sidecar(const OrganizedSweep& sweep,
                         const std::filesystem::path& path);
void apply_label_sidecar(OrganizedSweep& sweep,
                         const std::filesystem::path& path);

}  // namespace sloam
