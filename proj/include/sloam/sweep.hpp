#pragma once

#include "sloam/types.hpp"

#include <cstdint>
#include <filesystem>
#include <utility>
#include <vector>

namespace sloam {

// Spinning-lidar sensor model: one elevation per beam (ascending) and a fixed
// number of azimuth bins per revolution.
struct SensorModel {
  std::vector<double> beam_elevations;  // radians, ascending
  int azimuth_bins{1800};

  int beams() const { return static_cast<int>(beam_elevations.size()); }

  // 16 beams, -15..+15 degrees uniform.
  static SensorModel vlp16(int azimuth_bins = 1800);
};

// One cell of the organized range image. Payload fields are stored at file
// precision (f32) so that in-memory sweeps match the on-disk representation
// exactly.
struct SweepCell {
  bool present{false};
  float range{0.0f};
  float x{0.0f}, y{0.0f}, z{0.0f};
  SemanticLabel label{SemanticLabel::Unknown};
  float rel_time{0.0f};

  Point3 point() const { return Point3(x, y, z); }
};

// h x w range image: rows are beams (low elevation first), columns are
// azimuth bins in spin order. Cells hold the raw 3D return in the
// instantaneous sensor frame plus its relative timestamp within the sweep.
class OrganizedSweep {
 public:
  OrganizedSweep() = default;
  OrganizedSweep(int beams, int azimuth_bins, double start_time = 0.0,
                 std::uint64_t index = 0);

  int beams() const { return h_; }
  int azimuth_bins() const { return w_; }
  double start_time() const { return start_time_; }
  std::uint64_t index() const { return index_; }
  void set_start_time(double t) { start_time_ = t; }
  void set_index(std::uint64_t k) { index_ = k; }

  const SweepCell& cell(int beam, int col) const { return at(beam, col); }
  bool present(int beam, int col) const { return at(beam, col).present; }

  // Stores a return; range is the norm of the point. Points with zero range
  // are rejected (cell left untouched) and reported via the return value.
  bool set_cell(int beam, int col, const Point3& point, SemanticLabel label,
                double rel_time);
  // Verbatim cell assignment (file readers).
  void set_cell_raw(int beam, int col, const SweepCell& cell) {
    at(beam, col) = cell;
  }
  void clear_cell(int beam, int col) { at(beam, col) = SweepCell{}; }
  void set_label(int beam, int col, SemanticLabel label);

  std::size_t present_count() const;

 private:
  const SweepCell& at(int beam, int col) const {
    return cells_[static_cast<std::size_t>(beam) * w_ + col];
  }
  SweepCell& at(int beam, int col) {
    return cells_[static_cast<std::size_t>(beam) * w_ + col];
  }

  int h_{0}, w_{0};
  double start_time_{0.0};
  std::uint64_t index_{0};
  std::vector<SweepCell> cells_;
};

// Projects labeled points (sensor frame) into an organized sweep: the row is
// the beam with the nearest elevation, the column is the azimuth bin. When
// two points fall into the same cell the nearer one is kept. Column c gets
// rel_time = c / w (uniform spin).
OrganizedSweep project_to_range_image(
    const std::vector<std::pair<Point3, SemanticLabel>>& points,
    const SensorModel& sensor, double start_time = 0.0, std::uint64_t index = 0);

// Keeps cells whose range lies in [r_min, r_max); empties the rest.
OrganizedSweep radius_band_filter(const OrganizedSweep& sweep, double r_min,
                                  double r_max);

// Sweep log: binary little-endian, magic "SLMK1", u32 h, u32 w, f64 t, u64 k,
// then h*w records of {u8 present, f32 range, f32 x, f32 y, f32 z, u8 label,
// f32 rel_time}.
void write_sweep(const OrganizedSweep& sweep, const std::filesystem::path& path);
OrganizedSweep read_sweep(const std::filesystem::path& path);

// CSV debug form, one row per present cell: beam,col,range,x,y,z,label,rel_time.
void write_sweep_csv(const OrganizedSweep& sweep,
                     const std::filesystem::path& path);

}  // namespace sloam
