#include "sloam/sweep.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>

namespace sloam {

namespace {

constexpr char kMagic[5] = {'S', 'L', 'M', 'K', '1'};
constexpr int kMaxBeams = 128;
constexpr int kMaxAzimuthBins = 8192;

void check_dimensions(int h, int w) {
  if (h <= 0 || h > kMaxBeams || w <= 0 || w > kMaxAzimuthBins) {
    throw Error("invalid dimensions: h=" + std::to_string(h) +
                " w=" + std::to_string(w));
  }
}

}  // namespace

SensorModel SensorModel::vlp16(int azimuth_bins) {
  SensorModel m;
  m.azimuth_bins = azimuth_bins;
  m.beam_elevations.resize(16);
  for (int i = 0; i < 16; ++i) {
    m.beam_elevations[i] = (-15.0 + 2.0 * i) * M_PI / 180.0;
  }
  return m;
}

OrganizedSweep::OrganizedSweep(int beams, int azimuth_bins, double start_time,
                               std::uint64_t index)
    : h_(beams), w_(azimuth_bins), start_time_(start_time), index_(index) {
  check_dimensions(beams, azimuth_bins);
  cells_.resize(static_cast<std::size_t>(h_) * w_);
}

bool OrganizedSweep::set_cell(int beam, int col, const Point3& point,
                              SemanticLabel label, double rel_time) {
  const double range = point.norm();
  if (!(range > 0.0) || !point.allFinite()) return false;
  SweepCell& c = at(beam, col);
  c.present = true;
  c.range = static_cast<float>(range);
  c.x = static_cast<float>(point.x());
  c.y = static_cast<float>(point.y());
  c.z = static_cast<float>(point.z());
  c.label = label;
  c.rel_time = static_cast<float>(rel_time);
  return true;
}

void OrganizedSweep::set_label(int beam, int col, SemanticLabel label) {
  at(beam, col).label = label;
}

std::size_t OrganizedSweep::present_count() const {
  return static_cast<std::size_t>(
      std::count_if(cells_.begin(), cells_.end(),
                    [](const SweepCell& c) { return c.present; }));
}

OrganizedSweep project_to_range_image(
    const std::vector<std::pair<Point3, SemanticLabel>>& points,
    const SensorModel& sensor, double start_time, std::uint64_t index) {
  check_dimensions(sensor.beams(), sensor.azimuth_bins);
  OrganizedSweep sweep(sensor.beams(), sensor.azimuth_bins, start_time, index);
  const int w = sensor.azimuth_bins;

  for (const auto& [p, label] : points) {
    const double range = p.norm();
    if (!(range > 0.0) || !p.allFinite()) continue;  // zero range: skip point

    const double elevation = std::asin(std::clamp(p.z() / range, -1.0, 1.0));
    const auto& elev = sensor.beam_elevations;
    const auto it = std::lower_bound(elev.begin(), elev.end(), elevation);
    int beam;
    if (it == elev.begin()) {
      beam = 0;
    } else if (it == elev.end()) {
      beam = sensor.beams() - 1;
    } else {
      const int hi = static_cast<int>(it - elev.begin());
      beam = (elevation - elev[hi - 1] <= elev[hi] - elevation) ? hi - 1 : hi;
    }

    double azimuth = std::atan2(p.y(), p.x());
    if (azimuth < 0.0) azimuth += 2.0 * M_PI;
    int col = static_cast<int>(std::floor(azimuth / (2.0 * M_PI) * w));
    col = std::clamp(col, 0, w - 1);

    const SweepCell& existing = sweep.cell(beam, col);
    if (existing.present && existing.range <= range) continue;  // keep nearest
    sweep.set_cell(beam, col, p, label, static_cast<double>(col) / w);
  }
  return sweep;
}

OrganizedSweep radius_band_filter(const OrganizedSweep& sweep, double r_min,
                                  double r_max) {
  if (!(r_min >= 0.0) || !(r_min < r_max)) {
    throw Error("radius band: require 0 <= r_min < r_max");
  }
  OrganizedSweep out = sweep;
  for (int b = 0; b < sweep.beams(); ++b) {
    for (int c = 0; c < sweep.azimuth_bins(); ++c) {
      const SweepCell& cell = sweep.cell(b, c);
      if (!cell.present) continue;
      if (cell.range < r_min || cell.range >= r_max) out.clear_cell(b, c);
    }
  }
  return out;
}

namespace {

template <class T>
void put(std::string& buf, const T& v) {
  const std::size_t n = buf.size();
  buf.resize(n + sizeof(T));
  std::memcpy(buf.data() + n, &v, sizeof(T));
}

template <class T>
T take(const std::string& buf, std::size_t& off, const char* what) {
  if (off + sizeof(T) > buf.size()) {
    throw Error("truncated sweep log: expected " + std::string(what) +
                " at byte " + std::to_string(off));
  }
  T v;
  std::memcpy(&v, buf.data() + off, sizeof(T));
  off += sizeof(T);
  return v;
}

}  // namespace

void write_sweep(const OrganizedSweep& sweep,
                 const std::filesystem::path& path) {
  std::string buf;
  buf.reserve(22 + static_cast<std::size_t>(sweep.beams()) *
                       sweep.azimuth_bins() * 22);
  buf.append(kMagic, sizeof(kMagic));
  put<std::uint32_t>(buf, static_cast<std::uint32_t>(sweep.beams()));
  put<std::uint32_t>(buf, static_cast<std::uint32_t>(sweep.azimuth_bins()));
  put<double>(buf, sweep.start_time());
  put<std::uint64_t>(buf, sweep.index());
  for (int b = 0; b < sweep.beams(); ++b) {
    for (int c = 0; c < sweep.azimuth_bins(); ++c) {
      const SweepCell& cell = sweep.cell(b, c);
      put<std::uint8_t>(buf, cell.present ? 1 : 0);
      put<float>(buf, cell.present ? cell.range : 0.0f);
      put<float>(buf, cell.present ? cell.x : 0.0f);
      put<float>(buf, cell.present ? cell.y : 0.0f);
      put<float>(buf, cell.present ? cell.z : 0.0f);
      put<std::uint8_t>(buf, cell.present
                                 ? static_cast<std::uint8_t>(cell.label)
                                 : 0);
      put<float>(buf, cell.present ? cell.rel_time : 0.0f);
    }
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open for writing: " + path.string());
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!out) throw Error("write failed: " + path.string());
}

OrganizedSweep read_sweep(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open sweep log: " + path.string());
  std::string buf((std::istreambuf_iterator<char>(in)),
                  std::istreambuf_iterator<char>());

  std::size_t off = 0;
  if (buf.size() < sizeof(kMagic) ||
      std::memcmp(buf.data(), kMagic, sizeof(kMagic)) != 0) {
    throw Error("malformed sweep log header (bad magic) at byte 0: " +
                path.string());
  }
  off += sizeof(kMagic);
  const auto h = take<std::uint32_t>(buf, off, "h");
  const auto w = take<std::uint32_t>(buf, off, "w");
  if (h == 0 || h > kMaxBeams || w == 0 || w > kMaxAzimuthBins) {
    throw Error("invalid dimensions in sweep log at byte 5: h=" +
                std::to_string(h) + " w=" + std::to_string(w));
  }
  const double t = take<double>(buf, off, "start time");
  const auto k = take<std::uint64_t>(buf, off, "sweep index");

  OrganizedSweep sweep(static_cast<int>(h), static_cast<int>(w), t, k);
  for (int b = 0; b < static_cast<int>(h); ++b) {
    for (int c = 0; c < static_cast<int>(w); ++c) {
      const auto present = take<std::uint8_t>(buf, off, "cell");
      const float range = take<float>(buf, off, "cell");
      const float x = take<float>(buf, off, "cell");
      const float y = take<float>(buf, off, "cell");
      const float z = take<float>(buf, off, "cell");
      const auto label = take<std::uint8_t>(buf, off, "cell");
      const float rel_time = take<float>(buf, off, "cell");
      if (!present) continue;
      if (label > 3) {
        throw Error("invalid label in sweep log at byte " +
                    std::to_string(off - 5) + ": " + std::to_string(label));
      }
      if (!(range > 0.0f) || !std::isfinite(range)) {
        throw Error("invalid cell (zero range) in sweep log at byte " +
                    std::to_string(off - 22));
      }
      SweepCell cell;
      cell.present = true;
      cell.range = range;
      cell.x = x;
      cell.y = y;
      cell.z = z;
      cell.label = static_cast<SemanticLabel>(label);
      cell.rel_time = rel_time;
      sweep.set_cell_raw(b, c, cell);
    }
  }
  if (off != buf.size()) {
    throw Error("trailing bytes in sweep log at byte " + std::to_string(off));
  }
  return sweep;
}

void write_sweep_csv(const OrganizedSweep& sweep,
                     const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot open for writing: " + path.string());
  out << "beam,col,range,x,y,z,label,rel_time\n";
  char line[256];
  for (int b = 0; b < sweep.beams(); ++b) {
    for (int c = 0; c < sweep.azimuth_bins(); ++c) {
      const SweepCell& cell = sweep.cell(b, c);
      if (!cell.present) continue;
      std::snprintf(line, sizeof(line), "%d,%d,%.9g,%.9g,%.9g,%.9g,%d,%.9g\n",
                    b, c, cell.range, cell.x, cell.y, cell.z,
                    static_cast<int>(cell.label), cell.rel_time);
      out << line;
    }
  }
}

}  // namespace sloam
