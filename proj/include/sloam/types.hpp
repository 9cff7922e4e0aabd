#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <stdexcept>
#include <string>

namespace sloam {

using Vec3 = Eigen::Vector3d;
using Point3 = Vec3;
using Mat3 = Eigen::Matrix3d;
using Vec6 = Eigen::Matrix<double, 6, 1>;
using Mat6 = Eigen::Matrix<double, 6, 6>;

// Data or precondition failure surfaced to callers (bad file, bad config,
// underdetermined fit, ...). CLI maps these to exit code 2.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

// Non-recoverable numerical failure (non-finite state). CLI exit code 3.
class NumericalError : public Error {
 public:
  explicit NumericalError(const std::string& what) : Error(what) {}
};

// A feature point together with its relative timestamp within the sweep.
struct TimedPoint {
  Point3 point{0.0, 0.0, 0.0};
  double rel_time{0.0};
};

enum class SemanticLabel : std::uint8_t {
  Other = 0,
  Tree = 1,
  Ground = 2,
  Unknown = 3,
};

inline const char* to_string(SemanticLabel l) {
  switch (l) {
    case SemanticLabel::Other: return "other";
    case SemanticLabel::Tree: return "tree";
    case SemanticLabel::Ground: return "ground";
    case SemanticLabel::Unknown: return "unknown";
  }
  return "?";
}

}  // namespace sloam
