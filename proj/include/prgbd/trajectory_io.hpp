#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "prgbd/geometry.hpp"

namespace prgbd {

struct StampedPose {
  double timestamp = 0.0;
  /// World-to-camera, as used everywhere else in the library.
  PoseSE3 pose;
};

/// TUM lines "timestamp tx ty tz qx qy qz qw" holding camera-to-world poses,
/// printed with 9 significant digits.
void write_tum(std::ostream& out, const std::vector<StampedPose>& trajectory);
void write_tum_file(const std::string& path, const std::vector<StampedPose>& trajectory);

/// Inverse of write_tum. Blank lines and '#' comments are skipped; malformed
/// lines raise InvalidConfig, unreadable files IOError.
std::vector<StampedPose> read_tum(std::istream& in);
std::vector<StampedPose> read_tum_file(const std::string& path);

}  // namespace prgbd
