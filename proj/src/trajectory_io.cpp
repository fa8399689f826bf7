#include "prgbd/trajectory_io.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "prgbd/error.hpp"

namespace prgbd {

void write_tum(std::ostream& out, const std::vector<StampedPose>& trajectory) {
  char line[320];
  for (const auto& s : trajectory) {
    const PoseSE3 c2w = s.pose.inverse();
    const Eigen::Quaterniond q = c2w.quaternion();
    const Vec3& t = c2w.translation();
    std::snprintf(line, sizeof line, "%.9g %.9g %.9g %.9g %.9g %.9g %.9g %.9g\n", s.timestamp, t.x(), t.y(), t.z(),
                  q.x(), q.y(), q.z(), q.w());
    out << line;
  }
}

void write_tum_file(const std::string& path, const std::vector<StampedPose>& trajectory) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::IOError, "cannot open " + path + " for writing");
  write_tum(out, trajectory);
  if (!out) throw Error(ErrorKind::IOError, "failed writing " + path);
}

std::vector<StampedPose> read_tum(std::istream& in) {
  std::vector<StampedPose> out;
  std::string line;
  int number = 0;
  while (std::getline(in, line)) {
    ++number;
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    std::istringstream fields(line);
    double v[8];
    for (double& x : v)
      if (!(fields >> x)) throw Error(ErrorKind::InvalidConfig, "malformed TUM line " + std::to_string(number));
    std::string extra;
    if (fields >> extra) throw Error(ErrorKind::InvalidConfig, "trailing data on TUM line " + std::to_string(number));
    const Eigen::Quaterniond q(v[7], v[4], v[5], v[6]);
    if (!(q.norm() > 0.0)) throw Error(ErrorKind::InvalidConfig, "zero quaternion on TUM line " + std::to_string(number));
    out.push_back({v[0], PoseSE3::from_quaternion(q.normalized(), Vec3(v[1], v[2], v[3])).inverse()});
  }
  return out;
}

std::vector<StampedPose> read_tum_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::IOError, "cannot open " + path);
  return read_tum(in);
}

}  // namespace prgbd
