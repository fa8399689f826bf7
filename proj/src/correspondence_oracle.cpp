#include <cmath>
#include <random>

#include "prgbd/error.hpp"
#include "prgbd/parallel.hpp"
#include "prgbd/pose_backend.hpp"

namespace prgbd {

CorrespondenceOracle::CorrespondenceOracle(const SceneSequence& sequence, double noise_px, std::uint64_t seed,
                                           int detect_radius)
    : sequence_(sequence), noise_px_(noise_px), seed_(seed), radius_(detect_radius) {
  if (noise_px < 0.0) throw Error(ErrorKind::InvalidConfig, "pixel noise must be non-negative");
}

bool CorrespondenceOracle::detectable(int frame, int x, int y, int surface) const {
  const Grid<int>& ids = sequence_.frames.at(frame).surface_id;
  if (x - radius_ < 0 || y - radius_ < 0 || x + radius_ >= ids.width() || y + radius_ >= ids.height()) return false;
  for (int dy = -radius_; dy <= radius_; ++dy)
    for (int dx = -radius_; dx <= radius_; ++dx)
      if (ids(x + dx, y + dy) != surface) return false;
  return true;
}

std::optional<int> CorrespondenceOracle::spawn(int frame, const Pixel& p) {
  const SceneFrame& f = sequence_.frames.at(frame);
  const int x = static_cast<int>(std::lround(p.u));
  const int y = static_cast<int>(std::lround(p.v));
  if (x < 0 || y < 0 || x >= f.surface_id.width() || y >= f.surface_id.height()) return std::nullopt;
  const int surface = f.surface_id(x, y);
  if (surface < 0 || !detectable(frame, x, y, surface)) return std::nullopt;
  const Point3 cam = back_project({static_cast<double>(x), static_cast<double>(y)}, f.gt_depth.depth(x, y),
                                  sequence_.intrinsics);
  landmarks_.push_back({f.gt_pose.inverse() * cam, surface});
  return static_cast<int>(landmarks_.size()) - 1;
}

std::optional<Correspondence> CorrespondenceOracle::observe(int landmark, int frame) const {
  const Landmark& lm = landmarks_.at(landmark);
  const SceneFrame& f = sequence_.frames.at(frame);
  const CameraIntrinsics& k = sequence_.intrinsics;
  const Point3 xc = f.gt_pose * lm.position;
  if (xc.z() < 1e-6) return std::nullopt;
  const Projection pr = project(k, xc);
  const int x = static_cast<int>(std::lround(pr.pixel.u));
  const int y = static_cast<int>(std::lround(pr.pixel.v));
  if (!detectable(frame, x, y, lm.surface)) return std::nullopt;

  const Mat3 rt = f.gt_pose.rotation().transpose();
  const Vec3 origin = -(rt * f.gt_pose.translation());
  const auto hit = sequence_.geometry.intersect(origin, rt * Vec3(xc.x() / xc.z(), xc.y() / xc.z(), 1.0));
  if (!hit || hit->surface != lm.surface || std::abs(hit->t - xc.z()) > 1e-6 * xc.z()) return std::nullopt;

  Correspondence c{landmark, pr.pixel, noise_px_};
  if (noise_px_ > 0.0) {
    std::mt19937_64 rng(derive_seed(derive_seed(seed_, static_cast<std::uint64_t>(landmark)), frame));
    std::normal_distribution<double> normal(0.0, noise_px_);
    c.pixel.u += normal(rng);
    c.pixel.v += normal(rng);
  }
  if (!k.contains(c.pixel)) return std::nullopt;
  return c;
}

}  // namespace prgbd
