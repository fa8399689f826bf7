#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "prgbd/depth_field.hpp"
#include "prgbd/geometry.hpp"
#include "prgbd/grid.hpp"
#include "prgbd/scene_config.hpp"

namespace prgbd {

/// Texture parameters drawn once per surface.
struct TextureBand {
  double albedo = 0.5;
  std::vector<Vec3> directions;
  std::vector<double> wavelengths;
  std::vector<double> amplitudes;
  std::vector<double> phases;
};

struct Surface {
  SurfaceSpec spec;
  TextureBand band;
  Vec3 axis_v = Vec3::UnitY();
};

/// Static geometry shared by all frames.
class SceneGeometry {
 public:
  SceneGeometry() = default;
  SceneGeometry(const std::vector<SurfaceSpec>& specs, std::uint64_t seed);

  struct Hit {
    double t = 0.0;
    int surface = -1;
  };
  /// Nearest intersection with t > t_min along origin + t * direction.
  std::optional<Hit> intersect(const Vec3& origin, const Vec3& direction, double t_min = 1e-9) const;
  double intensity(int surface, const Point3& world_point) const;
  const std::vector<Surface>& surfaces() const { return surfaces_; }

 private:
  std::vector<Surface> surfaces_;
};

struct SceneFrame {
  Image image;
  DepthField gt_depth;
  /// World-to-camera.
  PoseSE3 gt_pose;
  double timestamp = 0.0;
  /// Index of the surface seen through each pixel.
  Grid<int> surface_id;
};

struct SceneSequence {
  std::vector<SceneFrame> frames;
  CameraIntrinsics intrinsics;
  double d_max_gt = 0.0;
  SceneGeometry geometry;
};

struct RenderedView {
  Image image;
  Grid<double> depth;  // 0 where no surface was hit
  Grid<int> surface_id;  // -1 where no surface was hit
  std::size_t hit_count = 0;
};

/// Ray-cast every pixel center. Throws EmptyView when nothing is hit.
RenderedView render(const SceneGeometry& geometry, const PoseSE3& pose, const CameraIntrinsics& k);

/// World-to-camera pose looking from `position` toward `target` (world y is down).
PoseSE3 look_at(const Vec3& position, const Vec3& target);
std::vector<PoseSE3> camera_trajectory(const SceneConfig& config);

SceneSequence generate_scene(const SceneConfig& config);

/// Multiplicative Gaussian corruption with depth-dependent spread:
/// d * (1 + eps), eps ~ N(0, (sigma0 * (d / d_max_gt)^gamma)^2), clamped to
/// [0.1, 1.5 * d_max_gt]. `stream` selects an independent random stream.
DepthField corrupt_depth(const DepthField& gt, const NoiseModel& model, double d_max_gt, std::uint64_t stream = 0);

/// FNV-1a over images, depths and poses, for golden-file checks.
std::uint64_t sequence_checksum(const SceneSequence& sequence);

}  // namespace prgbd
