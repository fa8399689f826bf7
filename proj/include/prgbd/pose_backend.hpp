#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "prgbd/depth_field.hpp"
#include "prgbd/geometry.hpp"
#include "prgbd/keyframe_graph.hpp"
#include "prgbd/scene_sim.hpp"

namespace prgbd {

struct Correspondence {
  int point = 0;
  Pixel pixel;
  double noise_px = 0.0;
};

/// Stand-in for feature detection and matching: landmarks are surface points
/// picked at integer pixels of a spawning frame; their observation in any frame
/// is the ground-truth projection plus deterministic Gaussian pixel noise.
/// A landmark is reported only when it is in front of the camera, unoccluded,
/// and its neighborhood in the target frame shows a single surface.
class CorrespondenceOracle {
 public:
  CorrespondenceOracle(const SceneSequence& sequence, double noise_px, std::uint64_t seed, int detect_radius = 4);

  /// Create a landmark at pixel p of frame `frame`; nullopt when p is not detectable there.
  std::optional<int> spawn(int frame, const Pixel& p);
  std::optional<Correspondence> observe(int landmark, int frame) const;
  bool detectable(int frame, int x, int y, int surface) const;

  const Point3& landmark_position(int landmark) const { return landmarks_.at(landmark).position; }
  std::size_t landmark_count() const { return landmarks_.size(); }
  double noise_px() const { return noise_px_; }

 private:
  struct Landmark {
    Point3 position;
    int surface = -1;
  };
  const SceneSequence& sequence_;
  double noise_px_;
  std::uint64_t seed_;
  int radius_;
  std::vector<Landmark> landmarks_;
};

struct PoseEstimateOptions {
  int max_iterations = 50;
};

/// Gauss-Newton (with Levenberg-Marquardt safeguard) on summed squared
/// reprojection error, left-multiplicative SE3 updates. Needs >= 6 points.
PoseSE3 estimate_pose_gn(const std::vector<std::pair<Point3, Pixel>>& correspondences, const CameraIntrinsics& k,
                         const PoseSE3& initial, const PoseEstimateOptions& options = {});

struct BundleAdjustOptions {
  int max_iterations = 20;
  double huber_delta = 2.0;
  double initial_lambda = 1e-3;
  /// Virtual stereo baseline; <= 0 disables the right-view residual.
  double baseline = 0.0;
};

struct BundleAdjustReport {
  double initial_cost = 0.0;
  double final_cost = 0.0;
  int iterations = 0;
  int accepted_steps = 0;
  bool converged = false;
};

/// Sliding-window bundle adjustment. Keyframes in `window` are optimized except
/// the first (gauge); keyframes outside the window that observe the same points
/// contribute fixed residuals. Each observation yields (u, v) and, with a
/// baseline, the virtual right-view coordinate u - fx * b / d measured through
/// the depth field of that keyframe's frame (fields indexed by frame_index).
/// On failure to converge the best iterate is kept and `converged` is false.
BundleAdjustReport local_bundle_adjust(KeyframeGraph& graph, const std::vector<int>& window,
                                       const CameraIntrinsics& k, std::span<const DepthField> fields,
                                       const BundleAdjustOptions& options = {});

/// Robust cost of the same objective, for checks.
double bundle_adjust_cost(const KeyframeGraph& graph, const std::vector<int>& window, const CameraIntrinsics& k,
                          std::span<const DepthField> fields, const BundleAdjustOptions& options = {});

/// Back-project keypoints of frame 0 through its depth field; world frame = camera 0.
/// Throws InitializationFailure below 20 valid keypoints.
std::vector<MapPoint> seed_map_from_depth(const std::vector<std::pair<int, Pixel>>& keypoints, const DepthField& depth,
                                          const CameraIntrinsics& k, int keyframe_id = 0,
                                          const PoseSE3& pose = PoseSE3::identity());

struct TrackingParams {
  int keyframe_stride = 5;
  int ba_window = 7;
  double pixel_noise = 0.1;
  int keypoint_spacing = 6;
  double inlier_threshold_px = 3.0;
  int min_inliers = 6;
  double huber_delta = 2.0;
  int ba_iterations = 20;
  std::uint64_t seed = 1;
};

enum class FrameStatus { Tracked, Lost };

struct TrackingResult {
  KeyframeGraph graph;
  /// World-to-camera for every frame; world = first camera.
  std::vector<PoseSE3> poses;
  std::vector<FrameStatus> status;
  double d_max = 0.0;
  double baseline = 0.0;
  int ba_warnings = 0;

  double lost_fraction() const;
};

TrackingResult track_sequence(const SceneSequence& sequence, std::span<const DepthField> depth_fields,
                              const TrackingParams& params = {});

}  // namespace prgbd
