#pragma once

#include <span>
#include <vector>

#include "prgbd/depth_field.hpp"
#include "prgbd/losses.hpp"
#include "prgbd/pose_backend.hpp"
#include "prgbd/scene_sim.hpp"

namespace prgbd {

struct RefinerConfig {
  /// Multiplies the preconditioned descent direction (log-depth units).
  double step_size = 1.0;
  /// Largest change of a single log-depth per keyframe visit.
  double max_log_step = 0.1;
  int epochs = 1;
  LossWeights weights;
  double min_depth = kMinFieldDepth;
  double max_depth = kMaxFieldDepth;
  int max_halvings = 8;
  /// Shared map points required between c and its wide-baseline neighbors.
  int min_shared_points = 20;

  void validate() const;
};

struct RefineReport {
  double loss_before = 0.0;
  double loss_after = 0.0;
  int keyframe_visits = 0;
  int accepted_steps = 0;
  /// Every keyframe visit exhausted its backtracking.
  bool no_descent = false;
};

struct RefineResult {
  std::vector<DepthField> fields;
  RefineReport report;
};

/// The loss problem of keyframe c: its wide-baseline neighbors (when present),
/// common keypoints with SLAM depths, and the adjacent frames as photometric sources.
TripleProblem keyframe_problem(const SceneSequence& sequence, const TrackingResult& tracking,
                               std::span<const DepthField> fields, int keyframe_id, int min_shared_points = 20);

/// Sum of the per-keyframe losses over all keyframes.
double sequence_loss(const SceneSequence& sequence, const TrackingResult& tracking, std::span<const DepthField> fields,
                     const RefinerConfig& config);

/// Block-coordinate descent over keyframe fields in temporal order. Each visit
/// takes a diagonally preconditioned gradient step on the losses that involve
/// the field, halving it until those losses decrease. Poses, map points and
/// SLAM depths stay fixed. Fields are indexed by frame.
RefineResult refine_depths(const SceneSequence& sequence, const TrackingResult& tracking,
                           std::span<const DepthField> fields, const RefinerConfig& config = {});

/// Replace every tracked non-keyframe field by the nearest keyframe's field
/// inverse-warped through the SLAM poses. Pixels without a valid warp keep
/// their value; lost frames are left alone.
std::vector<DepthField> propagate_to_nonkeyframes(std::span<const DepthField> fields, const TrackingResult& tracking,
                                                  const CameraIntrinsics& k);

}  // namespace prgbd
