#pragma once

#include <optional>
#include <string>
#include <vector>

#include "prgbd/depth_refiner.hpp"
#include "prgbd/evaluation.hpp"
#include "prgbd/losses.hpp"
#include "prgbd/pose_backend.hpp"
#include "prgbd/scene_config.hpp"
#include "prgbd/scene_sim.hpp"

namespace prgbd {

struct RunConfig {
  SceneConfig scene = default_scene_config();
  /// Where the scene came from, echoed into summary.json ("builtin:default" otherwise).
  std::string scene_source = "builtin:default";
  TrackingParams tracking;
  RefinerConfig refiner;
  int max_loops = 5;
  double epsilon_improve = 0.005;
  /// Sim3 trajectory alignment; SE3 when off.
  bool scale_align = true;
  /// Depth caps as fractions of the scene's largest ground-truth depth.
  std::vector<double> cap_fractions{0.3, 0.4, 0.5, 0.6, 0.7, 0.8};
  /// When set, overrides the scene, noise and tracking seeds with streams split from it.
  std::optional<std::uint64_t> root_seed;

  void validate() const;
  /// The scene config with root_seed applied.
  SceneConfig effective_scene() const;
  TrackingParams effective_tracking() const;
};

/// Apply `run.*` entries on top of `config` (scene entries are ignored here).
void apply_run_entries(RunConfig& config, const std::vector<ConfigEntry>& entries);
/// Scene plus run settings from one file.
RunConfig load_run_config(const std::string& path);
/// Indoor-style preset: three loops on the orbit scene.
RunConfig short_run_preset();

struct CapMetrics {
  double fraction = 0.0;
  double cap = 0.0;
  DepthMetrics metrics;
};

struct LoopReport {
  int loop_index = 0;
  std::vector<CapMetrics> caps;
  /// Metrics with the cap at the largest ground-truth depth.
  DepthMetrics full_cap;
  double ate_rmse = 0.0;
  double rel_tr = 0.0;
  double rel_rot = 0.0;
  int rel_segments = 0;
  /// Sums over keyframes of each loss component.
  LossBreakdown loss_sums;
  double lost_fraction = 0.0;
  int keyframes = 0;
  int map_points = 0;
  double baseline = 0.0;
  std::optional<RefineReport> refine;
  double wall_seconds = 0.0;
  /// SLAM estimate per frame, world-to-camera.
  std::vector<PoseSE3> trajectory;
};

enum class Termination { MaxLoops, NoImprovement, LostTracking };
std::string to_string(Termination t);

struct RunResult {
  std::vector<LoopReport> reports;
  Termination termination = Termination::MaxLoops;
  std::string termination_detail;
  double d_max_gt = 0.0;
  /// Sub-trajectory lengths used for the relative errors, and their scale w.r.t. 100..800.
  std::vector<double> segment_lengths;
  double segment_scale = 0.0;
  std::vector<double> timestamps;
  std::vector<PoseSE3> gt_trajectory;
  /// Depth field of every frame as it stood when the run stopped.
  std::vector<DepthField> final_fields;
};

/// Corrupted depth field of every frame of the sequence.
std::vector<DepthField> corrupted_depths(const SceneSequence& sequence, const NoiseModel& noise);

/// Evaluate one loop's state against ground truth.
LoopReport evaluate_loop(const RunConfig& config, const SceneSequence& sequence, const TrackingResult& tracking,
                         std::span<const DepthField> fields, int loop_index);

/// Alternate tracking and depth refinement until no improvement or max_loops.
RunResult run_self_improving(const RunConfig& config);

}  // namespace prgbd
