#pragma once

#include <span>
#include <vector>

#include "prgbd/depth_field.hpp"
#include "prgbd/geometry.hpp"
#include "prgbd/grid.hpp"

namespace prgbd {

struct DepthMetrics {
  double abs_rel = 0.0;
  double sq_rel = 0.0;
  double rmse = 0.0;
  double rmse_log = 0.0;
  double a1 = 0.0;
  double a2 = 0.0;
  double a3 = 0.0;
};

inline constexpr double kMinEvalDepth = 1e-3;

/// Standard depth metrics over pixels with 0 < gt <= cap. With median_scale the
/// prediction is first multiplied by median(gt) / median(pred) over those pixels;
/// predictions are then clamped to [1e-3, cap]. Throws EmptyEvaluation.
DepthMetrics depth_metrics(const Grid<double>& pred, const Grid<double>& gt, double cap, bool median_scale);
DepthMetrics depth_metrics(const DepthField& pred, const DepthField& gt, double cap, bool median_scale);

/// Per-frame metrics averaged over frames (frames without valid pixels are skipped).
DepthMetrics mean_depth_metrics(std::span<const DepthField> pred, std::span<const DepthField> gt, double cap,
                                bool median_scale);

/// Median with the two middle values averaged for even counts.
double median(std::vector<double> values);

/// Least-squares s, R, t with gt ~ s R est + t. Throws DegenerateConfiguration
/// for fewer than 3 points or collinear estimates.
Sim3Transform umeyama_align(const std::vector<Vec3>& est, const std::vector<Vec3>& gt, bool with_scale);

enum class Alignment { None, SE3, Sim3 };

/// Camera centers of world-to-camera poses.
std::vector<Vec3> camera_centers(const std::vector<PoseSE3>& poses);

/// Similarity that best maps the estimated camera centers onto the ground truth.
Sim3Transform align_trajectory(const std::vector<PoseSE3>& est, const std::vector<PoseSE3>& gt, Alignment alignment);
/// World-to-camera poses re-expressed after moving the world by `s`
/// (camera centers c -> s * c; orientation follows the rotation of s).
std::vector<PoseSE3> apply_alignment(const std::vector<PoseSE3>& poses, const Sim3Transform& s);

/// RMSE of camera-center residuals after alignment. Throws AssociationError on length mismatch.
double ate_rmse(const std::vector<PoseSE3>& est, const std::vector<PoseSE3>& gt, Alignment alignment);

struct RelativeErrors {
  double rel_tr = 0.0;   // percent
  double rel_rot = 0.0;  // degrees per meter
  int segments = 0;
};

double path_length(const std::vector<PoseSE3>& poses);
/// The sub-trajectory lengths {100, ..., 800} m scaled by path_length / 800.
std::vector<double> scaled_segment_lengths(double path_length);

/// Odometry-benchmark drift over sub-trajectories starting every `step` frames.
/// No alignment is applied here. Throws EmptyEvaluation when no segment fits.
RelativeErrors relative_errors(const std::vector<PoseSE3>& est, const std::vector<PoseSE3>& gt,
                               const std::vector<double>& lengths, int step = 10);

}  // namespace prgbd
