#pragma once

#include <optional>
#include <vector>

#include "prgbd/depth_field.hpp"
#include "prgbd/geometry.hpp"
#include "prgbd/grid.hpp"
#include "prgbd/keyframe_graph.hpp"

namespace prgbd {

struct LossWeights {
  double alpha = 1.0;    // photometric
  double beta = 0.001;   // smoothness
  double gamma = 1.0;    // depth consistency
  double mu = 1.0;       // symmetric transfer

  /// Throws InvalidConfig on a negative weight.
  void validate() const;
};

struct LossBreakdown {
  double photometric = 0.0;
  double smoothness = 0.0;
  double consistency = 0.0;
  double transfer_c_k1 = 0.0;
  double transfer_c_k2 = 0.0;
  double transfer_k1_k2 = 0.0;
  double total = 0.0;
  bool photometric_present = false;
  bool consistency_present = false;
  bool transfer_present = false;
};

/// Weighted sum; absent components count as zero.
LossBreakdown total_loss(LossBreakdown components, const LossWeights& weights);

/// Two directed depth transfers between frames a and b. Each is skipped (and
/// flagged invalid) when the point lands behind the target camera or outside
/// its image.
struct TransferPair {
  double forward = 0.0;
  double backward = 0.0;
  bool forward_valid = false;
  bool backward_valid = false;

  double value() const { return (forward_valid ? forward : 0.0) + (backward_valid ? backward : 0.0); }
};

/// |d_{a->b} - d_b| + |d_{b->a} - d_a|: p_a is moved into b through its depth
/// and t_ab and compared with d_b at the landing spot; p_b likewise through t_ab^-1.
TransferPair symmetric_transfer_pair(const Pixel& p_a, const Pixel& p_b, const DepthField& d_a, const DepthField& d_b,
                                     const PoseSE3& t_ab, const CameraIntrinsics& k);

struct TransferTotals {
  double c_k1 = 0.0;
  double c_k2 = 0.0;
  double k1_k2 = 0.0;
  bool present = false;
};

/// Mean symmetric transfer over every common keypoint and its 5x5 patch, for
/// the three pairs of a keyframe triple. Poses are world-to-camera.
TransferTotals symmetric_transfer_total(const std::vector<CommonKeypoint>& common, const DepthField& d_k1,
                                        const DepthField& d_c, const DepthField& d_k2, const PoseSE3& pose_k1,
                                        const PoseSE3& pose_c, const PoseSE3& pose_k2, const CameraIntrinsics& k);
TransferTotals symmetric_transfer_total(const KeyframeGraph& graph, int k1, int c, int k2, const DepthField& d_k1,
                                        const DepthField& d_c, const DepthField& d_k2, const CameraIntrinsics& k);

/// Mean |d_c(p) - d_SLAM| over keypoints; nullopt when there are none.
std::optional<double> depth_consistency(const DepthField& d_c, const std::vector<Pixel>& keypoints,
                                        const std::vector<double>& slam_depths);
std::optional<double> depth_consistency(const Keyframe& c, const DepthField& d_c,
                                        const std::vector<CommonKeypoint>& common);

/// A neighboring frame used to synthesize the current one.
struct PhotometricSource {
  const Image* image = nullptr;
  /// Source camera to current camera.
  PoseSE3 source_to_current;
};

/// Per-pixel error 0.425 (1 - SSIM) + 0.15 |a - b| with 3x3 SSIM windows.
Image photometric_error_map(const Image& a, const Image& b);

/// Minimum reprojection error over the sources, averaged over pixels that warp
/// validly into at least one source; nullopt when none does.
std::optional<double> photometric_loss(const Image& current, const std::vector<PhotometricSource>& sources,
                                       const DepthField& d_c, const CameraIntrinsics& k);

/// Edge-aware smoothness of the mean-normalized depth.
double smoothness_loss(const DepthField& d_c, const Image& image);

/// Everything the loss of one keyframe c with wide-baseline neighbors k1, k2 needs.
struct TripleProblem {
  const CameraIntrinsics* intrinsics = nullptr;
  const DepthField* d_c = nullptr;
  const Image* image_c = nullptr;
  PoseSE3 pose_c;
  std::vector<PhotometricSource> sources;
  /// Optional wide-baseline neighbors; transfer terms vanish without them.
  const DepthField* d_k1 = nullptr;
  const DepthField* d_k2 = nullptr;
  PoseSE3 pose_k1;
  PoseSE3 pose_k2;
  std::vector<CommonKeypoint> common;
  /// d(SLAM) in c for each entry of `common`.
  std::vector<double> slam_depths;
};

/// Gradient with respect to log-depth of each field that appears in the loss.
struct LossGradient {
  Grid<double> c;
  Grid<double> k1;
  Grid<double> k2;
};

struct LossEvaluation {
  LossBreakdown breakdown;
  LossGradient gradient;
  /// Diagonal majorizer curvature per field (see evaluate_triple).
  LossGradient curvature;
};

/// Loss of one triple. With `want_gradient`, also the analytic gradient in
/// log-depth and a diagonal curvature built from each absolute-value term's
/// reweighted quadratic majorizer, usable as a preconditioner.
LossEvaluation evaluate_triple(const TripleProblem& problem, const LossWeights& weights, bool want_gradient);

/// Shorthand for evaluate_triple(problem, weights, true).gradient.
LossGradient total_loss_gradient(const TripleProblem& problem, const LossWeights& weights);

}  // namespace prgbd
