#include "prgbd/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include <Eigen/SVD>

#include "prgbd/error.hpp"

namespace prgbd {

double median(std::vector<double> v) {
  if (v.empty()) throw Error(ErrorKind::EmptyEvaluation, "median of nothing");
  const std::size_t mid = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + mid, v.end());
  const double upper = v[mid];
  if (v.size() % 2 == 1) return upper;
  const double lower = *std::max_element(v.begin(), v.begin() + mid);
  return 0.5 * (lower + upper);
}

DepthMetrics depth_metrics(const Grid<double>& pred, const Grid<double>& gt, double cap, bool median_scale) {
  if (!pred.same_shape(gt)) throw Error(ErrorKind::InvalidConfig, "prediction and ground truth sizes differ");
  if (!(cap > 0.0)) throw Error(ErrorKind::InvalidConfig, "depth cap must be positive");
  std::vector<double> p;
  std::vector<double> g;
  for (std::size_t i = 0; i < gt.size(); ++i) {
    if (gt[i] > 0.0 && gt[i] <= cap) {
      p.push_back(pred[i]);
      g.push_back(gt[i]);
    }
  }
  if (g.empty()) throw Error(ErrorKind::EmptyEvaluation, "no ground-truth pixels within the cap");
  if (median_scale) {
    const double ratio = median(g) / median(p);
    for (double& x : p) x *= ratio;
  }
  DepthMetrics m;
  const double n = static_cast<double>(g.size());
  for (std::size_t i = 0; i < g.size(); ++i) {
    const double pr = std::clamp(p[i], kMinEvalDepth, cap);
    const double gt_i = g[i];
    const double diff = pr - gt_i;
    const double ratio = std::max(pr / gt_i, gt_i / pr);
    m.abs_rel += std::abs(diff) / gt_i;
    m.sq_rel += diff * diff / gt_i;
    m.rmse += diff * diff;
    const double dl = std::log(pr) - std::log(gt_i);
    m.rmse_log += dl * dl;
    m.a1 += ratio < 1.25 ? 1.0 : 0.0;
    m.a2 += ratio < 1.25 * 1.25 ? 1.0 : 0.0;
    m.a3 += ratio < 1.25 * 1.25 * 1.25 ? 1.0 : 0.0;
  }
  m.abs_rel /= n;
  m.sq_rel /= n;
  m.rmse = std::sqrt(m.rmse / n);
  m.rmse_log = std::sqrt(m.rmse_log / n);
  m.a1 /= n;
  m.a2 /= n;
  m.a3 /= n;
  return m;
}

DepthMetrics depth_metrics(const DepthField& pred, const DepthField& gt, double cap, bool median_scale) {
  return depth_metrics(pred.depths(), gt.depths(), cap, median_scale);
}

DepthMetrics mean_depth_metrics(std::span<const DepthField> pred, std::span<const DepthField> gt, double cap,
                                bool median_scale) {
  if (pred.size() != gt.size()) throw Error(ErrorKind::AssociationError, "frame counts differ");
  DepthMetrics sum;
  int frames = 0;
  for (std::size_t f = 0; f < pred.size(); ++f) {
    DepthMetrics m;
    try {
      m = depth_metrics(pred[f], gt[f], cap, median_scale);
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::EmptyEvaluation) throw;
      continue;
    }
    sum.abs_rel += m.abs_rel;
    sum.sq_rel += m.sq_rel;
    sum.rmse += m.rmse;
    sum.rmse_log += m.rmse_log;
    sum.a1 += m.a1;
    sum.a2 += m.a2;
    sum.a3 += m.a3;
    ++frames;
  }
  if (frames == 0) throw Error(ErrorKind::EmptyEvaluation, "no frame has pixels within the cap");
  const double n = frames;
  return {sum.abs_rel / n, sum.sq_rel / n, sum.rmse / n, sum.rmse_log / n, sum.a1 / n, sum.a2 / n, sum.a3 / n};
}

Sim3Transform umeyama_align(const std::vector<Vec3>& est, const std::vector<Vec3>& gt, bool with_scale) {
  if (est.size() != gt.size()) throw Error(ErrorKind::AssociationError, "point counts differ");
  if (est.size() < 3) throw Error(ErrorKind::DegenerateConfiguration, "alignment needs at least 3 points");
  const double n = static_cast<double>(est.size());
  Vec3 mx = Vec3::Zero();
  Vec3 my = Vec3::Zero();
  for (std::size_t i = 0; i < est.size(); ++i) {
    mx += est[i];
    my += gt[i];
  }
  mx /= n;
  my /= n;
  Mat3 cov = Mat3::Zero();
  Mat3 spread = Mat3::Zero();
  double var_x = 0.0;
  for (std::size_t i = 0; i < est.size(); ++i) {
    const Vec3 x = est[i] - mx;
    const Vec3 y = gt[i] - my;
    cov += y * x.transpose();
    spread += x * x.transpose();
    var_x += x.squaredNorm();
  }
  cov /= n;
  var_x /= n;
  const Eigen::JacobiSVD<Mat3> shape(spread);
  const auto sv = shape.singularValues();
  if (!(sv(0) > 0.0) || sv(1) <= 1e-12 * sv(0))
    throw Error(ErrorKind::DegenerateConfiguration, "points are collinear or coincident");

  const Eigen::JacobiSVD<Mat3> svd(cov, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat3 s = Mat3::Identity();
  if (svd.matrixU().determinant() * svd.matrixV().determinant() < 0.0) s(2, 2) = -1.0;
  Sim3Transform out;
  out.rotation = svd.matrixU() * s * svd.matrixV().transpose();
  out.scale = with_scale ? (svd.singularValues().asDiagonal() * s).trace() / var_x : 1.0;
  out.translation = my - out.scale * out.rotation * mx;
  return out;
}

std::vector<Vec3> camera_centers(const std::vector<PoseSE3>& poses) {
  std::vector<Vec3> out;
  out.reserve(poses.size());
  for (const auto& p : poses) out.push_back(-(p.rotation().transpose() * p.translation()));
  return out;
}

Sim3Transform align_trajectory(const std::vector<PoseSE3>& est, const std::vector<PoseSE3>& gt, Alignment alignment) {
  if (est.size() != gt.size()) throw Error(ErrorKind::AssociationError, "trajectory lengths differ");
  if (alignment == Alignment::None) return {};
  return umeyama_align(camera_centers(est), camera_centers(gt), alignment == Alignment::Sim3);
}

std::vector<PoseSE3> apply_alignment(const std::vector<PoseSE3>& poses, const Sim3Transform& s) {
  std::vector<PoseSE3> out;
  out.reserve(poses.size());
  for (const auto& p : poses) {
    const Vec3 c = s * Vec3(-(p.rotation().transpose() * p.translation()));
    const Mat3 r_wc = s.rotation * p.rotation().transpose();
    out.emplace_back(r_wc.transpose(), -(r_wc.transpose() * c));
  }
  return out;
}

double ate_rmse(const std::vector<PoseSE3>& est, const std::vector<PoseSE3>& gt, Alignment alignment) {
  if (est.size() != gt.size()) throw Error(ErrorKind::AssociationError, "trajectory lengths differ");
  if (est.empty()) throw Error(ErrorKind::EmptyEvaluation, "empty trajectory");
  const Sim3Transform s = align_trajectory(est, gt, alignment);
  const auto a = camera_centers(est);
  const auto b = camera_centers(gt);
  double sum = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) sum += (s * a[i] - b[i]).squaredNorm();
  return std::sqrt(sum / static_cast<double>(a.size()));
}

double path_length(const std::vector<PoseSE3>& poses) {
  const auto c = camera_centers(poses);
  double len = 0.0;
  for (std::size_t i = 1; i < c.size(); ++i) len += (c[i] - c[i - 1]).norm();
  return len;
}

std::vector<double> scaled_segment_lengths(double length) {
  std::vector<double> out;
  for (int l = 100; l <= 800; l += 100) out.push_back(l * length / 800.0);
  return out;
}

RelativeErrors relative_errors(const std::vector<PoseSE3>& est, const std::vector<PoseSE3>& gt,
                               const std::vector<double>& lengths, int step) {
  if (est.size() != gt.size()) throw Error(ErrorKind::AssociationError, "trajectory lengths differ");
  if (step < 1) throw Error(ErrorKind::InvalidConfig, "segment step must be positive");
  const std::size_t n = gt.size();
  std::vector<double> dist(n, 0.0);
  const auto centers = camera_centers(gt);
  for (std::size_t i = 1; i < n; ++i) dist[i] = dist[i - 1] + (centers[i] - centers[i - 1]).norm();

  double tr = 0.0;
  double rot = 0.0;
  int count = 0;
  for (std::size_t first = 0; first < n; first += step) {
    for (double len : lengths) {
      std::size_t last = first;
      while (last < n && !(dist[last] > dist[first] + len)) ++last;
      if (last >= n) continue;
      // Camera-to-world increments over the segment.
      const PoseSE3 delta_gt = gt[first] * gt[last].inverse();
      const PoseSE3 delta_est = est[first] * est[last].inverse();
      const PoseSE3 err = delta_est.inverse() * delta_gt;
      tr += err.translation().norm() / len;
      rot += rotation_angle(err.rotation()) / len;
      ++count;
    }
  }
  if (count == 0) throw Error(ErrorKind::EmptyEvaluation, "no sub-trajectory fits the requested lengths");
  return {100.0 * tr / count, rot / count * 180.0 / std::numbers::pi, count};
}

}  // namespace prgbd
