#include <cmath>
#include <limits>

#include <Eigen/Eigenvalues>

#include "prgbd/error.hpp"
#include "prgbd/pose_backend.hpp"

namespace prgbd {
namespace {

using Mat6 = Eigen::Matrix<double, 6, 6>;

double reprojection_cost(const std::vector<std::pair<Point3, Pixel>>& corr, const CameraIntrinsics& k,
                         const PoseSE3& pose) {
  double cost = 0.0;
  for (const auto& [x, p] : corr) {
    const Point3 xc = pose * x;
    if (xc.z() <= 1e-9) return std::numeric_limits<double>::infinity();
    const double du = k.fx * xc.x() / xc.z() + k.cx - p.u;
    const double dv = k.fy * xc.y() / xc.z() + k.cy - p.v;
    cost += du * du + dv * dv;
  }
  return cost;
}

PoseSE3 normalized(PoseSE3 pose) {
  pose.normalize();
  return pose;
}

}  // namespace

PoseSE3 estimate_pose_gn(const std::vector<std::pair<Point3, Pixel>>& corr, const CameraIntrinsics& k,
                         const PoseSE3& initial, const PoseEstimateOptions& options) {
  if (corr.size() < 6)
    throw Error(ErrorKind::DegenerateConfiguration, "pose estimation needs at least 6 correspondences");
  PoseSE3 pose = initial;
  pose.normalize();
  double cost = reprojection_cost(corr, k, pose);
  if (!std::isfinite(cost)) throw Error(ErrorKind::DegenerateConfiguration, "points behind the initial camera");
  double lambda = 1e-3;
  for (int it = 0; it < options.max_iterations; ++it) {
    Mat6 h = Mat6::Zero();
    Vec6 g = Vec6::Zero();
    for (const auto& [x, p] : corr) {
      const Point3 xc = pose * x;
      const double iz = 1.0 / xc.z();
      const double iz2 = iz * iz;
      Eigen::Matrix<double, 2, 3> jp;
      jp << k.fx * iz, 0.0, -k.fx * xc.x() * iz2, 0.0, k.fy * iz, -k.fy * xc.y() * iz2;
      Eigen::Matrix<double, 3, 6> jx;
      jx.leftCols<3>() = -skew(xc);
      jx.rightCols<3>() = Mat3::Identity();
      const Eigen::Matrix<double, 2, 6> j = jp * jx;
      const Vec2 r(k.fx * xc.x() * iz + k.cx - p.u, k.fy * xc.y() * iz + k.cy - p.v);
      h.noalias() += j.transpose() * j;
      g.noalias() += j.transpose() * r;
    }
    if (it == 0) {
      const Eigen::SelfAdjointEigenSolver<Mat6> eig(h);
      const auto ev = eig.eigenvalues();
      if (!(ev(0) > 1e-12 * ev(5)))
        throw Error(ErrorKind::DegenerateConfiguration, "rank-deficient pose normal equations");
    }
    if (cost == 0.0) return normalized(pose);
    for (;;) {
      Mat6 a = h;
      a.diagonal() *= 1.0 + lambda;
      const Vec6 delta = a.ldlt().solve(-g);
      const PoseSE3 candidate = PoseSE3::exp(delta) * pose;
      const double c = reprojection_cost(corr, k, candidate);
      if (c < cost) {
        const double gain = cost - c;
        pose = candidate;
        cost = c;
        lambda = std::max(lambda / 10.0, 1e-12);
        const bool small_step = delta.head<3>().norm() < 1e-13 &&
                                delta.tail<3>().norm() < 1e-13 * (1.0 + pose.translation().norm());
        if (small_step || gain <= 1e-15 * cost) return normalized(pose);
        break;
      }
      lambda *= 10.0;
      // No step reduces the cost any more: we sit at a floating-point minimum.
      if (lambda > 1e12) return normalized(pose);
    }
  }
  throw Error(ErrorKind::NoConvergence, "pose estimation did not converge");
}

std::vector<MapPoint> seed_map_from_depth(const std::vector<std::pair<int, Pixel>>& keypoints, const DepthField& depth,
                                          const CameraIntrinsics& k, int keyframe_id, const PoseSE3& pose) {
  std::vector<MapPoint> points;
  const PoseSE3 to_world = pose.inverse();
  for (const auto& [id, p] : keypoints) {
    const auto d = depth.sample_depth(p.u, p.v);
    if (!d || !(*d > 0.0) || !std::isfinite(*d)) continue;
    MapPoint mp;
    mp.id = id;
    mp.observations.push_back({keyframe_id, p});
    mp.world_position = to_world * back_project(p, *d, k);
    points.push_back(std::move(mp));
  }
  if (points.size() < 20)
    throw Error(ErrorKind::InitializationFailure,
                "only " + std::to_string(points.size()) + " valid keypoints to initialize the map");
  return points;
}

}  // namespace prgbd
