#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

#include <Eigen/Cholesky>
#include <Eigen/Dense>

#include "prgbd/error.hpp"
#include "prgbd/pose_backend.hpp"

namespace prgbd {
namespace {

using Mat63 = Eigen::Matrix<double, 6, 3>;
using Mat6 = Eigen::Matrix<double, 6, 6>;

struct Term {
  int point = 0;      // index into Problem::points
  int keyframe = 0;   // index into Problem::poses
  double u = 0.0;
  double v = 0.0;
  double ur = 0.0;
  bool stereo = false;
};

struct Problem {
  std::vector<int> keyframe_ids;
  std::vector<PoseSE3> poses;
  std::vector<int> pose_param;  // -1 when held fixed
  int optimized = 0;
  std::vector<int> point_ids;
  std::vector<Point3> points;
  std::vector<Term> terms;
  double fx_b = 0.0;
};

double huber(double s, double delta) { return s <= delta ? 0.5 * s * s : delta * (s - 0.5 * delta); }

Problem build(const KeyframeGraph& graph, const std::vector<int>& window, const CameraIntrinsics& k,
              std::span<const DepthField> fields, const BundleAdjustOptions& options) {
  if (window.size() < 2) throw Error(ErrorKind::InvalidConfig, "bundle adjustment window needs two keyframes");
  Problem pb;
  std::map<int, int> kf_slot;
  const auto add_keyframe = [&](int id, bool optimize) {
    kf_slot[id] = static_cast<int>(pb.keyframe_ids.size());
    pb.keyframe_ids.push_back(id);
    pb.poses.push_back(graph.keyframe(id).pose);
    pb.pose_param.push_back(optimize ? pb.optimized++ : -1);
  };
  for (std::size_t i = 0; i < window.size(); ++i) add_keyframe(window[i], i > 0);

  int shared = 0;
  for (const auto& mp : graph.map_points()) {
    int in_window = 0;
    for (const auto& o : mp.observations)
      if (std::find(window.begin(), window.end(), o.keyframe) != window.end()) ++in_window;
    if (in_window == 0) continue;
    if (in_window >= 2) ++shared;
    const int slot = static_cast<int>(pb.points.size());
    pb.point_ids.push_back(mp.id);
    pb.points.push_back(mp.world_position);
    for (const auto& o : mp.observations) {
      if (!kf_slot.count(o.keyframe)) add_keyframe(o.keyframe, false);
      const int kslot = kf_slot[o.keyframe];
      if ((pb.poses[kslot] * mp.world_position).z() <= 1e-9) continue;
      Term t{slot, kslot, o.pixel.u, o.pixel.v, 0.0, false};
      if (options.baseline > 0.0 && !fields.empty()) {
        const int frame = graph.keyframe(o.keyframe).frame_index;
        if (frame >= 0 && static_cast<std::size_t>(frame) < fields.size()) {
          if (const auto s = fields[frame].sample(o.pixel.u, o.pixel.v)) {
            t.ur = o.pixel.u - k.fx * options.baseline / s->depth;
            t.stereo = true;
          }
        }
      }
      pb.terms.push_back(t);
    }
  }
  if (shared < 10) throw Error(ErrorKind::InvalidConfig, "bundle adjustment window shares fewer than 10 points");
  pb.fx_b = k.fx * options.baseline;
  return pb;
}

// Residual (u, v[, u_r]) of one term; false when the point is behind the camera.
bool residual(const Problem& pb, const CameraIntrinsics& k, const Term& t, const std::vector<PoseSE3>& poses,
              const std::vector<Point3>& points, Eigen::Vector3d& r, Point3& xc) {
  xc = poses[t.keyframe] * points[t.point];
  if (xc.z() <= 1e-9) return false;
  const double iz = 1.0 / xc.z();
  const double u = k.fx * xc.x() * iz + k.cx;
  r(0) = u - t.u;
  r(1) = k.fy * xc.y() * iz + k.cy - t.v;
  r(2) = t.stereo ? (u - pb.fx_b * iz) - t.ur : 0.0;
  return true;
}

double cost(const Problem& pb, const CameraIntrinsics& k, const std::vector<PoseSE3>& poses,
            const std::vector<Point3>& points, double delta) {
  double total = 0.0;
  Eigen::Vector3d r;
  Point3 xc;
  for (const auto& t : pb.terms) {
    if (!residual(pb, k, t, poses, points, r, xc)) return std::numeric_limits<double>::infinity();
    total += huber(r.norm(), delta);
  }
  return total;
}

}  // namespace

double bundle_adjust_cost(const KeyframeGraph& graph, const std::vector<int>& window, const CameraIntrinsics& k,
                          std::span<const DepthField> fields, const BundleAdjustOptions& options) {
  const Problem pb = build(graph, window, k, fields, options);
  return cost(pb, k, pb.poses, pb.points, options.huber_delta);
}

BundleAdjustReport local_bundle_adjust(KeyframeGraph& graph, const std::vector<int>& window, const CameraIntrinsics& k,
                                       std::span<const DepthField> fields, const BundleAdjustOptions& options) {
  Problem pb = build(graph, window, k, fields, options);
  const double delta = options.huber_delta;
  const int np = pb.optimized;
  const std::size_t nl = pb.points.size();

  BundleAdjustReport report;
  double current = cost(pb, k, pb.poses, pb.points, delta);
  report.initial_cost = current;
  double lambda = options.initial_lambda;

  std::vector<Mat3> hll(nl);
  std::vector<Vec3> gl(nl);
  std::vector<Mat63> hpl(pb.terms.size());
  Eigen::MatrixXd hpp(6 * np, 6 * np);
  Eigen::VectorXd gp(6 * np);
  std::vector<std::vector<int>> terms_of_point(nl);
  for (std::size_t i = 0; i < pb.terms.size(); ++i) terms_of_point[pb.terms[i].point].push_back(static_cast<int>(i));

  for (int it = 0; it < options.max_iterations && current > 0.0; ++it) {
    report.iterations = it + 1;
    hpp.setZero();
    gp.setZero();
    for (std::size_t l = 0; l < nl; ++l) {
      hll[l].setZero();
      gl[l].setZero();
    }
    Eigen::Vector3d r;
    Point3 xc;
    for (std::size_t i = 0; i < pb.terms.size(); ++i) {
      const Term& t = pb.terms[i];
      residual(pb, k, t, pb.poses, pb.points, r, xc);
      const int rows = t.stereo ? 3 : 2;
      const double s = r.norm();
      const double w = s <= delta ? 1.0 : delta / s;
      const double iz = 1.0 / xc.z();
      const double iz2 = iz * iz;
      Eigen::Matrix3d jp = Eigen::Matrix3d::Zero();
      jp.row(0) << k.fx * iz, 0.0, -k.fx * xc.x() * iz2;
      jp.row(1) << 0.0, k.fy * iz, -k.fy * xc.y() * iz2;
      jp.row(2) = jp.row(0);
      jp(2, 2) += pb.fx_b * iz2;
      const Eigen::MatrixXd jpr = jp.topRows(rows);
      const Eigen::VectorXd rr = r.head(rows);
      const Eigen::MatrixXd jl = jpr * pb.poses[t.keyframe].rotation();
      hll[t.point].noalias() += w * jl.transpose() * jl;
      gl[t.point].noalias() += w * jl.transpose() * rr;
      const int pp = pb.pose_param[t.keyframe];
      if (pp >= 0) {
        Eigen::Matrix<double, 3, 6> jx;
        jx.leftCols<3>() = -skew(xc);
        jx.rightCols<3>() = Mat3::Identity();
        const Eigen::MatrixXd jc = jpr * jx;
        hpp.block<6, 6>(6 * pp, 6 * pp).noalias() += w * jc.transpose() * jc;
        gp.segment<6>(6 * pp).noalias() += w * jc.transpose() * rr;
        hpl[i].noalias() = w * jc.transpose() * jl;
      }
    }

    bool accepted = false;
    while (!accepted) {
      Eigen::MatrixXd s = hpp;
      s.diagonal() *= 1.0 + lambda;
      Eigen::VectorXd b = -gp;
      std::vector<Mat3> hll_inv(nl);
      std::vector<bool> solvable(nl, true);
      for (std::size_t l = 0; l < nl; ++l) {
        Mat3 a = hll[l];
        a.diagonal() *= 1.0 + lambda;
        Eigen::FullPivLU<Mat3> lu(a);
        if (!lu.isInvertible() || !(a.diagonal().minCoeff() > 1e-12 * a.diagonal().maxCoeff())) {
          solvable[l] = false;
          continue;
        }
        hll_inv[l] = lu.inverse();
        const auto& ts = terms_of_point[l];
        for (int i : ts) {
          const int pi = pb.pose_param[pb.terms[i].keyframe];
          if (pi < 0) continue;
          const Mat63 hw = hpl[i] * hll_inv[l];
          b.segment<6>(6 * pi).noalias() += hw * gl[l];
          for (int j : ts) {
            const int pj = pb.pose_param[pb.terms[j].keyframe];
            if (pj < 0) continue;
            s.block<6, 6>(6 * pi, 6 * pj).noalias() -= hw * hpl[j].transpose();
          }
        }
      }
      Eigen::VectorXd dp = Eigen::VectorXd::Zero(6 * np);
      if (np > 0) dp = s.ldlt().solve(b);

      std::vector<PoseSE3> poses = pb.poses;
      for (std::size_t i = 0; i < poses.size(); ++i)
        if (pb.pose_param[i] >= 0) poses[i] = PoseSE3::exp(dp.segment<6>(6 * pb.pose_param[i])) * poses[i];
      std::vector<Point3> points = pb.points;
      for (std::size_t l = 0; l < nl; ++l) {
        if (!solvable[l]) continue;
        Vec3 rhs = -gl[l];
        for (int i : terms_of_point[l]) {
          const int pi = pb.pose_param[pb.terms[i].keyframe];
          if (pi >= 0) rhs.noalias() -= hpl[i].transpose() * dp.segment<6>(6 * pi);
        }
        points[l] += hll_inv[l] * rhs;
      }

      const double c = dp.allFinite() ? cost(pb, k, poses, points, delta) : std::numeric_limits<double>::infinity();
      if (c < current) {
        const double gain = current - c;
        pb.poses = std::move(poses);
        pb.points = std::move(points);
        current = c;
        lambda = std::max(lambda / 10.0, 1e-12);
        ++report.accepted_steps;
        accepted = true;
        if (gain <= 1e-10 * current) report.converged = true;
      } else {
        lambda *= 10.0;
        if (lambda > 1e10) {
          report.converged = true;
          break;
        }
      }
    }
    if (report.converged) break;
  }
  if (current == 0.0) report.converged = true;
  report.final_cost = current;

  for (std::size_t i = 0; i < pb.keyframe_ids.size(); ++i) {
    if (pb.pose_param[i] < 0) continue;
    PoseSE3 pose = pb.poses[i];
    pose.normalize();
    graph.keyframe(pb.keyframe_ids[i]).pose = pose;
  }
  std::map<int, std::size_t> slot;
  for (std::size_t l = 0; l < nl; ++l) slot[pb.point_ids[l]] = l;
  for (auto& mp : graph.map_points()) {
    const auto it = slot.find(mp.id);
    if (it != slot.end()) mp.world_position = pb.points[it->second];
  }
  return report;
}

}  // namespace prgbd
