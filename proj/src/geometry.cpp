#include "prgbd/geometry.hpp"

#include <Eigen/SVD>
#include <algorithm>
#include <cmath>

#include "prgbd/error.hpp"

namespace prgbd {

void CameraIntrinsics::validate() const {
  if (!(fx > 0.0) || !(fy > 0.0)) throw Error(ErrorKind::InvalidConfig, "focal lengths must be positive");
  if (width < 2 || height < 2) throw Error(ErrorKind::InvalidConfig, "image must be at least 2x2");
  if (!(cx >= 0.0 && cx < width && cy >= 0.0 && cy < height))
    throw Error(ErrorKind::InvalidConfig, "principal point outside the image");
}

Mat3 CameraIntrinsics::matrix() const {
  Mat3 k;
  k << fx, 0.0, cx, 0.0, fy, cy, 0.0, 0.0, 1.0;
  return k;
}

Mat3 skew(const Vec3& w) {
  Mat3 s;
  s << 0.0, -w.z(), w.y(), w.z(), 0.0, -w.x(), -w.y(), w.x(), 0.0;
  return s;
}

Mat3 so3_exp(const Vec3& w) {
  const double theta = w.norm();
  const Mat3 wx = skew(w);
  if (theta < 1e-8) return Mat3::Identity() + wx + 0.5 * wx * wx;
  const double a = std::sin(theta) / theta;
  const double b = (1.0 - std::cos(theta)) / (theta * theta);
  return Mat3::Identity() + a * wx + b * wx * wx;
}

Vec3 so3_log(const Mat3& r) {
  const Eigen::AngleAxisd aa(r);
  return aa.angle() * aa.axis();
}

double rotation_angle(const Mat3& r) {
  const double c = std::clamp((r.trace() - 1.0) * 0.5, -1.0, 1.0);
  // acos loses precision near zero; use the skew part there.
  const Vec3 s(r(2, 1) - r(1, 2), r(0, 2) - r(2, 0), r(1, 0) - r(0, 1));
  return std::atan2(0.5 * s.norm(), c);
}

PoseSE3 PoseSE3::exp(const Vec6& twist) {
  const Vec3 w = twist.head<3>();
  const Vec3 v = twist.tail<3>();
  const double theta = w.norm();
  const Mat3 wx = skew(w);
  Mat3 jac;
  if (theta < 1e-8) {
    jac = Mat3::Identity() + 0.5 * wx;
  } else {
    const double t2 = theta * theta;
    jac = Mat3::Identity() + (1.0 - std::cos(theta)) / t2 * wx + (theta - std::sin(theta)) / (t2 * theta) * wx * wx;
  }
  return {so3_exp(w), jac * v};
}

PoseSE3 PoseSE3::from_quaternion(const Eigen::Quaterniond& q, const Vec3& t) {
  return {q.normalized().toRotationMatrix(), t};
}

Eigen::Quaterniond PoseSE3::quaternion() const {
  Eigen::Quaterniond q(rotation_);
  q.normalize();
  if (q.w() < 0.0) q.coeffs() *= -1.0;
  return q;
}

PoseSE3 PoseSE3::inverse() const {
  const Mat3 rt = rotation_.transpose();
  return {rt, -(rt * translation_)};
}

PoseSE3 PoseSE3::operator*(const PoseSE3& other) const {
  return {rotation_ * other.rotation_, rotation_ * other.translation_ + translation_};
}

bool PoseSE3::is_valid(double tol) const {
  if (!rotation_.allFinite() || !translation_.allFinite()) return false;
  const double ortho = (rotation_.transpose() * rotation_ - Mat3::Identity()).cwiseAbs().maxCoeff();
  return ortho <= tol && std::abs(rotation_.determinant() - 1.0) <= tol;
}

void PoseSE3::normalize() {
  Eigen::JacobiSVD<Mat3> svd(rotation_, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat3 r = svd.matrixU() * svd.matrixV().transpose();
  if (r.determinant() < 0.0) {
    Mat3 u = svd.matrixU();
    u.col(2) *= -1.0;
    r = u * svd.matrixV().transpose();
  }
  rotation_ = r;
}

Sim3Transform Sim3Transform::inverse() const {
  Sim3Transform inv;
  inv.scale = 1.0 / scale;
  inv.rotation = rotation.transpose();
  inv.translation = -(inv.scale * (inv.rotation * translation));
  return inv;
}

Point3 back_project(const Pixel& p, double depth, const CameraIntrinsics& k) {
  if (!(depth > 0.0)) throw Error(ErrorKind::DegenerateDepth, "back-projection needs positive depth");
  return {(p.u - k.cx) / k.fx * depth, (p.v - k.cy) / k.fy * depth, depth};
}

Projection project(const CameraIntrinsics& k, const Point3& x) {
  if (!(x.z() > 0.0)) throw Error(ErrorKind::BehindCamera, "point has non-positive depth");
  return {{k.fx * x.x() / x.z() + k.cx, k.fy * x.y() / x.z() + k.cy}, x.z()};
}

Projection transfer_depth(const Pixel& p, double depth, const PoseSE3& t, const CameraIntrinsics& k) {
  return project(k, t * back_project(p, depth, k));
}

double adaptive_baseline(double d_max) {
  if (!(d_max > 0.0)) throw Error(ErrorKind::DegenerateDepth, "maximum depth must be positive");
  return kKittiBaseline * (d_max / kKittiMaxDepth);
}

double virtual_stereo_disparity(double u_left, double depth, double fx, double baseline) {
  if (!(depth > 0.0)) throw Error(ErrorKind::DegenerateDepth, "disparity needs positive depth");
  return u_left - fx * baseline / depth;
}

}  // namespace prgbd
