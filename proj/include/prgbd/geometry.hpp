#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace prgbd {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Vec6 = Eigen::Matrix<double, 6, 1>;

/// A point in some camera (or world) frame, meters.
using Point3 = Eigen::Vector3d;

/// Continuous image coordinates; integer values are pixel centers.
struct Pixel {
  double u = 0.0;
  double v = 0.0;
};

struct CameraIntrinsics {
  double fx = 1.0;
  double fy = 1.0;
  double cx = 0.0;
  double cy = 0.0;
  int width = 2;
  int height = 2;

  /// Throws InvalidConfig when the parameters violate the pinhole invariants.
  void validate() const;
  Mat3 matrix() const;
  bool contains(const Pixel& p) const {
    return p.u >= 0.0 && p.v >= 0.0 && p.u <= width - 1 && p.v <= height - 1;
  }
};

/// Rigid motion x' = R x + t.
class PoseSE3 {
 public:
  PoseSE3() : rotation_(Mat3::Identity()), translation_(Vec3::Zero()) {}
  PoseSE3(const Mat3& rotation, const Vec3& translation)
      : rotation_(rotation), translation_(translation) {}

  static PoseSE3 identity() { return {}; }
  /// Exponential map of a twist (omega, v); rotation part via Rodrigues.
  static PoseSE3 exp(const Vec6& twist);
  static PoseSE3 from_quaternion(const Eigen::Quaterniond& q, const Vec3& t);

  const Mat3& rotation() const { return rotation_; }
  const Vec3& translation() const { return translation_; }
  Eigen::Quaterniond quaternion() const;

  PoseSE3 inverse() const;
  PoseSE3 operator*(const PoseSE3& other) const;
  Point3 operator*(const Point3& x) const { return rotation_ * x + translation_; }

  /// Orthonormality and det(R) = 1 within tol.
  bool is_valid(double tol = 1e-9) const;
  /// Re-orthonormalize the rotation (polar projection).
  void normalize();

 private:
  Mat3 rotation_;
  Vec3 translation_;
};

/// x' = s R x + t
struct Sim3Transform {
  double scale = 1.0;
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();

  Point3 operator*(const Point3& x) const { return scale * (rotation * x) + translation; }
  Sim3Transform inverse() const;
  PoseSE3 rigid_part() const { return {rotation, translation}; }
};

Mat3 skew(const Vec3& w);
Mat3 so3_exp(const Vec3& w);
Vec3 so3_log(const Mat3& r);
/// Geodesic angle of a rotation matrix, radians.
double rotation_angle(const Mat3& r);

struct Projection {
  Pixel pixel;
  double depth = 0.0;
};

/// X = K^-1 [p, 1]^T d
Point3 back_project(const Pixel& p, double depth, const CameraIntrinsics& k);
Projection project(const CameraIntrinsics& k, const Point3& x);
/// Pixel and depth of (p, d) after moving the point through `t` into another camera.
Projection transfer_depth(const Pixel& p, double depth, const PoseSE3& t,
                          const CameraIntrinsics& k);

inline constexpr double kKittiBaseline = 0.54;
inline constexpr double kKittiMaxDepth = 80.0;

/// Virtual stereo baseline scaled to the sequence's depth range.
double adaptive_baseline(double d_max);
/// Horizontal coordinate in the virtual rectified right view.
double virtual_stereo_disparity(double u_left, double depth, double fx, double baseline);

}  // namespace prgbd
