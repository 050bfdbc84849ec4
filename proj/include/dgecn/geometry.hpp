#pragma once

#include <Eigen/Core>

#include <cstdint>

namespace dgecn {

using Point3 = Eigen::Vector3d;
using Point2 = Eigen::Vector2d;

// Element of SO(3). Construction validates orthonormality and det = +1.
class Rotation {
 public:
  static constexpr double kTolerance = 1e-9;

  Rotation() : m_(Eigen::Matrix3d::Identity()) {}

  // Throws DegenerateInput when `m` is not a proper rotation within kTolerance.
  static Rotation from_matrix(const Eigen::Matrix3d& m);
  // Nearest rotation in Frobenius norm (SVD with reflection correction).
  static Rotation project(const Eigen::Matrix3d& m);
  static Rotation about_axis(const Eigen::Vector3d& axis, double angle_rad);
  // Unit quaternion (w, x, y, z); normalized internally.
  static Rotation from_quaternion(double w, double x, double y, double z);

  const Eigen::Matrix3d& matrix() const noexcept { return m_; }
  Rotation inverse() const { return Rotation(m_.transpose()); }
  Rotation operator*(const Rotation& o) const { return Rotation(m_ * o.m_); }
  Point3 operator*(const Point3& p) const { return m_ * p; }

 private:
  explicit Rotation(const Eigen::Matrix3d& m) : m_(m) {}
  Eigen::Matrix3d m_;
};

bool is_rotation(const Eigen::Matrix3d& m, double tol = Rotation::kTolerance);

struct Pose {
  Rotation rotation;
  Eigen::Vector3d translation = Eigen::Vector3d::Zero();

  Pose() = default;
  Pose(const Rotation& r, const Eigen::Vector3d& t);

  Pose operator*(const Pose& o) const {
    return Pose(rotation * o.rotation, rotation * o.translation + translation);
  }
  Pose inverse() const;
};

// First two columns of a rotation matrix before orthonormalization.
struct Rotation6D {
  Eigen::Vector3d first;
  Eigen::Vector3d second;
};

struct CameraIntrinsics {
  double focal_x = 800.0;
  double focal_y = 800.0;
  double principal_x = 320.0;
  double principal_y = 240.0;
  std::uint32_t width = 640;
  std::uint32_t height = 480;

  // Throws InvalidConfig when focal lengths or image size are not positive.
  void validate() const;
  bool contains(const Point2& px) const {
    return px.x() >= 0.0 && px.y() >= 0.0 && px.x() < width && px.y() < height;
  }
};

Point3 transform_point(const Pose& pose, const Point3& p);

// Pinhole projection, +z forward, y down. Throws PointBehindCamera for z <= 1e-9.
Point2 project(const CameraIntrinsics& intr, const Point3& p_cam);

// Inverse of project along the pixel ray. Throws InvalidDepth unless depth is finite and > 0.
Point3 backproject(const CameraIntrinsics& intr, const Point2& pixel, double depth);

// Gram-Schmidt decode: columns 1-2 from the two vectors, column 3 = c1 x c2.
// Throws DegenerateInput when the first vector vanishes or the pair is parallel.
Rotation rotation_from_6d(const Rotation6D& v);
Rotation6D rotation_to_6d(const Rotation& r);

// Geodesic distance on SO(3) in radians, in [0, pi].
double geodesic_angle(const Rotation& a, const Rotation& b);

}  // namespace dgecn
