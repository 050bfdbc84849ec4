#include "dgecn/geometry.hpp"

#include "dgecn/error.hpp"

#include <Eigen/Geometry>
#include <Eigen/SVD>

#include <algorithm>
#include <cmath>

namespace dgecn {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::PointBehindCamera: return "PointBehindCamera";
    case ErrorKind::InvalidDepth: return "InvalidDepth";
    case ErrorKind::DegenerateInput: return "DegenerateInput";
    case ErrorKind::TooFewVertices: return "TooFewVertices";
    case ErrorKind::EmptyInput: return "EmptyInput";
    case ErrorKind::InvalidCount: return "InvalidCount";
    case ErrorKind::InvalidSeed: return "InvalidSeed";
    case ErrorKind::InvalidRadius: return "InvalidRadius";
    case ErrorKind::SphereBehindCamera: return "SphereBehindCamera";
    case ErrorKind::InvalidSigma: return "InvalidSigma";
    case ErrorKind::InvalidRate: return "InvalidRate";
    case ErrorKind::DegenerateConfiguration: return "DegenerateConfiguration";
    case ErrorKind::TooFewPoints: return "TooFewPoints";
    case ErrorKind::NoConsensus: return "NoConsensus";
    case ErrorKind::ClusterTooSmall: return "ClusterTooSmall";
    case ErrorKind::DimensionMismatch: return "DimensionMismatch";
    case ErrorKind::ProbabilityOutOfRange: return "ProbabilityOutOfRange";
    case ErrorKind::TapeMismatch: return "TapeMismatch";
    case ErrorKind::NonFiniteLoss: return "NonFiniteLoss";
    case ErrorKind::InsufficientNeighbors: return "InsufficientNeighbors";
    case ErrorKind::InvalidConfig: return "InvalidConfig";
    case ErrorKind::IoError: return "IoError";
    case ErrorKind::ParseError: return "ParseError";
    case ErrorKind::CountMismatch: return "CountMismatch";
  }
  return "Unknown";
}

bool is_rotation(const Eigen::Matrix3d& m, double tol) {
  if (!m.allFinite()) return false;
  const double ortho = (m.transpose() * m - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff();
  return ortho <= tol && std::abs(m.determinant() - 1.0) <= tol;
}

Rotation Rotation::from_matrix(const Eigen::Matrix3d& m) {
  if (!is_rotation(m)) fail(ErrorKind::DegenerateInput, "matrix is not a proper rotation");
  return Rotation(m);
}

Rotation Rotation::project(const Eigen::Matrix3d& m) {
  if (!m.allFinite()) fail(ErrorKind::DegenerateInput, "non-finite rotation matrix");
  Eigen::JacobiSVD<Eigen::Matrix3d> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Eigen::Matrix3d u = svd.matrixU();
  const Eigen::Matrix3d v = svd.matrixV();
  if ((u * v.transpose()).determinant() < 0.0) u.col(2) *= -1.0;
  return Rotation(u * v.transpose());
}

Rotation Rotation::about_axis(const Eigen::Vector3d& axis, double angle_rad) {
  const double n = axis.norm();
  if (!(n > 0.0)) fail(ErrorKind::DegenerateInput, "zero rotation axis");
  return Rotation(Eigen::AngleAxisd(angle_rad, axis / n).toRotationMatrix());
}

Rotation Rotation::from_quaternion(double w, double x, double y, double z) {
  Eigen::Quaterniond q(w, x, y, z);
  if (!(q.norm() > 0.0)) fail(ErrorKind::DegenerateInput, "zero quaternion");
  q.normalize();
  return Rotation(q.toRotationMatrix());
}

Pose::Pose(const Rotation& r, const Eigen::Vector3d& t) : rotation(r), translation(t) {
  if (!t.allFinite()) fail(ErrorKind::DegenerateInput, "non-finite translation");
}

Pose Pose::inverse() const {
  const Rotation rt = rotation.inverse();
  return Pose(rt, -(rt * translation));
}

void CameraIntrinsics::validate() const {
  if (!(focal_x > 0.0) || !(focal_y > 0.0)) fail(ErrorKind::InvalidConfig, "focal lengths must be positive");
  if (width == 0 || height == 0) fail(ErrorKind::InvalidConfig, "image size must be positive");
}

Point3 transform_point(const Pose& pose, const Point3& p) {
  return pose.rotation.matrix() * p + pose.translation;
}

Point2 project(const CameraIntrinsics& intr, const Point3& p_cam) {
  if (!(p_cam.z() > 1e-9)) fail(ErrorKind::PointBehindCamera, "point has z <= 1e-9");
  return {intr.focal_x * p_cam.x() / p_cam.z() + intr.principal_x,
          intr.focal_y * p_cam.y() / p_cam.z() + intr.principal_y};
}

Point3 backproject(const CameraIntrinsics& intr, const Point2& pixel, double depth) {
  if (!std::isfinite(depth) || !(depth > 0.0)) fail(ErrorKind::InvalidDepth, "depth must be finite and positive");
  return {(pixel.x() - intr.principal_x) * depth / intr.focal_x,
          (pixel.y() - intr.principal_y) * depth / intr.focal_y, depth};
}

Rotation rotation_from_6d(const Rotation6D& v) {
  const double n1 = v.first.norm();
  const double n2 = v.second.norm();
  if (!std::isfinite(n1) || !std::isfinite(n2) || n1 < 1e-12 || n2 < 1e-12)
    fail(ErrorKind::DegenerateInput, "6D rotation vector is zero or non-finite");
  const double sin_angle = v.first.cross(v.second).norm() / (n1 * n2);
  if (sin_angle < 1e-6) fail(ErrorKind::DegenerateInput, "6D rotation vectors are parallel");

  const Eigen::Vector3d c1 = v.first / n1;
  const Eigen::Vector3d u2 = v.second - c1.dot(v.second) * c1;
  const Eigen::Vector3d c2 = u2.normalized();
  Eigen::Matrix3d m;
  m.col(0) = c1;
  m.col(1) = c2;
  m.col(2) = c1.cross(c2);
  return Rotation::from_matrix(m);
}

Rotation6D rotation_to_6d(const Rotation& r) { return {r.matrix().col(0), r.matrix().col(1)}; }

double geodesic_angle(const Rotation& a, const Rotation& b) {
  // atan2 of (sin, cos) equals the clamped arccos of the trace but keeps
  // full precision for tiny angles.
  const Eigen::Matrix3d r = a.matrix().transpose() * b.matrix();
  const double c = std::clamp((r.trace() - 1.0) / 2.0, -1.0, 1.0);
  const Eigen::Vector3d w(r(2, 1) - r(1, 2), r(0, 2) - r(2, 0), r(1, 0) - r(0, 1));
  return std::atan2(0.5 * w.norm(), c);
}

}  // namespace dgecn
