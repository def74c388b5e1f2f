#pragma once

#include <array>
#include <stdexcept>

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace slot {

using Vector3 = Eigen::Vector3d;
using Matrix3 = Eigen::Matrix3d;
using Vector6 = Eigen::Matrix<double, 6, 1>;
using Matrix6 = Eigen::Matrix<double, 6, 6>;

// Minimal SE(3) coordinates ordered (rx, ry, rz, tx, ty, tz).
using Twist = Vector6;

/// Raised by log_map when the rotation angle is too close to pi for a unique
/// logarithm.
class DegenerateRotation : public std::domain_error {
 public:
  explicit DegenerateRotation(double angle);
  double angle() const { return angle_; }

 private:
  double angle_;
};

/// Rigid-body transform. Stored as a 3x3 rotation and a translation; the
/// rotation is re-orthonormalized whenever its defect exceeds 1e-10.
class Pose {
 public:
  Pose() : rotation_(Matrix3::Identity()), translation_(Vector3::Zero()) {}
  Pose(const Matrix3& rotation, const Vector3& translation);

  static Pose identity() { return {}; }
  static Pose from_translation(double x, double y, double z);
  static Pose from_xyz_yaw(double x, double y, double z, double yaw);
  // KITTI convention: row-major 3x4 [R|t].
  static Pose from_row_major(const std::array<double, 12>& values);

  const Matrix3& rotation() const { return rotation_; }
  const Vector3& translation() const { return translation_; }

  Pose operator*(const Pose& other) const;
  Vector3 operator*(const Vector3& point) const { return rotation_ * point + translation_; }

  Pose inverse() const;
  // Heading about the vertical axis, in [-pi, pi].
  double yaw() const;
  Eigen::Matrix4d matrix() const;
  std::array<double, 12> to_row_major() const;

  /// ||R^T R - I||_F
  double orthonormality_defect() const;
  void renormalize();

  /// Adjoint in (rotation, translation) ordering: T exp(v) T^-1 = exp(Ad_T v).
  Matrix6 adjoint() const;

  bool is_approx(const Pose& other, double tol = 1e-9) const;

 private:
  Matrix3 rotation_;
  Vector3 translation_;
};

Pose compose(const Pose& a, const Pose& b);
Pose inverse(const Pose& a);
/// a^-1 * b: the pose of b expressed in a's frame.
Pose between(const Pose& a, const Pose& b);
Pose se3_from_xyzyaw(double x, double y, double z, double yaw);

Pose exp_map(const Twist& v);
/// Throws DegenerateRotation when the rotation angle is >= pi - 1e-6.
Twist log_map(const Pose& p);

Matrix3 hat(const Vector3& v);
Matrix3 so3_exp(const Vector3& phi);
/// Rotation vector of R. Uses atan2 so small angles keep full precision.
Vector3 so3_log(const Matrix3& rotation);
Matrix3 so3_left_jacobian(const Vector3& phi);
Matrix3 so3_left_jacobian_inverse(const Vector3& phi);

/// Left and right Jacobians of SE(3) in (rotation, translation) ordering.
/// log(exp(v) exp(d)) ~ v + Jr^-1(v) d for small d.
Matrix6 se3_left_jacobian(const Twist& v);
Matrix6 se3_right_jacobian(const Twist& v);
Matrix6 se3_right_jacobian_inverse(const Twist& v);

double wrap_angle(double angle);

}  // namespace slot
