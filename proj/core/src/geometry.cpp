#include "slot/geometry.hpp"

#include <cmath>
#include <numbers>
#include <string>

namespace slot {

namespace {

constexpr double kSmallAngle = 1e-5;
constexpr double kDefectLimit = 1e-10;
constexpr double kLogMargin = 1e-6;

// Translation block Q(phi, rho) of the SE(3) left Jacobian.
Matrix3 left_jacobian_q(const Vector3& phi, const Vector3& rho) {
  const Matrix3 px = hat(phi);
  const Matrix3 rx = hat(rho);
  const double theta = phi.norm();
  double c1 = 0.0;
  double c2 = 0.0;
  double c3 = 0.0;
  if (theta < 1e-3) {
    const double t2 = theta * theta;
    c1 = 1.0 / 6.0 - t2 / 120.0;
    c2 = 1.0 / 24.0 - t2 / 720.0;
    c3 = 1.0 / 120.0 - t2 / 2520.0;
  } else {
    const double t2 = theta * theta;
    const double s = std::sin(theta);
    const double c = std::cos(theta);
    c1 = (theta - s) / (t2 * theta);
    c2 = (t2 + 2.0 * c - 2.0) / (2.0 * t2 * t2);
    c3 = (2.0 * theta - 3.0 * s + theta * c) / (2.0 * t2 * t2 * theta);
  }
  const Matrix3 pr = px * rx;
  const Matrix3 rp = rx * px;
  const Matrix3 prp = pr * px;
  return 0.5 * rx + c1 * (pr + rp + prp) + c2 * (px * pr + rp * px - 3.0 * prp) +
         c3 * (prp * px + px * prp);
}

}  // namespace

DegenerateRotation::DegenerateRotation(double angle)
    : std::domain_error("log_map: rotation angle " + std::to_string(angle) +
                        " too close to pi for a unique logarithm"),
      angle_(angle) {}

Pose::Pose(const Matrix3& rotation, const Vector3& translation)
    : rotation_(rotation), translation_(translation) {
  if (orthonormality_defect() > kDefectLimit) renormalize();
}

Pose Pose::from_translation(double x, double y, double z) {
  return Pose(Matrix3::Identity(), Vector3(x, y, z));
}

Pose Pose::from_xyz_yaw(double x, double y, double z, double yaw) {
  const double c = std::cos(yaw);
  const double s = std::sin(yaw);
  Matrix3 r;
  r << c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0;
  return Pose(r, Vector3(x, y, z));
}

Pose Pose::from_row_major(const std::array<double, 12>& v) {
  Matrix3 r;
  r << v[0], v[1], v[2], v[4], v[5], v[6], v[8], v[9], v[10];
  return Pose(r, Vector3(v[3], v[7], v[11]));
}

Pose Pose::operator*(const Pose& other) const {
  Pose out;
  out.rotation_ = rotation_ * other.rotation_;
  out.translation_ = rotation_ * other.translation_ + translation_;
  if (out.orthonormality_defect() > kDefectLimit) out.renormalize();
  return out;
}

Pose Pose::inverse() const {
  Pose out;
  out.rotation_ = rotation_.transpose();
  out.translation_ = -(out.rotation_ * translation_);
  return out;
}

double Pose::yaw() const { return std::atan2(rotation_(1, 0), rotation_(0, 0)); }

Eigen::Matrix4d Pose::matrix() const {
  Eigen::Matrix4d m = Eigen::Matrix4d::Identity();
  m.topLeftCorner<3, 3>() = rotation_;
  m.topRightCorner<3, 1>() = translation_;
  return m;
}

std::array<double, 12> Pose::to_row_major() const {
  std::array<double, 12> v{};
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) v[4 * r + c] = rotation_(r, c);
    v[4 * r + 3] = translation_(r);
  }
  return v;
}

double Pose::orthonormality_defect() const {
  return (rotation_.transpose() * rotation_ - Matrix3::Identity()).norm();
}

void Pose::renormalize() {
  Eigen::Quaterniond q(rotation_);
  rotation_ = q.normalized().toRotationMatrix();
}

Matrix6 Pose::adjoint() const {
  Matrix6 ad = Matrix6::Zero();
  ad.topLeftCorner<3, 3>() = rotation_;
  ad.bottomRightCorner<3, 3>() = rotation_;
  ad.bottomLeftCorner<3, 3>() = hat(translation_) * rotation_;
  return ad;
}

bool Pose::is_approx(const Pose& other, double tol) const {
  return (rotation_ - other.rotation_).cwiseAbs().maxCoeff() <= tol &&
         (translation_ - other.translation_).cwiseAbs().maxCoeff() <= tol;
}

Pose compose(const Pose& a, const Pose& b) { return a * b; }
Pose inverse(const Pose& a) { return a.inverse(); }
Pose between(const Pose& a, const Pose& b) { return a.inverse() * b; }

Pose se3_from_xyzyaw(double x, double y, double z, double yaw) {
  return Pose::from_xyz_yaw(x, y, z, yaw);
}

Matrix3 hat(const Vector3& v) {
  Matrix3 m;
  m << 0.0, -v.z(), v.y(), v.z(), 0.0, -v.x(), -v.y(), v.x(), 0.0;
  return m;
}

Matrix3 so3_exp(const Vector3& phi) {
  const double theta = phi.norm();
  const Matrix3 k = hat(phi);
  if (theta < kSmallAngle) {
    return Matrix3::Identity() + k + 0.5 * k * k;
  }
  return Eigen::AngleAxisd(theta, phi / theta).toRotationMatrix();
}

Vector3 so3_log(const Matrix3& r) {
  const Vector3 axis_sin(r(2, 1) - r(1, 2), r(0, 2) - r(2, 0), r(1, 0) - r(0, 1));
  const double sin_theta = 0.5 * axis_sin.norm();
  const double cos_theta = 0.5 * (r.trace() - 1.0);
  const double theta = std::atan2(sin_theta, cos_theta);
  if (theta < kSmallAngle) {
    // theta / sin(theta) ~ 1 + theta^2 / 6
    return 0.5 * (1.0 + theta * theta / 6.0) * axis_sin;
  }
  if (std::numbers::pi - theta < 1e-3) {
    // Near pi the antisymmetric part vanishes; recover the axis from the
    // symmetric part instead.
    const Matrix3 b = 0.5 * (r + r.transpose()) - cos_theta * Matrix3::Identity();
    int k = 0;
    b.diagonal().maxCoeff(&k);
    Vector3 axis = b.col(k) / std::sqrt(std::max(b(k, k), 1e-300));
    axis.normalize();
    if (axis.dot(axis_sin) < 0.0) axis = -axis;
    return theta * axis;
  }
  return theta / (2.0 * std::sin(theta)) * axis_sin;
}

Matrix3 so3_left_jacobian(const Vector3& phi) {
  const double theta = phi.norm();
  const Matrix3 k = hat(phi);
  if (theta < kSmallAngle) {
    return Matrix3::Identity() + 0.5 * k + k * k / 6.0;
  }
  const double t2 = theta * theta;
  return Matrix3::Identity() + (1.0 - std::cos(theta)) / t2 * k +
         (theta - std::sin(theta)) / (t2 * theta) * k * k;
}

Matrix3 so3_left_jacobian_inverse(const Vector3& phi) {
  const double theta = phi.norm();
  const Matrix3 k = hat(phi);
  if (theta < kSmallAngle) {
    return Matrix3::Identity() - 0.5 * k + k * k / 12.0;
  }
  const double t2 = theta * theta;
  const double coeff =
      1.0 / t2 - (1.0 + std::cos(theta)) / (2.0 * theta * std::sin(theta));
  return Matrix3::Identity() - 0.5 * k + coeff * k * k;
}

Pose exp_map(const Twist& v) {
  const Vector3 phi = v.head<3>();
  const Vector3 rho = v.tail<3>();
  return Pose(so3_exp(phi), so3_left_jacobian(phi) * rho);
}

Twist log_map(const Pose& p) {
  const Vector3 phi = so3_log(p.rotation());
  const double theta = phi.norm();
  if (theta >= std::numbers::pi - kLogMargin) throw DegenerateRotation(theta);
  Twist v;
  v.head<3>() = phi;
  v.tail<3>() = so3_left_jacobian_inverse(phi) * p.translation();
  return v;
}

Matrix6 se3_left_jacobian(const Twist& v) {
  const Vector3 phi = v.head<3>();
  const Matrix3 j = so3_left_jacobian(phi);
  Matrix6 out = Matrix6::Zero();
  out.topLeftCorner<3, 3>() = j;
  out.bottomRightCorner<3, 3>() = j;
  out.bottomLeftCorner<3, 3>() = left_jacobian_q(phi, v.tail<3>());
  return out;
}

Matrix6 se3_right_jacobian(const Twist& v) { return se3_left_jacobian(-v); }

Matrix6 se3_right_jacobian_inverse(const Twist& v) {
  const Vector3 phi = -v.head<3>();
  const Vector3 rho = -v.tail<3>();
  const Matrix3 j_inv = so3_left_jacobian_inverse(phi);
  Matrix6 out = Matrix6::Zero();
  out.topLeftCorner<3, 3>() = j_inv;
  out.bottomRightCorner<3, 3>() = j_inv;
  out.bottomLeftCorner<3, 3>() = -j_inv * left_jacobian_q(phi, rho) * j_inv;
  return out;
}

double wrap_angle(double angle) {
  return std::remainder(angle, 2.0 * std::numbers::pi);
}

}  // namespace slot
