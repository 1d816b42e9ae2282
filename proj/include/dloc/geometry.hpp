#pragma once

#include <Eigen/Core>
#include <cmath>

namespace dloc {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Vec6 = Eigen::Matrix<double, 6, 1>;
using Mat6 = Eigen::Matrix<double, 6, 6>;

/// Wraps an angle to the principal interval (-pi, pi].
inline double wrap_angle(double a) {
  double r = std::remainder(a, 2.0 * M_PI);
  if (r <= -M_PI) r += 2.0 * M_PI;
  return r;
}

/// Smallest signed difference a - b, wrapped to (-pi, pi].
inline double angle_diff(double a, double b) { return wrap_angle(a - b); }

/// Attitude as intrinsic ZYX Euler angles: yaw about world z, then pitch,
/// then roll. Yaw and roll live in (-pi, pi], pitch in [-pi/2, pi/2].
struct EulerAttitude {
  double yaw = 0.0;
  double pitch = 0.0;
  double roll = 0.0;
};

/// R = Rz(yaw) * Ry(pitch) * Rx(roll).
Mat3 euler_to_rotation(const EulerAttitude& att);

/// Inverse of euler_to_rotation. Near gimbal lock (|pitch| -> pi/2) the
/// roll/yaw split is degenerate; roll is set to zero and the remaining
/// rotation is folded into yaw.
EulerAttitude rotation_to_euler(const Mat3& R);

/// Timestamped 6-DoF pose. Stamps are seconds on one monotonic clock.
struct Pose {
  Vec3 position = Vec3::Zero();
  EulerAttitude attitude;
  double stamp = 0.0;
};

/// Rigid transform (rotation + translation), the action of a pose on points.
struct Transform {
  Mat3 R = Mat3::Identity();
  Vec3 t = Vec3::Zero();

  static Transform identity() { return {}; }
  static Transform from_pose(const Pose& p) {
    return {euler_to_rotation(p.attitude), p.position};
  }
  static Transform translation(const Vec3& t) { return {Mat3::Identity(), t}; }

  Vec3 apply(const Vec3& p) const { return R * p + t; }
};

inline Transform compose(const Transform& a, const Transform& b) {
  return {a.R * b.R, a.R * b.t + a.t};
}

inline Transform invert(const Transform& T) {
  Mat3 Rt = T.R.transpose();
  return {Rt, -(Rt * T.t)};
}

}  // namespace dloc
