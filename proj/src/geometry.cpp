#include "dloc/geometry.hpp"

#include <algorithm>

namespace dloc {

Mat3 euler_to_rotation(const EulerAttitude& att) {
  const double cy = std::cos(att.yaw), sy = std::sin(att.yaw);
  const double cp = std::cos(att.pitch), sp = std::sin(att.pitch);
  const double cr = std::cos(att.roll), sr = std::sin(att.roll);
  Mat3 R;
  R << cy * cp, cy * sp * sr - sy * cr, cy * sp * cr + sy * sr,
       sy * cp, sy * sp * sr + cy * cr, sy * sp * cr - cy * sr,
       -sp,     cp * sr,                cp * cr;
  return R;
}

EulerAttitude rotation_to_euler(const Mat3& R) {
  EulerAttitude att;
  const double sp = -R(2, 0);
  att.pitch = std::asin(std::clamp(sp, -1.0, 1.0));
  if (std::abs(sp) > 1.0 - 1e-12) {
    // Gimbal lock: only yaw -+ roll is observable. Fold it all into yaw.
    att.roll = 0.0;
    att.yaw = std::atan2(-R(0, 1), R(1, 1));
  } else {
    att.yaw = std::atan2(R(1, 0), R(0, 0));
    att.roll = std::atan2(R(2, 1), R(2, 2));
  }
  return att;
}

}  // namespace dloc
