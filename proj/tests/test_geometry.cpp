#include <doctest.h>

#include <Eigen/Dense>
#include <random>

#include "dloc/geometry.hpp"

using namespace dloc;

TEST_CASE("euler_to_rotation basics") {
  CHECK(euler_to_rotation({0, 0, 0}).isApprox(Mat3::Identity(), 1e-15));

  // Quarter yaw turn maps +x to +y.
  Mat3 R = euler_to_rotation({M_PI / 2, 0, 0});
  Vec3 v = R * Vec3(1, 0, 0);
  CHECK(v.x() == doctest::Approx(0).epsilon(1e-12));
  CHECK(v.y() == doctest::Approx(1).epsilon(1e-12));
  CHECK(v.z() == doctest::Approx(0).epsilon(1e-12));

  Mat3 M = euler_to_rotation({0.3, -0.2, 0.1});
  CHECK((M.transpose() * M - Mat3::Identity()).cwiseAbs().maxCoeff() < 1e-12);
  CHECK(M.determinant() == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("euler round trip away from gimbal lock") {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int i = 0; i < 10000; ++i) {
    EulerAttitude a;
    a.yaw = u(rng) * M_PI;
    a.pitch = u(rng) * (M_PI / 2 - 0.01);
    a.roll = u(rng) * M_PI;
    EulerAttitude b = rotation_to_euler(euler_to_rotation(a));
    CHECK(std::abs(angle_diff(a.yaw, b.yaw)) < 1e-9);
    CHECK(std::abs(a.pitch - b.pitch) < 1e-9);
    CHECK(std::abs(angle_diff(a.roll, b.roll)) < 1e-9);
  }
}

TEST_CASE("gimbal lock folds roll into yaw") {
  EulerAttitude a{0.7, M_PI / 2, 0.3};
  Mat3 R = euler_to_rotation(a);
  EulerAttitude b = rotation_to_euler(R);
  CHECK(b.roll == 0.0);
  CHECK(euler_to_rotation(b).isApprox(R, 1e-9));
}

TEST_CASE("transform_point examples") {
  Transform id = Transform::identity();
  CHECK(id.apply(Vec3(1, 2, 3)).isApprox(Vec3(1, 2, 3), 1e-15));

  Transform lift = Transform::translation({0, 0, 1});
  CHECK(lift.apply(Vec3::Zero()).isApprox(Vec3(0, 0, 1), 1e-15));

  // Quarter yaw then shift +x: (1,0,0) -> rotate to (0,1,0) -> (1,1,0).
  Transform T{euler_to_rotation({M_PI / 2, 0, 0}), Vec3(1, 0, 0)};
  CHECK(T.apply(Vec3(1, 0, 0)).isApprox(Vec3(1, 1, 0), 1e-12));
}

TEST_CASE("transforms preserve distance") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(-5.0, 5.0);
  for (int i = 0; i < 1000; ++i) {
    Transform T{euler_to_rotation({u(rng), u(rng) / 4, u(rng)}), Vec3(u(rng), u(rng), u(rng))};
    Vec3 p(u(rng), u(rng), u(rng)), q(u(rng), u(rng), u(rng));
    CHECK(std::abs((T.apply(p) - T.apply(q)).norm() - (p - q).norm()) < 1e-9);
  }
}

TEST_CASE("compose and invert group axioms") {
  CHECK(invert(Transform::identity()).R.isApprox(Mat3::Identity(), 1e-15));
  CHECK(invert(Transform::translation({1, 2, 3})).t.isApprox(Vec3(-1, -2, -3), 1e-15));

  std::mt19937_64 rng(13);
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  for (int i = 0; i < 500; ++i) {
    Transform A{euler_to_rotation({u(rng), u(rng) / 4, u(rng)}), Vec3(u(rng), u(rng), u(rng))};
    Transform B{euler_to_rotation({u(rng), u(rng) / 4, u(rng)}), Vec3(u(rng), u(rng), u(rng))};
    Vec3 p(u(rng), u(rng), u(rng));

    CHECK(compose(A, B).apply(p).isApprox(A.apply(B.apply(p)), 1e-9));
    CHECK(compose(A, invert(A)).apply(p).isApprox(p, 1e-9));
  }
}

TEST_CASE("angle wrapping") {
  CHECK(wrap_angle(0.0) == 0.0);
  CHECK(wrap_angle(M_PI) == doctest::Approx(M_PI));
  CHECK(wrap_angle(-M_PI) == doctest::Approx(M_PI));  // principal range is (-pi, pi]
  CHECK(wrap_angle(3 * M_PI / 2) == doctest::Approx(-M_PI / 2));
  CHECK(angle_diff(3.1, -3.1) == doctest::Approx(6.2 - 2 * M_PI));
}
