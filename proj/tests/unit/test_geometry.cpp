#include <doctest.h>

#include <random>

#include "crl/geometry.hpp"

using namespace crl;

namespace {
std::mt19937_64 make_rng(uint64_t seed) { return std::mt19937_64(seed); }
}  // namespace

TEST_CASE("wrap_angle lands in (-pi, pi]") {
  CHECK(wrap_angle(0.0) == doctest::Approx(0.0));
  CHECK(wrap_angle(M_PI) == doctest::Approx(M_PI));
  CHECK(wrap_angle(-M_PI) == doctest::Approx(M_PI));
  CHECK(wrap_angle(3 * M_PI) == doctest::Approx(M_PI));
  CHECK(wrap_angle(2 * M_PI + 0.25) == doctest::Approx(0.25));
  CHECK(wrap_angle(-7.5 * M_PI) == doctest::Approx(0.5 * M_PI));
}

TEST_CASE("rotation_body_to_horizontal examples") {
  CHECK(rotation_body_to_horizontal(EulerAngles(0, 0, 0))
            .isApprox(Eigen::Matrix3d::Identity(), 1e-15));

  Eigen::Matrix3d expected;
  expected << 1, 0, 0,
              0, 0, -1,
              0, 1, 0;
  CHECK(rotation_body_to_horizontal(EulerAngles(M_PI / 2, 0, 0)).isApprox(expected, 1e-12));

  CHECK_THROWS_AS(rotation_body_to_horizontal(EulerAngles(0, M_PI / 2, 0)),
                  std::domain_error);
}

TEST_CASE("rotation outputs are orthogonal with det +1") {
  auto rng = make_rng(7);
  std::uniform_real_distribution<double> angle(-1.5, 1.5);
  for (int i = 0; i < 200; ++i) {
    const Eigen::Matrix3d m =
        rotation_body_to_horizontal(EulerAngles(angle(rng), angle(rng), angle(rng)));
    CHECK((m * m.transpose() - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff() < 1e-12);
    CHECK(m.determinant() == doctest::Approx(1.0).epsilon(1e-12));

    const Eigen::Matrix3d r = planar_rotation(4.0 * angle(rng));
    CHECK((r * r.transpose() - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff() < 1e-12);
    CHECK(r.determinant() == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("euler_rates_from_body_rates examples") {
  const Eigen::Vector3d z(0, 0, 1);
  CHECK(euler_rates_from_body_rates(EulerAngles(0, 0, 0), z)
            .isApprox(Eigen::Vector3d(0, 0, 1), 1e-15));
  CHECK(euler_rates_from_body_rates(EulerAngles(M_PI / 2, 0, 0), z)
            .isApprox(Eigen::Vector3d(0, -1, 0), 1e-12));
  CHECK(euler_rates_from_body_rates(EulerAngles(0.3, 0.9, -1.2), Eigen::Vector3d::Zero())
            .norm() == 0.0);
  CHECK_THROWS_AS(
      euler_rates_from_body_rates(EulerAngles(0, M_PI / 2, 0), z), std::domain_error);
}

TEST_CASE("planar_rotation examples and group property") {
  CHECK(planar_rotation(0.0).isApprox(Eigen::Matrix3d::Identity(), 1e-15));
  CHECK((planar_rotation(M_PI / 2) * Eigen::Vector3d(1, 0, 0))
            .isApprox(Eigen::Vector3d(0, 1, 0), 1e-12));

  auto rng = make_rng(11);
  std::uniform_real_distribution<double> angle(-10, 10);
  for (int i = 0; i < 100; ++i) {
    const double a = angle(rng), b = angle(rng);
    CHECK((planar_rotation(a) * planar_rotation(b) - planar_rotation(a + b))
              .cwiseAbs()
              .maxCoeff() < 1e-12);
  }
}

TEST_CASE("pair_dynamics examples") {
  SUBCASE("parallel motion, zero heading rates") {
    RelativeState x(0.0, Eigen::Vector3d(1, 2, 3));
    PairInput u;
    u.host.v = Eigen::Vector3d(0.4, -0.2, 0.9);
    u.neighbor.v = u.host.v;
    CHECK(pair_dynamics(x, u).norm() == doctest::Approx(0.0));
  }
  SUBCASE("quarter-turn heading") {
    RelativeState x(M_PI / 2, Eigen::Vector3d(1, 0, 0));
    PairInput u;
    u.neighbor.v = Eigen::Vector3d(1, 0, 0);
    const Eigen::Vector4d dx = pair_dynamics(x, u);
    CHECK(dx.isApprox(Eigen::Vector4d(0, 0, 1, 0), 1e-12));
  }
  SUBCASE("host heading rate couples the position") {
    RelativeState x(0.0, Eigen::Vector3d(1, 0, 0));
    PairInput u;
    u.host.psi_dot = 1.0;
    const Eigen::Vector4d dx = pair_dynamics(x, u);
    CHECK(dx.isApprox(Eigen::Vector4d(-1, 0, -1, 0), 1e-12));
  }
}

TEST_CASE("pair_dynamics is linear in the input") {
  auto rng = make_rng(23);
  std::uniform_real_distribution<double> real(-3, 3);
  auto random_input = [&]() {
    PairInput u;
    u.host.psi_dot = real(rng);
    u.host.v = Eigen::Vector3d(real(rng), real(rng), real(rng));
    u.neighbor.psi_dot = real(rng);
    u.neighbor.v = Eigen::Vector3d(real(rng), real(rng), real(rng));
    return u;
  };
  for (int i = 0; i < 100; ++i) {
    const RelativeState x(real(rng), Eigen::Vector3d(real(rng), real(rng), real(rng)));
    const PairInput u1 = random_input();
    const PairInput u2 = random_input();
    const double a = real(rng), b = real(rng);
    PairInput mix;
    mix.host = ControlInput::from_vector(a * u1.host.to_vector() + b * u2.host.to_vector());
    mix.neighbor =
        ControlInput::from_vector(a * u1.neighbor.to_vector() + b * u2.neighbor.to_vector());
    const Eigen::Vector4d lhs = pair_dynamics(x, mix);
    const Eigen::Vector4d rhs = a * pair_dynamics(x, u1) + b * pair_dynamics(x, u2);
    CHECK((lhs - rhs).cwiseAbs().maxCoeff() < 1e-10);
  }
}

TEST_CASE("heading derivative does not depend on relative position") {
  auto rng = make_rng(31);
  std::uniform_real_distribution<double> real(-3, 3);
  for (int i = 0; i < 50; ++i) {
    PairInput u;
    u.host.psi_dot = real(rng);
    u.host.v = Eigen::Vector3d(real(rng), real(rng), real(rng));
    u.neighbor.psi_dot = real(rng);
    u.neighbor.v = Eigen::Vector3d(real(rng), real(rng), real(rng));
    const double psi = real(rng);
    const Eigen::Vector3d p(real(rng), real(rng), real(rng));
    const double base = pair_dynamics(RelativeState(psi, p), u)(0);
    for (int axis = 0; axis < 3; ++axis) {
      Eigen::Vector3d dp = p;
      dp(axis) += 1e-4;
      const double bumped = pair_dynamics(RelativeState(psi, dp), u)(0);
      CHECK(std::abs(bumped - base) == 0.0);
    }
  }
}
