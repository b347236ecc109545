#include "crl/geometry.hpp"

#include <cmath>
#include <stdexcept>

namespace crl {

double wrap_angle(double a) {
  double w = std::remainder(a, 2.0 * M_PI);  // lands in [-pi, pi]
  if (w <= -M_PI) w = M_PI;
  return w;
}

EulerAngles::EulerAngles(double phi_, double theta_, double psi_)
    : phi(phi_), theta(theta_), psi(wrap_angle(psi_)) {}

RelativeState::RelativeState(double psi, const Eigen::Vector3d& p)
    : psi_ij(wrap_angle(psi)), p_ij(p) {}

Eigen::Vector4d RelativeState::to_vector() const {
  Eigen::Vector4d x;
  x << psi_ij, p_ij;
  return x;
}

RelativeState RelativeState::from_vector(const Eigen::Vector4d& x) {
  return RelativeState(x(0), x.tail<3>());
}

Eigen::Vector4d ControlInput::to_vector() const {
  Eigen::Vector4d u;
  u << psi_dot, v;
  return u;
}

ControlInput ControlInput::from_vector(const Eigen::Vector4d& u) {
  ControlInput c;
  c.psi_dot = u(0);
  c.v = u.tail<3>();
  return c;
}

Eigen::Matrix3d skew_selection() {
  Eigen::Matrix3d s;
  s << 0, -1, 0,
       1,  0, 0,
       0,  0, 0;
  return s;
}

Eigen::Matrix3d vertical_selector() {
  Eigen::Matrix3d e = Eigen::Matrix3d::Zero();
  e(2, 2) = 1.0;
  return e;
}

Eigen::Matrix3d rotation_body_to_horizontal(const EulerAngles& angles) {
  if (std::abs(angles.theta) >= M_PI / 2.0) {
    throw std::domain_error("rotation_body_to_horizontal: |theta| >= pi/2");
  }
  const double sp = std::sin(angles.phi), cp = std::cos(angles.phi);
  const double st = std::sin(angles.theta), ct = std::cos(angles.theta);
  Eigen::Matrix3d r;
  r << ct, st * sp, st * cp,
       0,  cp,      -sp,
      -st, ct * sp, ct * cp;
  return r;
}

Eigen::Vector3d euler_rates_from_body_rates(const EulerAngles& angles,
                                            const Eigen::Vector3d& omega) {
  const double ct = std::cos(angles.theta);
  if (std::abs(ct) < 1e-12 || std::abs(angles.theta) >= M_PI / 2.0) {
    throw std::domain_error("euler_rates_from_body_rates: cos(theta) singularity");
  }
  const double sp = std::sin(angles.phi), cp = std::cos(angles.phi);
  const double tt = std::tan(angles.theta);
  Eigen::Matrix3d m;
  m << 1, sp * tt, cp * tt,
       0, cp,      -sp,
       0, sp / ct, cp / ct;
  return m * omega;
}

Eigen::Matrix3d planar_rotation(double psi) {
  const double s = std::sin(psi), c = std::cos(psi);
  Eigen::Matrix3d r;
  r << c, -s, 0,
       s,  c, 0,
       0,  0, 1;
  return r;
}

Eigen::Vector4d pair_dynamics(const RelativeState& state, const PairInput& input) {
  Eigen::Vector4d dx;
  dx(0) = input.neighbor.psi_dot - input.host.psi_dot;
  dx.tail<3>() = planar_rotation(state.psi_ij) * input.neighbor.v - input.host.v -
                 input.host.psi_dot * (skew_selection() * state.p_ij);
  return dx;
}

}  // namespace crl
