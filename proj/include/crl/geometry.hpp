#pragma once

#include <Eigen/Dense>

namespace crl {

/// Wraps an angle to (-pi, pi].
double wrap_angle(double a);

/// Roll/pitch/yaw attitude. psi is wrapped to (-pi, pi] on construction.
struct EulerAngles {
  double phi{0.0};
  double theta{0.0};
  double psi{0.0};

  EulerAngles() = default;
  EulerAngles(double phi_, double theta_, double psi_);
};

/// State of one host-neighbor pair: relative heading and relative position
/// of the neighbor resolved in the host's horizontal frame.
struct RelativeState {
  double psi_ij{0.0};
  Eigen::Vector3d p_ij{Eigen::Vector3d::Zero()};

  RelativeState() = default;
  RelativeState(double psi, const Eigen::Vector3d& p);

  Eigen::Vector4d to_vector() const;
  static RelativeState from_vector(const Eigen::Vector4d& x);
};

/// Control input of a single agent: heading rate and body-frame velocity.
struct ControlInput {
  double psi_dot{0.0};
  Eigen::Vector3d v{Eigen::Vector3d::Zero()};

  Eigen::Vector4d to_vector() const;
  static ControlInput from_vector(const Eigen::Vector4d& u);
};

/// Stacked input of an agent pair (host first).
struct PairInput {
  ControlInput host;
  ControlInput neighbor;
};

/// Skew-selection matrix S (z-axis rotation generator).
Eigen::Matrix3d skew_selection();

/// Vertical selector E = diag{0,0,1}.
Eigen::Matrix3d vertical_selector();

/// Body-to-horizontal rotation R_Y(theta) R_X(phi).
/// Throws std::domain_error at |theta| >= pi/2.
Eigen::Matrix3d rotation_body_to_horizontal(const EulerAngles& angles);

/// Maps body angular rates to Euler-angle rates (phi_dot, theta_dot, psi_dot).
/// Throws std::domain_error at the cos(theta) = 0 singularity.
Eigen::Vector3d euler_rates_from_body_rates(const EulerAngles& angles,
                                            const Eigen::Vector3d& omega);

/// Yaw rotation about Z.
Eigen::Matrix3d planar_rotation(double psi);

/// Relative motion vector field of one pair:
/// [psi_dot_j - psi_dot_i; R(psi_ij) v_j - v_i - psi_dot_i S p_ij].
Eigen::Vector4d pair_dynamics(const RelativeState& state, const PairInput& input);

}  // namespace crl
