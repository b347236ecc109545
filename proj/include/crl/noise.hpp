#pragma once

#include <cstdint>
#include <random>

#include <Eigen/Dense>

namespace crl {

using Rng = std::mt19937_64;

/// Parameters of the heavy-tailed UWB ranging noise mixture:
/// f(nu) = G(nu; s_ht*mu, sigma)/(1+s_ht) + s_ht/(1+s_ht) * Gamma(nu; k, rate).
struct HeavyTailSpec {
  double s_ht{0.2};
  double mu{0.1};
  double sigma{0.1};
  double k_shape{2.0};
  double rate{3.5};

  void validate() const;  // throws std::invalid_argument
};

/// Delay-induced indirect-range noise. The spherical-cap PDF is frozen at a
/// reference inter-neighbor distance d_ref (worst case 3*r_bar).
struct DelaySpec {
  double eta_bar{0.01};
  double v_bar{15.0};
  double d_ref{0.45};

  double r_bar() const { return eta_bar * v_bar; }
  void validate() const;

  static DelaySpec worst_case(double eta_bar, double v_bar);
};

/// Zero-mean Gaussian actuator noise on [psi_dot, v].
struct ActuatorNoiseSpec {
  double sigma_psi{0.4};
  double sigma_v{0.25};

  Eigen::Matrix4d input_covariance() const;  // Q_u
  void validate() const;
};

/// Mixture density of the UWB ranging error (1/m). The Gamma component is 0
/// for nu < 0.
double uwb_pdf(double nu, const HeavyTailSpec& spec);

/// Draws one UWB ranging error: Gaussian branch with probability 1/(1+s_ht),
/// Gamma branch otherwise.
double uwb_sample(Rng& rng, const HeavyTailSpec& spec);

/// Normalized spherical-cap density on [-r_bar, r_bar], 0 outside.
double delay_pdf(double nu_d, const DelaySpec& spec);

/// Rejection sampler for delay_pdf. Rebuilds its envelope per call; use
/// DelaySampler in hot loops.
double delay_sample(Rng& rng, const DelaySpec& spec);

/// Rejection sampler with a cached uniform envelope at 1.05x the PDF maximum
/// (coarse grid + local refinement).
class DelaySampler {
 public:
  explicit DelaySampler(const DelaySpec& spec);
  double operator()(Rng& rng) const;
  double envelope() const { return envelope_; }

 private:
  DelaySpec spec_;
  double envelope_;
};

/// Draws one actuator-noise vector [n_psi, n_vx, n_vy, n_vz].
Eigen::Vector4d actuator_sample(Rng& rng, const ActuatorNoiseSpec& spec);

}  // namespace crl
