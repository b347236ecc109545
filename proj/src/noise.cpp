#include "crl/noise.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace crl {

namespace {

double gaussian_pdf(double x, double mean, double sigma) {
  const double z = (x - mean) / sigma;
  return std::exp(-0.5 * z * z) / (sigma * std::sqrt(2.0 * M_PI));
}

double gamma_pdf(double x, double k, double rate) {
  if (x < 0.0) return 0.0;
  if (x == 0.0) return k < 1.0 ? std::numeric_limits<double>::infinity()
                               : (k == 1.0 ? rate : 0.0);
  return std::exp(k * std::log(rate) + (k - 1.0) * std::log(x) - rate * x -
                  std::lgamma(k));
}

}  // namespace

void HeavyTailSpec::validate() const {
  if (!(s_ht >= 0.0) || !(sigma > 0.0) || !(k_shape > 0.0) || !(rate > 0.0) ||
      !std::isfinite(mu)) {
    throw std::invalid_argument("HeavyTailSpec: invalid parameters");
  }
}

void DelaySpec::validate() const {
  if (!(eta_bar > 0.0) || !(v_bar > 0.0)) {
    throw std::invalid_argument("DelaySpec: eta_bar and v_bar must be positive");
  }
  const double rb = r_bar();
  if (!(d_ref >= rb / 3.0)) {
    throw std::invalid_argument("DelaySpec: d_ref below cap-approximation validity");
  }
  if (!(5.0 * d_ref * d_ref > rb * rb)) {
    throw std::invalid_argument("DelaySpec: normalization requires 5 d^2 > r_bar^2");
  }
}

DelaySpec DelaySpec::worst_case(double eta_bar, double v_bar) {
  DelaySpec s;
  s.eta_bar = eta_bar;
  s.v_bar = v_bar;
  s.d_ref = 3.0 * eta_bar * v_bar;
  return s;
}

Eigen::Matrix4d ActuatorNoiseSpec::input_covariance() const {
  Eigen::Vector4d d(sigma_psi * sigma_psi, sigma_v * sigma_v, sigma_v * sigma_v,
                    sigma_v * sigma_v);
  return d.asDiagonal();
}

void ActuatorNoiseSpec::validate() const {
  if (!(sigma_psi > 0.0) || !(sigma_v > 0.0)) {
    throw std::invalid_argument("ActuatorNoiseSpec: sigmas must be positive");
  }
}

double uwb_pdf(double nu, const HeavyTailSpec& spec) {
  const double w = 1.0 / (1.0 + spec.s_ht);
  double f = w * gaussian_pdf(nu, spec.s_ht * spec.mu, spec.sigma);
  if (spec.s_ht > 0.0) {
    f += (1.0 - w) * gamma_pdf(nu, spec.k_shape, spec.rate);
  }
  return f;
}

double uwb_sample(Rng& rng, const HeavyTailSpec& spec) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  if (unit(rng) < 1.0 / (1.0 + spec.s_ht)) {
    std::normal_distribution<double> gauss(spec.s_ht * spec.mu, spec.sigma);
    return gauss(rng);
  }
  std::gamma_distribution<double> gamma(spec.k_shape, 1.0 / spec.rate);
  return gamma(rng);
}

double delay_pdf(double nu_d, const DelaySpec& spec) {
  const double rb = spec.r_bar();
  if (nu_d < -rb || nu_d > rb) return 0.0;
  const double d = spec.d_ref;
  const double q = nu_d * nu_d + 2.0 * nu_d * d - rb * rb;
  const double cap = M_PI * (-(q * q) + 4.0 * d * d * rb * rb);
  return 15.0 / (16.0 * M_PI * rb * rb * rb * (5.0 * d * d - rb * rb)) * cap;
}

DelaySampler::DelaySampler(const DelaySpec& spec) : spec_(spec) {
  spec.validate();
  const double rb = spec.r_bar();
  // coarse grid for the PDF maximum, then local refinement
  const int n = 512;
  double best_x = 0.0, best_f = 0.0;
  for (int i = 0; i <= n; ++i) {
    const double x = -rb + 2.0 * rb * i / n;
    const double f = delay_pdf(x, spec);
    if (f > best_f) {
      best_f = f;
      best_x = x;
    }
  }
  double lo = std::max(-rb, best_x - 2.0 * rb / n);
  double hi = std::min(rb, best_x + 2.0 * rb / n);
  for (int it = 0; it < 64; ++it) {
    const double m1 = lo + (hi - lo) / 3.0;
    const double m2 = hi - (hi - lo) / 3.0;
    if (delay_pdf(m1, spec) < delay_pdf(m2, spec)) {
      lo = m1;
    } else {
      hi = m2;
    }
  }
  best_f = std::max(best_f, delay_pdf(0.5 * (lo + hi), spec));
  envelope_ = 1.05 * best_f;
}

double DelaySampler::operator()(Rng& rng) const {
  const double rb = spec_.r_bar();
  std::uniform_real_distribution<double> ux(-rb, rb);
  std::uniform_real_distribution<double> uy(0.0, envelope_);
  for (;;) {
    const double x = ux(rng);
    if (uy(rng) <= delay_pdf(x, spec_)) return x;
  }
}

double delay_sample(Rng& rng, const DelaySpec& spec) {
  return DelaySampler(spec)(rng);
}

Eigen::Vector4d actuator_sample(Rng& rng, const ActuatorNoiseSpec& spec) {
  std::normal_distribution<double> n01(0.0, 1.0);
  Eigen::Vector4d du;
  du(0) = spec.sigma_psi * n01(rng);
  du(1) = spec.sigma_v * n01(rng);
  du(2) = spec.sigma_v * n01(rng);
  du(3) = spec.sigma_v * n01(rng);
  return du;
}

}  // namespace crl
