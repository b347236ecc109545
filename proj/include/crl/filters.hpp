#pragma once

#include <cstdint>
#include <utility>

#include <Eigen/Dense>

#include "crl/models.hpp"

namespace crl {

/// Estimated augmented state and its covariance.
struct FilterBelief {
  Eigen::VectorXd x;
  Eigen::MatrixXd P;
};

enum class KernelKind { LogVersoria, Versoria, Gaussian };

const char* kernel_name(KernelKind kind);

/// Shift-invariant kernel with bandwidth tau > 0.
struct Kernel {
  KernelKind kind{KernelKind::LogVersoria};
  double tau{5.0};
};

/// Termination settings of the fixed-point posterior iteration.
struct FixedPointConfig {
  double epsilon{1e-4};
  int max_iters{100};
  double denom_floor{1e-6};
};

/// Numeric evaluation of the Theorem-1 sufficient conditions.
struct ConvergenceReport {
  double xi{0.0};
  double rho{0.0};
  double tau_star{0.0};    // root of Upsilon(tau) = rho (+inf when none exists)
  double tau_dagger{0.0};  // root of Phi(tau; rho) = zeta
  double zeta{0.0};
  bool satisfied{false};
};

struct UpdateDiagnostics {
  int iterations{0};
  bool converged{true};
};

enum class FilterKind { EKF, KernelEKF };

/// Prediction step: x- = x+ + Ts g(x+, u, 0), P- = A P+ A' + B Q B'.
FilterBelief ekf_predict(const FilterBelief& belief, const Eigen::VectorXd& u,
                         const Eigen::MatrixXd& Q, double Ts, const ProcessModel& model);

/// Standard correction with the Joseph-form covariance update.
FilterBelief ekf_update(const FilterBelief& prior, const Eigen::VectorXd& y,
                        const Eigen::MatrixXd& R, const MeasurementModel& model);

/// Kernel value at normalized error e; 1 at e = 0.
double kernel_value(const Kernel& kernel, double e);

/// Fixed-point weight derived from the kernel's stationarity condition
/// (up to a constant factor that cancels in the gain).
double kernel_weight(const Kernel& kernel, double e);

/// Gain of the kernel-weighted update given Cholesky factors of P- and R and
/// the per-entry weights. Exposed for the gain scaling-invariance property.
Eigen::MatrixXd kernel_weighted_gain(const Eigen::MatrixXd& M_x,
                                     const Eigen::MatrixXd& M_y,
                                     const Eigen::MatrixXd& H,
                                     const Eigen::VectorXd& weights_x,
                                     const Eigen::VectorXd& weights_y);

/// Normalized augmented regression of the kernel-induced correction:
/// z* = M^-1 [x-; y - h(x-) + H x-], F* = M^-1 [I; H] with M the Cholesky
/// factors of P- and R.
struct NormalizedRegression {
  Eigen::VectorXd z_star;
  Eigen::MatrixXd F_star;
  Eigen::MatrixXd M_x;
  Eigen::MatrixXd M_y;
  Eigen::MatrixXd H;
  Eigen::VectorXd innovation;
};

NormalizedRegression build_normalized_regression(const FilterBelief& prior,
                                                 const Eigen::VectorXd& y,
                                                 const Eigen::MatrixXd& R,
                                                 const MeasurementModel& model);

/// Maximum-correntropy correction: fixed-point iteration on the normalized
/// augmented regression, final covariance by the Joseph form with the last
/// gain. Returns the posterior and the number of iterations used.
std::pair<FilterBelief, UpdateDiagnostics> mlvc_update(const FilterBelief& prior,
                                                       const Eigen::VectorXd& y,
                                                       const Eigen::MatrixXd& R,
                                                       const MeasurementModel& model,
                                                       const Kernel& kernel,
                                                       const FixedPointConfig& config);

/// Evaluates the sufficient convergence conditions of the fixed-point
/// iteration on the normalized regression (z*, F*) for the Logarithmic-
/// Versoria kernel: satisfied iff rho > xi and tau >= max(tau*, tau+).
ConvergenceReport convergence_check(const Eigen::VectorXd& z_star,
                                    const Eigen::MatrixXd& F_star, double tau,
                                    double rho, double zeta);

/// Per-step floating-point operation count model, polynomial in the number of
/// neighbors with tabulated coefficients; T_m is the mean fixed-point
/// iteration count (ignored for the plain EKF).
long long flop_estimate(SchemeKind scheme, FilterKind filter, int n_i, int t_m);

}  // namespace crl
