#include "crl/filters.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace crl {

namespace {

// Weights below this are treated as "measurement effectively ignored"; keeps
// the weighted covariances finite when a kernel underflows on a huge outlier.
constexpr double kWeightFloor = 1e-12;

Eigen::MatrixXd symmetrize(const Eigen::MatrixXd& m) {
  return 0.5 * (m + m.transpose());
}

Eigen::MatrixXd cholesky_lower(const Eigen::MatrixXd& m, const char* what) {
  Eigen::LLT<Eigen::MatrixXd> llt(symmetrize(m));
  if (llt.info() != Eigen::Success) {
    throw std::runtime_error(std::string(what) + ": Cholesky failure (matrix not PD)");
  }
  return llt.matrixL();
}

}  // namespace

const char* kernel_name(KernelKind kind) {
  switch (kind) {
    case KernelKind::LogVersoria: return "log-versoria";
    case KernelKind::Versoria: return "versoria";
    case KernelKind::Gaussian: return "gaussian";
  }
  return "?";
}

FilterBelief ekf_predict(const FilterBelief& belief, const Eigen::VectorXd& u,
                         const Eigen::MatrixXd& Q, double Ts, const ProcessModel& model) {
  const int n = static_cast<int>(belief.x.size());
  const Eigen::MatrixXd A =
      Eigen::MatrixXd::Identity(n, n) + Ts * model.dg_dx(belief.x, u);
  const Eigen::MatrixXd B = Ts * model.dg_du(belief.x, u);
  FilterBelief prior;
  prior.x = belief.x + Ts * model.g(belief.x, u);
  if (model.wrap_state) model.wrap_state(prior.x);
  prior.P = symmetrize(A * belief.P * A.transpose() + B * Q * B.transpose());
  return prior;
}

FilterBelief ekf_update(const FilterBelief& prior, const Eigen::VectorXd& y,
                        const Eigen::MatrixXd& R, const MeasurementModel& model) {
  const Eigen::MatrixXd H = model.H(prior.x);
  const Eigen::MatrixXd PHt = prior.P * H.transpose();
  const Eigen::MatrixXd S = symmetrize(H * PHt + R);
  Eigen::LLT<Eigen::MatrixXd> llt(S);
  if (llt.info() != Eigen::Success) {
    throw std::runtime_error("ekf_update: innovation covariance not invertible");
  }
  const Eigen::MatrixXd K = llt.solve(PHt.transpose()).transpose();
  const int n = static_cast<int>(prior.x.size());
  const Eigen::MatrixXd IKH = Eigen::MatrixXd::Identity(n, n) - K * H;
  FilterBelief post;
  post.x = prior.x + K * (y - model.h(prior.x));
  post.P = symmetrize(IKH * prior.P * IKH.transpose() + K * R * K.transpose());
  return post;
}

double kernel_value(const Kernel& kernel, double e) {
  if (!(kernel.tau > 0.0)) throw std::invalid_argument("kernel_value: tau must be > 0");
  const double e2 = e * e;
  switch (kernel.kind) {
    case KernelKind::LogVersoria:
      return kernel.tau / (kernel.tau + std::log1p(e2));
    case KernelKind::Versoria:
      return kernel.tau / (kernel.tau + e2);
    case KernelKind::Gaussian:
      return std::exp(-e2 / kernel.tau);
  }
  return 0.0;
}

double kernel_weight(const Kernel& kernel, double e) {
  const double v = kernel_value(kernel, e);
  switch (kernel.kind) {
    case KernelKind::LogVersoria:
      return v * v / (1.0 + e * e);
    case KernelKind::Versoria:
      return v * v;
    case KernelKind::Gaussian:
      return v;
  }
  return 0.0;
}

Eigen::MatrixXd kernel_weighted_gain(const Eigen::MatrixXd& M_x,
                                     const Eigen::MatrixXd& M_y,
                                     const Eigen::MatrixXd& H,
                                     const Eigen::VectorXd& weights_x,
                                     const Eigen::VectorXd& weights_y) {
  const Eigen::MatrixXd P_L =
      M_x * weights_x.cwiseMax(kWeightFloor).cwiseInverse().asDiagonal() * M_x.transpose();
  const Eigen::MatrixXd R_L =
      M_y * weights_y.cwiseMax(kWeightFloor).cwiseInverse().asDiagonal() * M_y.transpose();
  const Eigen::MatrixXd PHt = P_L * H.transpose();
  const Eigen::MatrixXd S = symmetrize(H * PHt + R_L);
  Eigen::LLT<Eigen::MatrixXd> llt(S);
  if (llt.info() != Eigen::Success) {
    throw std::runtime_error("kernel_weighted_gain: weighted innovation covariance not PD");
  }
  return llt.solve(PHt.transpose()).transpose();
}

NormalizedRegression build_normalized_regression(const FilterBelief& prior,
                                                 const Eigen::VectorXd& y,
                                                 const Eigen::MatrixXd& R,
                                                 const MeasurementModel& model) {
  const int n = static_cast<int>(prior.x.size());
  const int p = static_cast<int>(y.size());

  NormalizedRegression reg;
  reg.H = model.H(prior.x);
  reg.innovation = y - model.h(prior.x);
  reg.M_x = cholesky_lower(prior.P, "mlvc_update(P-)");
  reg.M_y = cholesky_lower(R, "mlvc_update(R)");

  Eigen::VectorXd z(n + p);
  z.head(n) = prior.x;
  z.tail(p) = reg.innovation + reg.H * prior.x;
  reg.z_star.resize(n + p);
  reg.z_star.head(n) = reg.M_x.triangularView<Eigen::Lower>().solve(z.head(n));
  reg.z_star.tail(p) = reg.M_y.triangularView<Eigen::Lower>().solve(z.tail(p));
  reg.F_star.resize(n + p, n);
  reg.F_star.topRows(n) = reg.M_x.triangularView<Eigen::Lower>().solve(
      Eigen::MatrixXd::Identity(n, n));
  reg.F_star.bottomRows(p) = reg.M_y.triangularView<Eigen::Lower>().solve(reg.H);
  return reg;
}

std::pair<FilterBelief, UpdateDiagnostics> mlvc_update(const FilterBelief& prior,
                                                       const Eigen::VectorXd& y,
                                                       const Eigen::MatrixXd& R,
                                                       const MeasurementModel& model,
                                                       const Kernel& kernel,
                                                       const FixedPointConfig& config) {
  if (config.max_iters < 1) {
    throw std::invalid_argument("mlvc_update: max_iters must be >= 1");
  }
  const int n = static_cast<int>(prior.x.size());
  const int p = static_cast<int>(y.size());

  const NormalizedRegression reg = build_normalized_regression(prior, y, R, model);
  const Eigen::MatrixXd& H = reg.H;
  const Eigen::VectorXd& innovation = reg.innovation;

  Eigen::VectorXd x_t = prior.x;
  Eigen::MatrixXd K;
  UpdateDiagnostics diag;
  diag.converged = false;
  for (int t = 0; t < config.max_iters; ++t) {
    const Eigen::VectorXd e = reg.z_star - reg.F_star * x_t;
    Eigen::VectorXd w_x(n), w_y(p);
    for (int i = 0; i < n; ++i) w_x(i) = kernel_weight(kernel, e(i));
    for (int i = 0; i < p; ++i) w_y(i) = kernel_weight(kernel, e(n + i));
    K = kernel_weighted_gain(reg.M_x, reg.M_y, H, w_x, w_y);
    const Eigen::VectorXd x_next = prior.x + K * innovation;
    diag.iterations = t + 1;
    // incremental-percentile termination with floored denominators
    double r2 = 0.0;
    for (int i = 0; i < n; ++i) {
      const double denom =
          std::copysign(std::max(std::abs(x_t(i)), config.denom_floor), x_t(i));
      const double q = (x_next(i) - x_t(i)) / denom;
      r2 += q * q;
    }
    x_t = x_next;
    if (std::sqrt(r2) <= config.epsilon) {
      diag.converged = true;
      break;
    }
  }

  const Eigen::MatrixXd IKH = Eigen::MatrixXd::Identity(n, n) - K * H;
  FilterBelief post;
  post.x = x_t;
  post.P = symmetrize(IKH * prior.P * IKH.transpose() + K * R * K.transpose());
  return {post, diag};
}

namespace {

double lv_weight_tilde(double x, double tau) {
  const double l = tau / (tau + std::log1p(x * x));
  return l * l / (1.0 + x * x);
}

// lambda_min of sum_i w_i r_i r_i' over the rows r_i of F*.
double weighted_gram_lambda_min(const Eigen::MatrixXd& F_star,
                                const Eigen::VectorXd& w) {
  const Eigen::MatrixXd gram =
      F_star.transpose() * w.asDiagonal() * F_star;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(0.5 * (gram + gram.transpose()));
  return eig.eigenvalues().minCoeff();
}

}  // namespace

ConvergenceReport convergence_check(const Eigen::VectorXd& z_star,
                                    const Eigen::MatrixXd& F_star, double tau,
                                    double rho, double zeta) {
  if (!(zeta > 0.0 && zeta < 1.0)) {
    throw std::invalid_argument("convergence_check: zeta must be in (0,1)");
  }
  const int D = static_cast<int>(F_star.rows());
  const int n = static_cast<int>(F_star.cols());
  if (z_star.size() != D) {
    throw std::invalid_argument("convergence_check: z*/F* row mismatch");
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(F_star);
  if (svd.singularValues()(n - 1) <= 1e-12 * svd.singularValues()(0)) {
    throw std::runtime_error("convergence_check: F* is rank deficient");
  }

  const double sqrt_n = std::sqrt(static_cast<double>(n));
  Eigen::VectorXd row_l1(D), e_bar(D);
  double numerator = 0.0;
  for (int i = 0; i < D; ++i) {
    row_l1(i) = F_star.row(i).lpNorm<1>();
    e_bar(i) = std::abs(z_star(i)) + rho * row_l1(i);
    numerator += std::abs(z_star(i)) * row_l1(i);
  }
  numerator *= sqrt_n;

  ConvergenceReport report;
  report.rho = rho;
  report.zeta = zeta;
  report.xi =
      numerator / weighted_gram_lambda_min(F_star, Eigen::VectorXd::Ones(D));

  auto upsilon = [&](double t) {
    Eigen::VectorXd w(D);
    for (int i = 0; i < D; ++i) w(i) = lv_weight_tilde(e_bar(i), t);
    return numerator / weighted_gram_lambda_min(F_star, w);
  };
  double phi_numerator = 0.0;
  for (int i = 0; i < D; ++i) {
    const double sigma_l1 = row_l1(i) * F_star.row(i).lpNorm<Eigen::Infinity>();
    phi_numerator += e_bar(i) * row_l1(i) *
                     (rho * sigma_l1 + std::abs(z_star(i)) * F_star.row(i).norm());
  }
  phi_numerator *= 4.0 * sqrt_n;
  auto phi = [&](double t) {
    Eigen::VectorXd w(D);
    for (int i = 0; i < D; ++i) w(i) = lv_weight_tilde(e_bar(i), t);
    return phi_numerator / (t * t * weighted_gram_lambda_min(F_star, w));
  };

  // Both maps are decreasing in tau; bisect on a wide bracket.
  auto solve_decreasing = [](auto f, double target) {
    double lo = 1e-8, hi = 1e12;
    if (f(lo) <= target) return lo;
    if (f(hi) > target) return std::numeric_limits<double>::infinity();
    for (int it = 0; it < 200; ++it) {
      const double mid = std::sqrt(lo * hi);
      (f(mid) > target ? lo : hi) = mid;
    }
    return hi;
  };
  report.tau_star = solve_decreasing(upsilon, rho);
  report.tau_dagger = solve_decreasing(phi, zeta);
  report.satisfied = rho > report.xi && std::isfinite(report.tau_star) &&
                     std::isfinite(report.tau_dagger) &&
                     tau >= std::max(report.tau_star, report.tau_dagger);
  return report;
}

long long flop_estimate(SchemeKind scheme, FilterKind filter, int n_i, int t_m) {
  if (n_i < 1 || t_m < 0) {
    throw std::invalid_argument("flop_estimate: require n_i >= 1, t_m >= 0");
  }
  long long c1 = 0, c2 = 0, c3 = 0;
  const long long T = t_m;
  if (filter == FilterKind::EKF) {
    switch (scheme) {
      case SchemeKind::nCRL: c1 = 888; break;
      case SchemeKind::hCRL: c1 = 187; c2 = 289; c3 = 335; break;
      case SchemeKind::fCRL: c1 = 224; c2 = 309; c3 = 597; break;
    }
  } else {
    switch (scheme) {
      case SchemeKind::nCRL: c1 = 975 + 250 * T; break;
      case SchemeKind::hCRL: c1 = 189 + 56 * T; c2 = 309 + 5 * T; c3 = 415 + 195 * T; break;
      case SchemeKind::fCRL: c1 = 223 + 72 * T; c2 = 325 + 21 * T; c3 = 569 + 401 * T; break;
    }
  }
  const long long N = n_i;
  return c1 * N + c2 * N * N + c3 * N * N * N;
}

}  // namespace crl
