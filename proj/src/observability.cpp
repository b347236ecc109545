#include "crl/observability.hpp"

#include <cmath>
#include <stdexcept>

namespace crl {

namespace {
constexpr double kDegenerateDistance = 1e-9;

// w' S for S the skew-selection matrix: [w_y, -w_x, 0].
Eigen::RowVector3d times_skew(const Eigen::Vector3d& w) {
  return Eigen::RowVector3d(w.y(), -w.x(), 0.0);
}
}  // namespace

const char* motion_case_name(MotionCase c) {
  switch (c) {
    case MotionCase::ParallelMotion: return "parallel";
    case MotionCase::AlignedRelativeMotion: return "aligned";
    case MotionCase::HorizontalNoVertical: return "horizontal-no-vertical";
    case MotionCase::HorizontalSameHeadingRate: return "horizontal-same-rate";
    case MotionCase::Generic: return "generic";
  }
  return "?";
}

ObservabilityBlock pairwise_ob_matrix(const RelativeState& state, const PairInput& input) {
  const double scale = state.p_ij.norm();
  if (scale < kDegenerateDistance) {
    throw std::runtime_error("pairwise_ob_matrix: colliding agents");
  }
  const Eigen::Matrix3d R = planar_rotation(state.psi_ij);
  const Eigen::Vector3d v_i = input.host.v;
  const Eigen::Vector3d v_j = input.neighbor.v;
  const double psi_dot_i = input.host.psi_dot;
  const double psi_dot_j = input.neighbor.psi_dot;
  const double psi_dot_ij = psi_dot_j - psi_dot_i;

  ObservabilityBlock block;
  block.scale = scale;
  block.rows.row(0) = state.p_ij.transpose();
  block.rows.row(1) = (R * v_j - v_i).transpose();
  const Eigen::Vector3d w = psi_dot_j * (R * v_j) - psi_dot_i * v_i;
  block.rows.row(2) =
      psi_dot_ij * Eigen::RowVector3d(0.0, 0.0, v_j.z()) - times_skew(w);
  return block;
}

ObservabilityBlock indirect_ob_block(const RelativeState& state_a,
                                     const RelativeState& state_b,
                                     const PairInput& input_a,
                                     const PairInput& input_b) {
  const Eigen::Vector3d diff = state_a.p_ij - state_b.p_ij;
  const double scale = diff.norm();
  if (scale < kDegenerateDistance) {
    throw std::runtime_error("indirect_ob_block: coincident neighbors");
  }
  const Eigen::Matrix3d R_a = planar_rotation(state_a.psi_ij);
  const Eigen::Matrix3d R_b = planar_rotation(state_b.psi_ij);
  const Eigen::Vector3d v_a = input_a.neighbor.v;
  const Eigen::Vector3d v_b = input_b.neighbor.v;
  const double rate_a = input_a.neighbor.psi_dot - input_a.host.psi_dot;
  const double rate_b = input_b.neighbor.psi_dot - input_b.host.psi_dot;

  ObservabilityBlock block;
  block.scale = scale;
  block.rows.row(0) = diff.transpose();
  block.rows.row(1) = (R_a * v_a - R_b * v_b).transpose();
  const Eigen::Vector3d ve = rate_a * v_a - rate_b * v_b;
  const Eigen::Vector3d w = rate_a * (R_a * v_a) - rate_b * (R_b * v_b);
  block.rows.row(2) = Eigen::RowVector3d(0.0, 0.0, ve.z()) - times_skew(w);
  return block;
}

Eigen::MatrixXd crl_ob_matrix(const AugmentedState& states, const AugmentedInput& inputs,
                              SchemeKind scheme, const MeasurementLayout& layout,
                              int max_order) {
  if (max_order < 0 || max_order > 2) {
    throw std::invalid_argument("crl_ob_matrix: max_order must be 0..2");
  }
  const int n = states.size();
  const int rows_per = max_order + 1;
  const bool with_indirect = scheme == SchemeKind::fCRL;
  const int total_rows = rows_per * (n + (with_indirect ? layout.p_id() : 0));
  Eigen::MatrixXd ob = Eigen::MatrixXd::Zero(total_rows, 3 * n);

  for (int a = 0; a < n; ++a) {
    const ObservabilityBlock block = pairwise_ob_matrix(states.blocks[a], inputs.pair(a));
    ob.block(rows_per * a, 3 * a, rows_per, 3) =
        block.rows.topRows(rows_per) / block.scale;
  }
  if (with_indirect) {
    for (int m = 0; m < layout.p_id(); ++m) {
      const auto& pair = layout.indirect[m];
      const ObservabilityBlock block =
          indirect_ob_block(states.blocks.at(pair.alpha), states.blocks.at(pair.beta),
                            inputs.pair(pair.alpha), inputs.pair(pair.beta));
      const int r0 = rows_per * (n + m);
      ob.block(r0, 3 * pair.alpha, rows_per, 3) =
          block.rows.topRows(rows_per) / block.scale;
      ob.block(r0, 3 * pair.beta, rows_per, 3) =
          -block.rows.topRows(rows_per) / block.scale;
    }
  }
  return ob;
}

MotionLabel classify_motion(const RelativeState& state, const PairInput& input,
                            double tol) {
  const Eigen::Vector3d v_ij =
      planar_rotation(state.psi_ij) * input.neighbor.v - input.host.v;
  const bool parallel = v_ij.norm() <= tol;
  const bool aligned =
      !parallel &&
      v_ij.cross(state.p_ij).norm() <= tol * v_ij.norm() * state.p_ij.norm();
  const bool same_plane = std::abs(state.p_ij.z()) <= tol;
  const bool no_vertical = same_plane && std::abs(input.host.v.z()) <= tol &&
                           std::abs(input.neighbor.v.z()) <= tol;
  const bool same_rate =
      same_plane && std::abs(input.host.psi_dot - input.neighbor.psi_dot) <= tol;

  MotionLabel label;
  const int matches = static_cast<int>(parallel) + static_cast<int>(aligned) +
                      static_cast<int>(no_vertical) + static_cast<int>(same_rate);
  label.multiple = matches > 1;
  if (parallel) {
    label.primary = MotionCase::ParallelMotion;
  } else if (aligned) {
    label.primary = MotionCase::AlignedRelativeMotion;
  } else if (no_vertical) {
    label.primary = MotionCase::HorizontalNoVertical;
  } else if (same_rate) {
    label.primary = MotionCase::HorizontalSameHeadingRate;
  } else {
    label.primary = MotionCase::Generic;
  }
  return label;
}

RankInfo numeric_rank(const Eigen::MatrixXd& m, double tol) {
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(m);
  const Eigen::VectorXd& sv = svd.singularValues();
  RankInfo info;
  if (sv.size() == 0) return info;
  info.sigma_max = sv(0);
  info.sigma_min = sv(sv.size() - 1);
  const double threshold = tol * info.sigma_max;
  for (int i = 0; i < sv.size(); ++i) {
    if (sv(i) > threshold) ++info.rank;
  }
  return info;
}

std::vector<RankInfo> rank_along_trajectory(const std::vector<AugmentedState>& trajectory,
                                            const std::vector<AugmentedInput>& inputs,
                                            SchemeKind scheme,
                                            const MeasurementLayout& layout,
                                            double tol) {
  if (trajectory.size() != inputs.size()) {
    throw std::invalid_argument("rank_along_trajectory: trajectory/inputs misaligned");
  }
  std::vector<RankInfo> out;
  out.reserve(trajectory.size());
  for (size_t k = 0; k < trajectory.size(); ++k) {
    out.push_back(numeric_rank(crl_ob_matrix(trajectory[k], inputs[k], scheme, layout), tol));
  }
  return out;
}

}  // namespace crl
