#pragma once

#include <vector>

#include <Eigen/Dense>

#include "crl/models.hpp"

namespace crl {

/// 3x3 row block of the observability matrix over one measured pair, with the
/// dropped positive scale factor kept alongside.
struct ObservabilityBlock {
  Eigen::Matrix3d rows;
  double scale{0.0};
};

enum class MotionCase {
  ParallelMotion,
  AlignedRelativeMotion,
  HorizontalNoVertical,
  HorizontalSameHeadingRate,
  Generic,
};

const char* motion_case_name(MotionCase c);

/// First matching case in enumeration order; `multiple` flags inputs that
/// satisfy more than one case simultaneously.
struct MotionLabel {
  MotionCase primary{MotionCase::Generic};
  bool multiple{false};
};

/// Zeroth/first/second-order rows of the direct-range observability matrix of
/// one pair. Throws on colliding agents.
ObservabilityBlock pairwise_ob_matrix(const RelativeState& state, const PairInput& input);

/// Partial observability rows contributed by the indirect range between two
/// neighbors (inputs carry the shared host in the `host` slot). Throws on
/// coincident neighbors.
ObservabilityBlock indirect_ob_block(const RelativeState& state_a,
                                     const RelativeState& state_b,
                                     const PairInput& input_a,
                                     const PairInput& input_b);

/// Stacked observability matrix over the 3*N_i position states. hCRL/nCRL:
/// block-diagonal direct blocks; fCRL adds the indirect row blocks. Rows up to
/// the given Lie-derivative order (0..2) are included per measurement.
Eigen::MatrixXd crl_ob_matrix(const AugmentedState& states, const AugmentedInput& inputs,
                              SchemeKind scheme, const MeasurementLayout& layout,
                              int max_order = 2);

/// Classifies the pair kinematics against the four unobservable motion cases.
MotionLabel classify_motion(const RelativeState& state, const PairInput& input,
                            double tol);

/// Numeric rank: singular values above tol * sigma_max count.
struct RankInfo {
  int rank{0};
  double sigma_min{0.0};
  double sigma_max{0.0};
};
RankInfo numeric_rank(const Eigen::MatrixXd& m, double tol = 1e-9);

/// Per-step numeric rank of the scheme's observability matrix along a
/// trajectory (states and inputs aligned).
std::vector<RankInfo> rank_along_trajectory(const std::vector<AugmentedState>& trajectory,
                                            const std::vector<AugmentedInput>& inputs,
                                            SchemeKind scheme,
                                            const MeasurementLayout& layout,
                                            double tol = 1e-9);

}  // namespace crl
