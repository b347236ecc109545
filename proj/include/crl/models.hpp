#pragma once

#include <functional>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "crl/geometry.hpp"

namespace crl {

/// Host agent id plus its sorted neighbor ids.
struct NeighborSet {
  int host_id{0};
  std::vector<int> neighbors;

  int size() const { return static_cast<int>(neighbors.size()); }
  void validate() const;  // throws std::invalid_argument
};

/// Stacked relative states of all host-neighbor pairs, in neighbor order.
struct AugmentedState {
  std::vector<RelativeState> blocks;

  int size() const { return static_cast<int>(blocks.size()); }
  int dim() const { return 4 * size(); }
  Eigen::VectorXd to_vector() const;
  static AugmentedState from_vector(const Eigen::VectorXd& x);
};

/// Host input followed by one input per neighbor, in neighbor order.
struct AugmentedInput {
  ControlInput host;
  std::vector<ControlInput> neighbors;

  int dim() const { return 4 * (1 + static_cast<int>(neighbors.size())); }
  Eigen::VectorXd to_vector() const;

  PairInput pair(int alpha) const { return PairInput{host, neighbors.at(alpha)}; }
};

enum class SchemeKind { fCRL, hCRL, nCRL };

const char* scheme_name(SchemeKind scheme);

/// One effective indirect measurement couples neighbor positions alpha < beta.
struct IndirectPair {
  int alpha{0};
  int beta{0};
};

/// Layout of the per-step measurement stack: N_i direct entries followed by
/// the effective indirect entries (one per unordered mutual-neighbor pair).
struct MeasurementLayout {
  int n_neighbors{0};
  std::vector<IndirectPair> indirect;

  int p_id() const { return static_cast<int>(indirect.size()); }
  int rows(SchemeKind scheme) const;

  /// Every neighbor pair measured (all-to-all swarm): p_id = C(N_i, 2).
  static MeasurementLayout all_to_all(int n_neighbors);
  /// Effective pairs from an adjacency relation: (alpha, beta) kept when the
  /// two neighbors are neighbors of each other.
  static MeasurementLayout from_topology(const NeighborSet& host_set,
                                         const std::vector<std::vector<int>>& adjacency);
};

/// Measured ranges of one estimation step. Entries may be NaN when a package
/// was dropped; stacked(scheme) skips them and reports the surviving rows.
struct MeasurementStack {
  Eigen::VectorXd direct;    // host-neighbor ranges, one per block
  Eigen::VectorXd indirect;  // neighbor-neighbor ranges per layout entry
  MeasurementLayout layout;

  /// Stacked vector in layout order plus the indices of the kept rows.
  std::pair<Eigen::VectorXd, std::vector<int>> stacked(SchemeKind scheme) const;
};

/// Blockwise relative dynamics of the augmented system.
Eigen::VectorXd augmented_dynamics(const AugmentedState& state,
                                   const AugmentedInput& input);

/// Host-neighbor distances, one per block. Throws on degenerate geometry.
Eigen::VectorXd direct_measurement(const AugmentedState& state);

/// Neighbor-neighbor distances per layout entry. Throws when a measured pair
/// coincides.
Eigen::VectorXd indirect_measurement(const AugmentedState& state,
                                     const MeasurementLayout& layout);

/// Stacked measurement prediction for a scheme (direct, plus indirect for fCRL).
Eigen::VectorXd measurement_stack(const AugmentedState& state, SchemeKind scheme,
                                  const MeasurementLayout& layout);

/// Jacobian of the stacked measurement. Heading columns are structurally zero.
Eigen::MatrixXd measurement_jacobian(const AugmentedState& state, SchemeKind scheme,
                                     const MeasurementLayout& layout);

/// Euler-discretized process Jacobians A = I + Ts dg/dx, B = Ts dg/du.
std::pair<Eigen::MatrixXd, Eigen::MatrixXd> process_jacobians(
    const AugmentedState& state, const AugmentedInput& input, double Ts);

/// One Euler step of the augmented dynamics; headings re-wrapped.
AugmentedState discretize_step(const AugmentedState& state,
                               const AugmentedInput& input, double Ts);

/// Filter-facing process model (continuous-time vector field + Jacobians).
struct ProcessModel {
  int state_dim{0};
  int input_dim{0};
  std::function<Eigen::VectorXd(const Eigen::VectorXd&, const Eigen::VectorXd&)> g;
  std::function<Eigen::MatrixXd(const Eigen::VectorXd&, const Eigen::VectorXd&)> dg_dx;
  std::function<Eigen::MatrixXd(const Eigen::VectorXd&, const Eigen::VectorXd&)> dg_du;
  std::function<void(Eigen::VectorXd&)> wrap_state;  // may be empty
};

/// Filter-facing measurement model.
struct MeasurementModel {
  int dim{0};
  std::function<Eigen::VectorXd(const Eigen::VectorXd&)> h;
  std::function<Eigen::MatrixXd(const Eigen::VectorXd&)> H;
};

/// Augmented relative-motion process over n_neighbors blocks (n_neighbors = 1
/// gives the peer-to-peer model used by nCRL).
ProcessModel make_augmented_process(int n_neighbors);

/// Measurement model for a scheme over the given layout.
MeasurementModel make_crl_measurement(SchemeKind scheme, const MeasurementLayout& layout);

}  // namespace crl
