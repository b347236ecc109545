#include "crl/models.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace crl {

namespace {
constexpr double kDegenerateDistance = 1e-9;
}

void NeighborSet::validate() const {
  if (neighbors.empty()) {
    throw std::invalid_argument("NeighborSet: at least one neighbor required");
  }
  for (size_t i = 0; i < neighbors.size(); ++i) {
    if (neighbors[i] == host_id) {
      throw std::invalid_argument("NeighborSet: host cannot be its own neighbor");
    }
    if (i > 0 && neighbors[i] <= neighbors[i - 1]) {
      throw std::invalid_argument("NeighborSet: neighbors must be strictly increasing");
    }
  }
}

Eigen::VectorXd AugmentedState::to_vector() const {
  Eigen::VectorXd x(dim());
  for (int a = 0; a < size(); ++a) {
    x.segment<4>(4 * a) = blocks[a].to_vector();
  }
  return x;
}

AugmentedState AugmentedState::from_vector(const Eigen::VectorXd& x) {
  if (x.size() % 4 != 0) {
    throw std::invalid_argument("AugmentedState: dimension not a multiple of 4");
  }
  AugmentedState s;
  s.blocks.reserve(x.size() / 4);
  for (int a = 0; a < x.size() / 4; ++a) {
    s.blocks.push_back(RelativeState::from_vector(x.segment<4>(4 * a)));
  }
  return s;
}

Eigen::VectorXd AugmentedInput::to_vector() const {
  Eigen::VectorXd u(dim());
  u.segment<4>(0) = host.to_vector();
  for (size_t a = 0; a < neighbors.size(); ++a) {
    u.segment<4>(4 * (a + 1)) = neighbors[a].to_vector();
  }
  return u;
}

const char* scheme_name(SchemeKind scheme) {
  switch (scheme) {
    case SchemeKind::fCRL: return "fCRL";
    case SchemeKind::hCRL: return "hCRL";
    case SchemeKind::nCRL: return "nCRL";
  }
  return "?";
}

int MeasurementLayout::rows(SchemeKind scheme) const {
  return scheme == SchemeKind::fCRL ? n_neighbors + p_id() : n_neighbors;
}

MeasurementLayout MeasurementLayout::all_to_all(int n_neighbors) {
  MeasurementLayout layout;
  layout.n_neighbors = n_neighbors;
  for (int a = 0; a < n_neighbors; ++a) {
    for (int b = a + 1; b < n_neighbors; ++b) {
      layout.indirect.push_back({a, b});
    }
  }
  return layout;
}

MeasurementLayout MeasurementLayout::from_topology(
    const NeighborSet& host_set, const std::vector<std::vector<int>>& adjacency) {
  host_set.validate();
  MeasurementLayout layout;
  layout.n_neighbors = host_set.size();
  auto linked = [&adjacency](int id_a, int id_b) {
    const auto& nbrs = adjacency.at(id_a);
    return std::find(nbrs.begin(), nbrs.end(), id_b) != nbrs.end();
  };
  for (int a = 0; a < host_set.size(); ++a) {
    for (int b = a + 1; b < host_set.size(); ++b) {
      if (linked(host_set.neighbors[a], host_set.neighbors[b])) {
        layout.indirect.push_back({a, b});
      }
    }
  }
  return layout;
}

std::pair<Eigen::VectorXd, std::vector<int>> MeasurementStack::stacked(
    SchemeKind scheme) const {
  const int n = layout.n_neighbors;
  std::vector<int> kept;
  for (int a = 0; a < n; ++a) {
    if (!std::isnan(direct(a))) kept.push_back(a);
  }
  if (scheme == SchemeKind::fCRL) {
    for (int m = 0; m < layout.p_id(); ++m) {
      if (!std::isnan(indirect(m))) kept.push_back(n + m);
    }
  }
  Eigen::VectorXd y(kept.size());
  for (size_t i = 0; i < kept.size(); ++i) {
    y(i) = kept[i] < n ? direct(kept[i]) : indirect(kept[i] - n);
  }
  return {y, kept};
}

Eigen::VectorXd augmented_dynamics(const AugmentedState& state,
                                   const AugmentedInput& input) {
  if (state.size() != static_cast<int>(input.neighbors.size())) {
    throw std::invalid_argument("augmented_dynamics: state/input block mismatch");
  }
  Eigen::VectorXd dx(state.dim());
  for (int a = 0; a < state.size(); ++a) {
    dx.segment<4>(4 * a) = pair_dynamics(state.blocks[a], input.pair(a));
  }
  return dx;
}

Eigen::VectorXd direct_measurement(const AugmentedState& state) {
  Eigen::VectorXd y(state.size());
  for (int a = 0; a < state.size(); ++a) {
    const double d = state.blocks[a].p_ij.norm();
    if (d < kDegenerateDistance) {
      throw std::runtime_error("direct_measurement: degenerate geometry (zero range)");
    }
    y(a) = d;
  }
  return y;
}

Eigen::VectorXd indirect_measurement(const AugmentedState& state,
                                     const MeasurementLayout& layout) {
  Eigen::VectorXd y(layout.p_id());
  for (int m = 0; m < layout.p_id(); ++m) {
    const auto& pair = layout.indirect[m];
    const double d =
        (state.blocks.at(pair.alpha).p_ij - state.blocks.at(pair.beta).p_ij).norm();
    if (d < kDegenerateDistance) {
      throw std::runtime_error("indirect_measurement: coincident neighbors");
    }
    y(m) = d;
  }
  return y;
}

Eigen::VectorXd measurement_stack(const AugmentedState& state, SchemeKind scheme,
                                  const MeasurementLayout& layout) {
  if (scheme != SchemeKind::fCRL) return direct_measurement(state);
  Eigen::VectorXd y(layout.rows(scheme));
  y.head(state.size()) = direct_measurement(state);
  y.tail(layout.p_id()) = indirect_measurement(state, layout);
  return y;
}

Eigen::MatrixXd measurement_jacobian(const AugmentedState& state, SchemeKind scheme,
                                     const MeasurementLayout& layout) {
  const int n = state.size();
  const int rows = layout.rows(scheme);
  Eigen::MatrixXd H = Eigen::MatrixXd::Zero(rows, 4 * n);
  for (int a = 0; a < n; ++a) {
    const Eigen::Vector3d& p = state.blocks[a].p_ij;
    const double d = p.norm();
    if (d < kDegenerateDistance) {
      throw std::runtime_error("measurement_jacobian: degenerate geometry (zero range)");
    }
    H.block<1, 3>(a, 4 * a + 1) = p.transpose() / d;
  }
  if (scheme == SchemeKind::fCRL) {
    for (int m = 0; m < layout.p_id(); ++m) {
      const auto& pair = layout.indirect[m];
      const Eigen::Vector3d diff =
          state.blocks.at(pair.alpha).p_ij - state.blocks.at(pair.beta).p_ij;
      const double d = diff.norm();
      if (d < kDegenerateDistance) {
        throw std::runtime_error("measurement_jacobian: coincident neighbors");
      }
      H.block<1, 3>(n + m, 4 * pair.alpha + 1) = diff.transpose() / d;
      H.block<1, 3>(n + m, 4 * pair.beta + 1) = -diff.transpose() / d;
    }
  }
  return H;
}

std::pair<Eigen::MatrixXd, Eigen::MatrixXd> process_jacobians(
    const AugmentedState& state, const AugmentedInput& input, double Ts) {
  if (state.size() != static_cast<int>(input.neighbors.size())) {
    throw std::invalid_argument("process_jacobians: state/input block mismatch");
  }
  const int n = state.size();
  const Eigen::Matrix3d S = skew_selection();
  Eigen::MatrixXd A = Eigen::MatrixXd::Identity(4 * n, 4 * n);
  Eigen::MatrixXd B = Eigen::MatrixXd::Zero(4 * n, 4 * (n + 1));
  for (int a = 0; a < n; ++a) {
    const RelativeState& x = state.blocks[a];
    const Eigen::Matrix3d R = planar_rotation(x.psi_ij);
    // dg/dx block: d(p_dot)/d(psi) = S R v_j, d(p_dot)/dp = -psi_dot_i S
    A.block<3, 1>(4 * a + 1, 4 * a) += Ts * (S * R * input.neighbors[a].v);
    A.block<3, 3>(4 * a + 1, 4 * a + 1) += Ts * (-input.host.psi_dot * S);
    // host input columns
    B(4 * a, 0) = -Ts;
    B.block<3, 1>(4 * a + 1, 0) = -Ts * (S * x.p_ij);
    B.block<3, 3>(4 * a + 1, 1) = -Ts * Eigen::Matrix3d::Identity();
    // neighbor input columns
    B(4 * a, 4 * (a + 1)) = Ts;
    B.block<3, 3>(4 * a + 1, 4 * (a + 1) + 1) = Ts * R;
  }
  return {A, B};
}

AugmentedState discretize_step(const AugmentedState& state,
                               const AugmentedInput& input, double Ts) {
  if (Ts <= 0.0) {
    throw std::invalid_argument("discretize_step: Ts must be positive");
  }
  const Eigen::VectorXd next = state.to_vector() + Ts * augmented_dynamics(state, input);
  return AugmentedState::from_vector(next);  // from_vector re-wraps headings
}

ProcessModel make_augmented_process(int n_neighbors) {
  ProcessModel model;
  model.state_dim = 4 * n_neighbors;
  model.input_dim = 4 * (n_neighbors + 1);

  auto split_input = [n_neighbors](const Eigen::VectorXd& u) {
    AugmentedInput in;
    in.host = ControlInput::from_vector(u.segment<4>(0));
    in.neighbors.reserve(n_neighbors);
    for (int a = 0; a < n_neighbors; ++a) {
      in.neighbors.push_back(ControlInput::from_vector(u.segment<4>(4 * (a + 1))));
    }
    return in;
  };

  model.g = [split_input](const Eigen::VectorXd& x, const Eigen::VectorXd& u) {
    return augmented_dynamics(AugmentedState::from_vector(x), split_input(u));
  };
  model.dg_dx = [split_input](const Eigen::VectorXd& x, const Eigen::VectorXd& u) {
    // raw continuous-time Jacobian, recovered from the Ts = 1 discretization
    auto [A, B] = process_jacobians(AugmentedState::from_vector(x), split_input(u), 1.0);
    (void)B;
    return Eigen::MatrixXd(A - Eigen::MatrixXd::Identity(A.rows(), A.cols()));
  };
  model.dg_du = [split_input](const Eigen::VectorXd& x, const Eigen::VectorXd& u) {
    auto [A, B] = process_jacobians(AugmentedState::from_vector(x), split_input(u), 1.0);
    (void)A;
    return B;
  };
  model.wrap_state = [n_neighbors](Eigen::VectorXd& x) {
    for (int a = 0; a < n_neighbors; ++a) x(4 * a) = wrap_angle(x(4 * a));
  };
  return model;
}

MeasurementModel make_crl_measurement(SchemeKind scheme, const MeasurementLayout& layout) {
  MeasurementModel model;
  model.dim = layout.rows(scheme);
  model.h = [scheme, layout](const Eigen::VectorXd& x) {
    return measurement_stack(AugmentedState::from_vector(x), scheme, layout);
  };
  model.H = [scheme, layout](const Eigen::VectorXd& x) {
    return measurement_jacobian(AugmentedState::from_vector(x), scheme, layout);
  };
  return model;
}

}  // namespace crl
