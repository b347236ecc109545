#include <doctest.h>

#include <random>

#include "crl/observability.hpp"
#include "crl/simulation.hpp"

using namespace crl;

namespace {

std::mt19937_64 make_rng(uint64_t seed) { return std::mt19937_64(seed); }

PairInput input_from(double psi_dot_i, const Eigen::Vector3d& v_i, double psi_dot_j,
                     const Eigen::Vector3d& v_j) {
  PairInput u;
  u.host.psi_dot = psi_dot_i;
  u.host.v = v_i;
  u.neighbor.psi_dot = psi_dot_j;
  u.neighbor.v = v_j;
  return u;
}

PairInput random_generic_input(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> real(0.3, 2.0);
  std::uniform_real_distribution<double> sign(-1.0, 1.0);
  auto val = [&]() { return real(rng) * (sign(rng) < 0 ? -1.0 : 1.0); };
  return input_from(val(), Eigen::Vector3d(val(), val(), val()), 0.5 * val(),
                    Eigen::Vector3d(val(), val(), val()));
}

RelativeState random_generic_state(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> real(0.4, 2.5);
  std::uniform_real_distribution<double> angle(-3.0, 3.0);
  std::uniform_real_distribution<double> sign(-1.0, 1.0);
  auto val = [&]() { return real(rng) * (sign(rng) < 0 ? -1.0 : 1.0); };
  return RelativeState(angle(rng), Eigen::Vector3d(val(), val(), val()));
}

}  // namespace

TEST_CASE("pairwise_ob_matrix examples") {
  SUBCASE("parallel motion with zero heading rates has rank 1") {
    const RelativeState x(0.7, Eigen::Vector3d(1, 2, 0.5));
    const Eigen::Vector3d v_j(1.0, -0.5, 0.2);
    const PairInput u = input_from(0.0, planar_rotation(x.psi_ij) * v_j, 0.0, v_j);
    const ObservabilityBlock block = pairwise_ob_matrix(x, u);
    CHECK(block.rows.row(1).norm() < 1e-12);
    CHECK(block.rows.row(2).norm() < 1e-12);
    CHECK(numeric_rank(block.rows).rank == 1);
  }
  SUBCASE("aligned relative motion has rank 1") {
    const RelativeState x(0.0, Eigen::Vector3d(1, 0, 0));
    const PairInput u = input_from(0.0, Eigen::Vector3d(-2, 0, 0), 0.0,
                                   Eigen::Vector3d::Zero());
    const ObservabilityBlock block = pairwise_ob_matrix(x, u);
    CHECK(numeric_rank(block.rows).rank == 1);
  }
  SUBCASE("generic vertical-rich motion has rank 3") {
    auto rng = make_rng(1);
    for (int trial = 0; trial < 50; ++trial) {
      const RelativeState x = random_generic_state(rng);
      const PairInput u = random_generic_input(rng);
      const RankInfo info = numeric_rank(pairwise_ob_matrix(x, u).rows, 1e-9);
      CHECK(info.rank == 3);
      CHECK(info.sigma_min > 1e-6);
    }
  }
  SUBCASE("colliding agents raise") {
    const RelativeState x(0.0, Eigen::Vector3d::Zero());
    CHECK_THROWS(pairwise_ob_matrix(x, PairInput{}));
  }
}

TEST_CASE("indirect_ob_block examples") {
  auto rng = make_rng(2);
  SUBCASE("coincident neighbors raise") {
    const RelativeState a(0.1, Eigen::Vector3d(1, 1, 1));
    const RelativeState b(0.7, Eigen::Vector3d(1, 1, 1));
    CHECK_THROWS(indirect_ob_block(a, b, PairInput{}, PairInput{}));
  }
  SUBCASE("joint parallel motion with distinct scaled velocity keeps row 3") {
    // both pairs parallel (v_ij = 0 each) but different relative heading rates
    const RelativeState a(0.3, Eigen::Vector3d(1, 0, 0));
    const RelativeState b(-0.5, Eigen::Vector3d(0, 2, 0.5));
    const Eigen::Vector3d v_host(0.8, -0.1, 0.4);
    const PairInput ua = input_from(
        0.2, v_host, 0.9, planar_rotation(a.psi_ij).transpose() * v_host);
    const PairInput ub = input_from(
        0.2, v_host, -0.6, planar_rotation(b.psi_ij).transpose() * v_host);
    CHECK((planar_rotation(a.psi_ij) * ua.neighbor.v - ua.host.v).norm() < 1e-12);
    CHECK((planar_rotation(b.psi_ij) * ub.neighbor.v - ub.host.v).norm() < 1e-12);
    const ObservabilityBlock block = indirect_ob_block(a, b, ua, ub);
    CHECK(block.rows.row(2).norm() > 1e-6);
  }
  SUBCASE("generic configuration has rank 3") {
    for (int trial = 0; trial < 50; ++trial) {
      const RelativeState a = random_generic_state(rng);
      RelativeState b = random_generic_state(rng);
      if ((a.p_ij - b.p_ij).norm() < 0.3) b.p_ij += Eigen::Vector3d(1, 1, -1);
      const ObservabilityBlock block =
          indirect_ob_block(a, b, random_generic_input(rng), random_generic_input(rng));
      CHECK(numeric_rank(block.rows, 1e-9).rank == 3);
    }
  }
}

TEST_CASE("crl_ob_matrix examples") {
  auto rng = make_rng(3);
  SUBCASE("hCRL block-diagonal stack of generic pairs is full rank") {
    for (int trial = 0; trial < 20; ++trial) {
      AugmentedState s;
      AugmentedInput in;
      in.host = random_generic_input(rng).host;
      for (int a = 0; a < 2; ++a) {
        s.blocks.push_back(random_generic_state(rng));
        in.neighbors.push_back(random_generic_input(rng).neighbor);
      }
      const MeasurementLayout layout = MeasurementLayout::all_to_all(2);
      const Eigen::MatrixXd ob = crl_ob_matrix(s, in, SchemeKind::hCRL, layout);
      CHECK(ob.rows() == 6);
      CHECK(ob.cols() == 6);
      CHECK(numeric_rank(ob).rank == 6);
    }
  }
  SUBCASE("zeroth-order stack always carries the rotation gauge: rank 3N - 3") {
    // rotating the whole constellation about the host leaves every range
    // unchanged, so the distance differentials alone have a 3-dim kernel
    for (int trial = 0; trial < 20; ++trial) {
      AugmentedState s;
      AugmentedInput in;
      in.host = random_generic_input(rng).host;
      for (int a = 0; a < 5; ++a) {
        s.blocks.push_back(random_generic_state(rng));
        in.neighbors.push_back(random_generic_input(rng).neighbor);
      }
      const MeasurementLayout layout = MeasurementLayout::all_to_all(5);
      const Eigen::MatrixXd ob = crl_ob_matrix(s, in, SchemeKind::fCRL, layout, 0);
      CHECK(ob.rows() == 15);
      CHECK(numeric_rank(ob).rank == 12);
      const Eigen::Vector3d omega(0.3, -1.1, 0.7);
      Eigen::VectorXd gauge(15);
      for (int a = 0; a < 5; ++a) {
        gauge.segment<3>(3 * a) = omega.cross(s.blocks[a].p_ij);
      }
      CHECK((ob * gauge).cwiseAbs().maxCoeff() < 1e-12);
    }
  }
  SUBCASE("indirect rows restore rank for a parallel pair in the 3-agent tuple") {
    for (int trial = 0; trial < 20; ++trial) {
      AugmentedState s;
      AugmentedInput in;
      // pair (i, j1) in parallel motion
      const RelativeState x1 = random_generic_state(rng);
      const Eigen::Vector3d v1 = random_generic_input(rng).neighbor.v;
      in.host.psi_dot = 0.0;
      in.host.v = planar_rotation(x1.psi_ij) * v1;
      s.blocks.push_back(x1);
      in.neighbors.push_back(ControlInput{0.0, v1});
      // pair (i, j2) generic
      s.blocks.push_back(random_generic_state(rng));
      in.neighbors.push_back(random_generic_input(rng).neighbor);

      const MeasurementLayout layout = MeasurementLayout::all_to_all(2);
      const int rank_without =
          numeric_rank(crl_ob_matrix(s, in, SchemeKind::hCRL, layout)).rank;
      const int rank_with =
          numeric_rank(crl_ob_matrix(s, in, SchemeKind::fCRL, layout)).rank;
      CHECK(rank_without <= 4);
      CHECK(rank_with == 6);
    }
  }
}

TEST_CASE("classify_motion examples") {
  const double tol = 1e-9;
  SUBCASE("identical velocities with zero relative heading") {
    const RelativeState x(0.0, Eigen::Vector3d(1, 0, 1));
    const Eigen::Vector3d v(0.5, 0.2, -0.1);
    const MotionLabel label = classify_motion(x, input_from(0.1, v, 0.1, v), tol);
    CHECK(label.primary == MotionCase::ParallelMotion);
  }
  SUBCASE("relative velocity collinear with relative position") {
    const RelativeState x(0.0, Eigen::Vector3d(1, 0, 0));
    const PairInput u =
        input_from(0.0, Eigen::Vector3d(-3, 0, 0), 0.1, Eigen::Vector3d::Zero());
    CHECK(classify_motion(x, u, tol).primary == MotionCase::AlignedRelativeMotion);
  }
  SUBCASE("horizontal plane without vertical velocity hits the predicted deficiency") {
    const RelativeState x(0.0, Eigen::Vector3d(1, 0.5, 0));
    const PairInput u =
        input_from(0.3, Eigen::Vector3d(0, -1, 0), 0.8, Eigen::Vector3d(0, 1, 0));
    const MotionLabel label = classify_motion(x, u, tol);
    CHECK(label.primary == MotionCase::HorizontalNoVertical);
    const ObservabilityBlock block = pairwise_ob_matrix(x, u);
    CHECK(block.rows.col(2).norm() < 1e-9);
    CHECK(numeric_rank(block.rows, 1e-9).rank <= 2);
  }
  SUBCASE("horizontal plane with matched heading rates") {
    const RelativeState x(0.4, Eigen::Vector3d(1, -1, 0));
    const Eigen::Vector3d v_j(0.5, 1.0, 0.7);
    PairInput u = input_from(0.6, Eigen::Vector3d(1, 0, 0), 0.6, v_j);
    u.host.v.z() = v_j.z();  // co-climbing keeps the pair in its horizontal plane
    const MotionLabel label = classify_motion(x, u, tol);
    CHECK(label.primary == MotionCase::HorizontalSameHeadingRate);
    const ObservabilityBlock block = pairwise_ob_matrix(x, u);
    CHECK(block.rows.col(2).norm() < 1e-9);
  }
  SUBCASE("generic motion") {
    auto rng = make_rng(4);
    const MotionLabel label =
        classify_motion(random_generic_state(rng), random_generic_input(rng), tol);
    CHECK(label.primary == MotionCase::Generic);
    CHECK_FALSE(label.multiple);
  }
  SUBCASE("simultaneous cases carry the multi flag") {
    // parallel (v_ij = 0) and in-plane with equal (zero) heading rates
    const RelativeState x(0.0, Eigen::Vector3d(2, 1, 0));
    const Eigen::Vector3d v(0.3, 0.4, 0.0);
    const MotionLabel label = classify_motion(x, input_from(0.0, v, 0.0, v), tol);
    CHECK(label.primary == MotionCase::ParallelMotion);
    CHECK(label.multiple);
  }
}

TEST_CASE("paper-predicted deficiencies for exactly constructed cases") {
  auto rng = make_rng(5);
  std::uniform_real_distribution<double> real(0.4, 1.5);
  for (int trial = 0; trial < 100; ++trial) {
    // case 1: parallel motion -> row 2 ~ 0
    {
      const RelativeState x = random_generic_state(rng);
      const Eigen::Vector3d v_j(real(rng), real(rng), real(rng));
      const PairInput u =
          input_from(real(rng), planar_rotation(x.psi_ij) * v_j, real(rng), v_j);
      CHECK(pairwise_ob_matrix(x, u).rows.row(1).norm() < 1e-9);
    }
    // case 2: aligned -> rows 1,2 linearly dependent
    {
      RelativeState x = random_generic_state(rng);
      const double k = real(rng);
      const Eigen::Vector3d v_j(real(rng), real(rng), real(rng));
      const Eigen::Vector3d v_ij_target = k * x.p_ij;
      const PairInput u = input_from(
          real(rng), planar_rotation(x.psi_ij) * v_j - v_ij_target, real(rng), v_j);
      const ObservabilityBlock block = pairwise_ob_matrix(x, u);
      const Eigen::Vector3d r0 = block.rows.row(0).transpose();
      const Eigen::Vector3d r1 = block.rows.row(1).transpose();
      const Eigen::Vector3d cross = r0.cross(r1);
      CHECK(cross.norm() <
            1e-9 * block.rows.row(0).norm() * std::max(1.0, block.rows.row(1).norm()));
    }
    // cases 3 and 4: third column ~ 0
    {
      RelativeState x = random_generic_state(rng);
      x.p_ij.z() = 0.0;
      PairInput u = random_generic_input(rng);
      u.host.v.z() = 0.0;
      u.neighbor.v.z() = 0.0;
      CHECK(pairwise_ob_matrix(x, u).rows.col(2).norm() < 1e-9);

      PairInput u4 = random_generic_input(rng);
      u4.neighbor.psi_dot = u4.host.psi_dot;
      u4.neighbor.v.z() = u4.host.v.z();
      CHECK(pairwise_ob_matrix(x, u4).rows.col(2).norm() < 1e-9);
    }
  }
}

TEST_CASE("row-scale invariance and block rank additivity") {
  auto rng = make_rng(6);
  for (int trial = 0; trial < 30; ++trial) {
    const RelativeState x = random_generic_state(rng);
    const PairInput u = random_generic_input(rng);
    const ObservabilityBlock block = pairwise_ob_matrix(x, u);
    CHECK(numeric_rank(block.rows).rank ==
          numeric_rank(block.scale * block.rows).rank);

    AugmentedState s;
    AugmentedInput in;
    in.host = u.host;
    for (int a = 0; a < 3; ++a) {
      s.blocks.push_back(random_generic_state(rng));
      in.neighbors.push_back(random_generic_input(rng).neighbor);
    }
    const MeasurementLayout layout = MeasurementLayout::all_to_all(3);
    const Eigen::MatrixXd ob = crl_ob_matrix(s, in, SchemeKind::hCRL, layout);
    int sum = 0;
    for (int a = 0; a < 3; ++a) {
      sum += numeric_rank(pairwise_ob_matrix(s.blocks[a], in.pair(a)).rows).rank;
    }
    CHECK(numeric_rank(ob).rank == sum);
  }
}

TEST_CASE("rank along the nominal trajectories") {
  const RunConfig config = paper_default_config();
  const NeighborSet nbrs = config.neighbor_set();
  const MeasurementLayout layout = config.layout();
  std::vector<AugmentedState> states;
  std::vector<AugmentedInput> inputs;
  for (int s = 0; s < 100; ++s) {
    const double t = config.horizon * s / 99.0;
    states.push_back(
        nominal_relative_state(config.swarm, config.host, nbrs.neighbors, t));
    inputs.push_back(nominal_inputs(config.swarm, config.host, nbrs.neighbors, t));
  }
  SUBCASE("fCRL is fully observable at every sample") {
    const auto ranks = rank_along_trajectory(states, inputs, SchemeKind::fCRL, layout);
    for (const auto& info : ranks) {
      CHECK(info.rank == 12);
    }
  }
  SUBCASE("a single pair reaches rank 3 exactly while someone turns") {
    // the third pairwise row vanishes identically when both heading rates are
    // zero, so full rank is confined to the turn windows (~40% of the horizon)
    std::vector<AugmentedState> pair_states;
    std::vector<AugmentedInput> pair_inputs;
    std::vector<bool> turning;
    for (int s = 0; s < 100; ++s) {
      AugmentedState st;
      st.blocks = {states[s].blocks[0]};
      AugmentedInput in;
      in.host = inputs[s].host;
      in.neighbors = {inputs[s].neighbors[0]};
      pair_states.push_back(st);
      pair_inputs.push_back(in);
      turning.push_back(in.host.psi_dot != 0.0 || in.neighbors[0].psi_dot != 0.0);
    }
    const MeasurementLayout single = MeasurementLayout::all_to_all(1);
    const auto ranks =
        rank_along_trajectory(pair_states, pair_inputs, SchemeKind::hCRL, single);
    int full = 0, full_while_turning = 0, turn_samples = 0;
    for (size_t s = 0; s < ranks.size(); ++s) {
      full += ranks[s].rank == 3 ? 1 : 0;
      if (turning[s]) {
        ++turn_samples;
        full_while_turning += ranks[s].rank == 3 ? 1 : 0;
      } else {
        CHECK(ranks[s].rank <= 2);
      }
    }
    CHECK(turn_samples > 30);
    CHECK(full == full_while_turning);
    CHECK(full_while_turning > turn_samples - 3);
  }
  SUBCASE("persistent parallel formation stays rank deficient") {
    // same-velocity constant-offset pair at every sample
    const MeasurementLayout single = MeasurementLayout::all_to_all(1);
    std::vector<AugmentedState> sts;
    std::vector<AugmentedInput> ins;
    for (int s = 0; s < 50; ++s) {
      RelativeState x(0.0, Eigen::Vector3d(1.5, 0.5, 0.2));
      AugmentedState st;
      st.blocks = {x};
      AugmentedInput in;
      in.host.v = Eigen::Vector3d(std::sin(0.1 * s), std::cos(0.1 * s), 0.3);
      in.neighbors = {in.host};
      sts.push_back(st);
      ins.push_back(in);
    }
    for (const auto& info : rank_along_trajectory(sts, ins, SchemeKind::hCRL, single)) {
      CHECK(info.rank <= 1);
    }
  }
}
