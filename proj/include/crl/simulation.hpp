#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "crl/filters.hpp"
#include "crl/models.hpp"
#include "crl/noise.hpp"

namespace crl {

/// Closed-form nominal trajectory of one agent: circular horizontal motion
/// with sinusoidal altitude and intermittent heading turns (each lasting 2 s
/// at constant rate 0.5 * psi_turn).
struct TrajectorySpec {
  double x_c{0}, y_c{0}, z_c{0};
  double radius{0}, radius_z{0};
  double freq{0}, freq_z{0};
  double phase{0};
  double psi0{0};
  double psi_turn{0};
  std::vector<double> turn_times;

  void validate(double horizon) const;
};

struct NominalState {
  Eigen::Vector3d position;
  double heading;
  Eigen::Vector3d body_velocity;  // world velocity rotated by R(psi)^T
  double heading_rate;
};

NominalState nominal_state(const TrajectorySpec& spec, double t);

enum class CovarianceMode { Smart, Inattentive };
enum class TruthIntegration { World, Relative };

const char* covariance_mode_name(CovarianceMode mode);

struct UncertaintyLevel {
  double psi_bar_e{M_PI / 18.0};
  double r_bar_e{0.5};
};

/// Uncertainty level pair q -> (q*pi/18, q/2).
UncertaintyLevel uncertainty_level(int q);

struct NoiseConfig {
  HeavyTailSpec uwb;
  DelaySpec delay{DelaySpec::worst_case(0.01, 15.0)};
  ActuatorNoiseSpec actuator;
};

/// Measurement covariance entries per Smart/Inattentive initialization.
struct MeasurementVariances {
  double smart_direct{0.08};
  double smart_indirect{0.09};
  double inattentive{0.01};
};

struct RunConfig {
  double horizon{30.0};
  double Ts{0.01};
  std::vector<TrajectorySpec> swarm;
  std::vector<std::vector<int>> adjacency;  // empty => all-to-all
  int host{0};                              // 0-based agent index
  SchemeKind scheme{SchemeKind::fCRL};
  FilterKind filter{FilterKind::EKF};
  Kernel kernel;
  FixedPointConfig fixed_point;
  CovarianceMode covariance_mode{CovarianceMode::Smart};
  NoiseConfig noise;
  MeasurementVariances variances;
  UncertaintyLevel uncertainty;
  double p_drop{0.0};
  TruthIntegration truth_integration{TruthIntegration::World};
  bool record_convergence{false};  // per-step Theorem-style diagnostics (costly)
  uint64_t seed{1};

  int steps() const;  // horizon / Ts, throws unless integral
  NeighborSet neighbor_set() const;
  MeasurementLayout layout() const;
  std::vector<std::vector<int>> effective_adjacency() const;
  void validate() const;
  std::string method() const;  // e.g. "fCRL(MLVC)"
};

/// The 5-agent swarm, noise, and filter settings of the reference setup.
RunConfig paper_default_config();

std::string config_to_json(const RunConfig& config);
RunConfig config_from_json(const std::string& text);
RunConfig load_config(const std::string& path);  // "paper-default" resolves to the preset
void save_config(const RunConfig& config, const std::string& path);
std::string config_digest(const RunConfig& config);

/// World-frame truth of one agent sampled at every step (size steps + 1).
struct AgentPath {
  std::vector<Eigen::Vector3d> position;
  std::vector<double> heading;
};

/// Euler-integrates every agent's global pose driven by nominal input plus
/// actuator noise.
std::vector<AgentPath> propagate_truth(const RunConfig& config, Rng& rng);

/// Relative state of the host's neighbors at step k, derived from world truth.
AugmentedState relative_truth(const std::vector<AgentPath>& paths, int host,
                              const std::vector<int>& neighbors, int k);

/// Nominal (noise-free) augmented input at time t.
AugmentedInput nominal_inputs(const std::vector<TrajectorySpec>& swarm, int host,
                              const std::vector<int>& neighbors, double t);

/// Nominal relative states at time t (for observability sweeps).
AugmentedState nominal_relative_state(const std::vector<TrajectorySpec>& swarm, int host,
                                      const std::vector<int>& neighbors, double t);

enum class MeasurementKind { Direct, Indirect };

/// One noisy range: direct adds the UWB error, indirect additionally the
/// delay-induced error.
double measure(double true_distance, MeasurementKind kind, const NoiseConfig& noise,
               Rng& rng);

/// Same as measure() with the rejection envelope cached across calls.
class MeasurementSampler {
 public:
  explicit MeasurementSampler(const NoiseConfig& noise);
  double direct(double true_distance, Rng& rng) const;
  double indirect(double true_distance, Rng& rng) const;

 private:
  HeavyTailSpec uwb_;
  DelaySampler delay_;
};

/// Truth plus per-block offsets: heading ~ U(-psi_bar, psi_bar), position of
/// exact length r_bar with random direction; P(0) = I kron P_e.
FilterBelief initialize_belief(const AugmentedState& truth0,
                               const UncertaintyLevel& level, Rng& rng);

/// Measurement covariance per scheme and initialization mode.
Eigen::MatrixXd build_R(SchemeKind scheme, CovarianceMode mode,
                        const MeasurementLayout& layout,
                        const MeasurementVariances& variances);

/// Process noise covariance per scheme (input-space).
Eigen::MatrixXd build_Q(SchemeKind scheme, const ActuatorNoiseSpec& actuator,
                        int n_neighbors);

/// Per-step message from one neighbor: its control input and its transmitted
/// distances (direct host range; for fCRL also stored neighbor ranges).
struct InformationPackage {
  int sender{0};
  ControlInput u;
  struct RangeEntry {
    int agent_a{0};
    int agent_b{0};
    double distance{0.0};
  };
  std::vector<RangeEntry> y;
};

struct StepRecord {
  double t{0.0};
  AugmentedState truth;
  AugmentedState estimate;
  double p_trace{0.0};
  int fp_iters{0};
  int64_t step_time_ns{0};
  // filled for coupled kernel runs when RunConfig::record_convergence is set
  std::optional<ConvergenceReport> convergence;
};

struct TrialRecord {
  std::vector<StepRecord> steps;
  uint64_t seed{0};
  UncertaintyLevel level;
  std::string digest;
  SchemeKind scheme{SchemeKind::fCRL};
  FilterKind filter{FilterKind::EKF};
  KernelKind kernel{KernelKind::LogVersoria};
  CovarianceMode mode{CovarianceMode::Smart};
  std::vector<int> neighbor_ids;
  bool failed{false};
  std::string failure;

  std::string method() const;
};

/// One full closed-loop trial: truth propagation, package scheduling, and the
/// configured estimator at every step.
TrialRecord run_trial(const RunConfig& config);

/// trials_per_level trials per uncertainty level, each with a unique seed.
/// Failed trials are recorded and the run continues.
std::vector<TrialRecord> run_monte_carlo(const RunConfig& base,
                                         const std::vector<UncertaintyLevel>& levels,
                                         int trials_per_level, uint64_t base_seed,
                                         int n_threads = 1);

void write_trial_csv(const TrialRecord& record, std::ostream& os);

}  // namespace crl
