#include "crl/simulation.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <thread>

#include <json.hpp>

namespace crl {

using nlohmann::json;

void TrajectorySpec::validate(double horizon) const {
  if (radius < 0 || radius_z < 0 || freq < 0 || freq_z < 0) {
    throw std::invalid_argument("TrajectorySpec: radii and frequencies must be >= 0");
  }
  for (size_t i = 0; i < turn_times.size(); ++i) {
    if (turn_times[i] < 0.0 || turn_times[i] + 2.0 > horizon) {
      throw std::invalid_argument("TrajectorySpec: turn window outside horizon");
    }
    if (i > 0 && turn_times[i] < turn_times[i - 1] + 2.0) {
      throw std::invalid_argument("TrajectorySpec: overlapping turn windows");
    }
  }
}

NominalState nominal_state(const TrajectorySpec& spec, double t) {
  const double wxy = 2.0 * M_PI * spec.freq;
  const double wz = 2.0 * M_PI * spec.freq_z;
  const double arg = wxy * t + spec.phase;

  NominalState ns;
  ns.position = Eigen::Vector3d(spec.x_c + spec.radius * std::cos(arg),
                                spec.y_c + spec.radius * std::sin(arg),
                                spec.z_c + spec.radius_z * std::sin(wz * t));
  const Eigen::Vector3d world_velocity(-spec.radius * wxy * std::sin(arg),
                                       spec.radius * wxy * std::cos(arg),
                                       spec.radius_z * wz * std::cos(wz * t));
  double heading = spec.psi0;
  double rate = 0.0;
  for (double t_i : spec.turn_times) {
    heading += 0.5 * spec.psi_turn * std::clamp(t - t_i, 0.0, 2.0);
    if (t >= t_i && t < t_i + 2.0) rate = 0.5 * spec.psi_turn;
  }
  ns.heading = wrap_angle(heading);
  ns.heading_rate = rate;
  ns.body_velocity = planar_rotation(ns.heading).transpose() * world_velocity;
  return ns;
}

const char* covariance_mode_name(CovarianceMode mode) {
  return mode == CovarianceMode::Smart ? "smart" : "inattentive";
}

UncertaintyLevel uncertainty_level(int q) {
  return UncertaintyLevel{q * M_PI / 18.0, q / 2.0};
}

int RunConfig::steps() const {
  const long long n = std::llround(horizon / Ts);
  if (n < 1 || std::abs(n * Ts - horizon) > 1e-9 * std::max(1.0, horizon)) {
    throw std::invalid_argument("RunConfig: horizon must be an integral multiple of Ts");
  }
  return static_cast<int>(n);
}

std::vector<std::vector<int>> RunConfig::effective_adjacency() const {
  if (!adjacency.empty()) return adjacency;
  std::vector<std::vector<int>> all(swarm.size());
  for (size_t i = 0; i < swarm.size(); ++i) {
    for (size_t j = 0; j < swarm.size(); ++j) {
      if (i != j) all[i].push_back(static_cast<int>(j));
    }
  }
  return all;
}

NeighborSet RunConfig::neighbor_set() const {
  NeighborSet set;
  set.host_id = host;
  set.neighbors = effective_adjacency().at(host);
  std::sort(set.neighbors.begin(), set.neighbors.end());
  set.validate();
  return set;
}

MeasurementLayout RunConfig::layout() const {
  return MeasurementLayout::from_topology(neighbor_set(), effective_adjacency());
}

void RunConfig::validate() const {
  if (swarm.size() < 2) throw std::invalid_argument("RunConfig: need at least 2 agents");
  if (host < 0 || host >= static_cast<int>(swarm.size())) {
    throw std::invalid_argument("RunConfig: host out of range");
  }
  if (!adjacency.empty() && adjacency.size() != swarm.size()) {
    throw std::invalid_argument("RunConfig: adjacency size mismatch");
  }
  (void)steps();
  for (const auto& spec : swarm) spec.validate(horizon);
  noise.uwb.validate();
  noise.delay.validate();
  noise.actuator.validate();
  if (!(uncertainty.psi_bar_e > 0.0) || !(uncertainty.r_bar_e > 0.0)) {
    throw std::invalid_argument("RunConfig: uncertainty level must be positive");
  }
  if (p_drop < 0.0 || p_drop >= 1.0) {
    throw std::invalid_argument("RunConfig: p_drop must be in [0, 1)");
  }
  if (filter == FilterKind::KernelEKF && !(kernel.tau > 0.0)) {
    throw std::invalid_argument("RunConfig: kernel bandwidth must be positive");
  }
  if (fixed_point.max_iters < 1) {
    throw std::invalid_argument("RunConfig: max_iters must be >= 1");
  }
  neighbor_set();
}

std::string RunConfig::method() const {
  std::string name = scheme_name(scheme);
  if (filter == FilterKind::KernelEKF) {
    switch (kernel.kind) {
      case KernelKind::LogVersoria: name += "(MLVC)"; break;
      case KernelKind::Versoria: name += "(MVC)"; break;
      case KernelKind::Gaussian: name += "(MGC)"; break;
    }
  }
  return name;
}

RunConfig paper_default_config() {
  RunConfig cfg;
  cfg.horizon = 30.0;
  cfg.Ts = 0.01;
  cfg.host = 0;
  cfg.scheme = SchemeKind::fCRL;
  cfg.filter = FilterKind::KernelEKF;
  cfg.kernel = Kernel{KernelKind::LogVersoria, 5.0};
  cfg.covariance_mode = CovarianceMode::Smart;
  cfg.uncertainty = uncertainty_level(1);
  cfg.noise.uwb = HeavyTailSpec{0.2, 0.1, 0.1, 2.0, 3.5};
  cfg.noise.delay = DelaySpec::worst_case(0.01, 15.0);
  cfg.noise.actuator = ActuatorNoiseSpec{0.4, 0.25};
  cfg.seed = 1;

  auto agent = [](double xc, double yc, double zc, double R, double Rz, double f,
                  double fz, double phase, double psi0, double psit,
                  std::vector<double> turns) {
    TrajectorySpec s;
    s.x_c = xc; s.y_c = yc; s.z_c = zc;
    s.radius = R; s.radius_z = Rz;
    s.freq = f; s.freq_z = fz;
    s.phase = phase; s.psi0 = psi0; s.psi_turn = psit;
    s.turn_times = std::move(turns);
    return s;
  };
  cfg.swarm = {
      agent(0, 0, 7, 1.0, 4.0, 0.3, 0.2, 0.0, 0.0, M_PI / 6, {3, 10, 20}),
      agent(2, 2, 8, 1.2, 4.5, 0.4, 0.4, M_PI / 4, 2 * M_PI / 5, M_PI / 6, {6, 12, 15}),
      agent(-2, 2, 9, 0.8, 6.0, 0.2, 0.3, 4 * M_PI / 3, 3 * M_PI / 5, -M_PI / 6, {4, 8, 11}),
      agent(-2, -2, 6, 1.3, 3.5, 0.5, 0.35, -4 * M_PI / 3, 4 * M_PI / 5, -M_PI / 6, {5, 9, 12}),
      agent(2, -2, 5, 0.7, 2.0, 0.1, 0.25, -M_PI / 4, M_PI / 5, M_PI / 6, {7, 11, 25}),
  };
  return cfg;
}

namespace {

SchemeKind scheme_from_string(const std::string& s) {
  if (s == "fcrl") return SchemeKind::fCRL;
  if (s == "hcrl") return SchemeKind::hCRL;
  if (s == "ncrl") return SchemeKind::nCRL;
  throw std::invalid_argument("unknown scheme: " + s);
}

KernelKind kernel_from_string(const std::string& s) {
  if (s == "log-versoria") return KernelKind::LogVersoria;
  if (s == "versoria") return KernelKind::Versoria;
  if (s == "gaussian") return KernelKind::Gaussian;
  throw std::invalid_argument("unknown kernel: " + s);
}

std::string lower_scheme(SchemeKind s) {
  switch (s) {
    case SchemeKind::fCRL: return "fcrl";
    case SchemeKind::hCRL: return "hcrl";
    case SchemeKind::nCRL: return "ncrl";
  }
  return "?";
}

}  // namespace

std::string config_to_json(const RunConfig& cfg) {
  json j;
  j["horizon"] = cfg.horizon;
  j["ts"] = cfg.Ts;
  j["host"] = cfg.host + 1;  // agents are 1-based in files
  j["scheme"] = lower_scheme(cfg.scheme);
  j["filter"] = cfg.filter == FilterKind::EKF ? "ekf" : "kernel-ekf";
  j["kernel"] = {{"kind", kernel_name(cfg.kernel.kind)}, {"tau", cfg.kernel.tau}};
  j["fixed_point"] = {{"epsilon", cfg.fixed_point.epsilon},
                      {"max_iters", cfg.fixed_point.max_iters},
                      {"denom_floor", cfg.fixed_point.denom_floor}};
  j["covariance_mode"] = covariance_mode_name(cfg.covariance_mode);
  j["uncertainty"] = {{"psi_bar_e", cfg.uncertainty.psi_bar_e},
                      {"r_bar_e", cfg.uncertainty.r_bar_e}};
  j["noise"] = {
      {"uwb",
       {{"s_ht", cfg.noise.uwb.s_ht},
        {"mu", cfg.noise.uwb.mu},
        {"sigma", cfg.noise.uwb.sigma},
        {"k", cfg.noise.uwb.k_shape},
        {"rate", cfg.noise.uwb.rate}}},
      {"delay",
       {{"eta_bar", cfg.noise.delay.eta_bar},
        {"v_bar", cfg.noise.delay.v_bar},
        {"d_ref", cfg.noise.delay.d_ref}}},
      {"actuator",
       {{"sigma_psi", cfg.noise.actuator.sigma_psi},
        {"sigma_v", cfg.noise.actuator.sigma_v}}}};
  j["measurement_variances"] = {{"smart_direct", cfg.variances.smart_direct},
                                {"smart_indirect", cfg.variances.smart_indirect},
                                {"inattentive", cfg.variances.inattentive}};
  j["p_drop"] = cfg.p_drop;
  j["truth_integration"] =
      cfg.truth_integration == TruthIntegration::World ? "world" : "relative";
  j["record_convergence"] = cfg.record_convergence;
  j["seed"] = cfg.seed;
  json swarm = json::array();
  for (const auto& s : cfg.swarm) {
    swarm.push_back({{"x_c", s.x_c},
                     {"y_c", s.y_c},
                     {"z_c", s.z_c},
                     {"radius", s.radius},
                     {"radius_z", s.radius_z},
                     {"freq", s.freq},
                     {"freq_z", s.freq_z},
                     {"phase", s.phase},
                     {"psi0", s.psi0},
                     {"psi_turn", s.psi_turn},
                     {"turn_times", s.turn_times}});
  }
  j["swarm"] = swarm;
  if (cfg.adjacency.empty()) {
    j["topology"] = "all-to-all";
  } else {
    json adj = json::array();
    for (const auto& nbrs : cfg.adjacency) {
      json row = json::array();
      for (int id : nbrs) row.push_back(id + 1);
      adj.push_back(row);
    }
    j["topology"] = adj;
  }
  return j.dump(2);
}

RunConfig config_from_json(const std::string& text) {
  const json j = json::parse(text);
  RunConfig cfg;
  cfg.horizon = j.value("horizon", cfg.horizon);
  cfg.Ts = j.value("ts", cfg.Ts);
  cfg.host = j.value("host", 1) - 1;
  cfg.scheme = scheme_from_string(j.value("scheme", "fcrl"));
  const std::string filter = j.value("filter", "ekf");
  if (filter == "ekf") {
    cfg.filter = FilterKind::EKF;
  } else if (filter == "kernel-ekf" || filter == "mlvc") {
    cfg.filter = FilterKind::KernelEKF;
  } else {
    throw std::invalid_argument("unknown filter: " + filter);
  }
  if (j.contains("kernel")) {
    cfg.kernel.kind = kernel_from_string(j["kernel"].value("kind", "log-versoria"));
    cfg.kernel.tau = j["kernel"].value("tau", 5.0);
  }
  if (j.contains("fixed_point")) {
    const auto& fp = j["fixed_point"];
    cfg.fixed_point.epsilon = fp.value("epsilon", cfg.fixed_point.epsilon);
    cfg.fixed_point.max_iters = fp.value("max_iters", cfg.fixed_point.max_iters);
    cfg.fixed_point.denom_floor = fp.value("denom_floor", cfg.fixed_point.denom_floor);
  }
  const std::string mode = j.value("covariance_mode", "smart");
  if (mode == "smart") {
    cfg.covariance_mode = CovarianceMode::Smart;
  } else if (mode == "inattentive") {
    cfg.covariance_mode = CovarianceMode::Inattentive;
  } else {
    throw std::invalid_argument("unknown covariance_mode: " + mode);
  }
  if (j.contains("uncertainty")) {
    cfg.uncertainty.psi_bar_e = j["uncertainty"].value("psi_bar_e", cfg.uncertainty.psi_bar_e);
    cfg.uncertainty.r_bar_e = j["uncertainty"].value("r_bar_e", cfg.uncertainty.r_bar_e);
  }
  if (j.contains("noise")) {
    const auto& n = j["noise"];
    if (n.contains("uwb")) {
      const auto& u = n["uwb"];
      cfg.noise.uwb.s_ht = u.value("s_ht", cfg.noise.uwb.s_ht);
      cfg.noise.uwb.mu = u.value("mu", cfg.noise.uwb.mu);
      cfg.noise.uwb.sigma = u.value("sigma", cfg.noise.uwb.sigma);
      cfg.noise.uwb.k_shape = u.value("k", cfg.noise.uwb.k_shape);
      cfg.noise.uwb.rate = u.value("rate", cfg.noise.uwb.rate);
    }
    if (n.contains("delay")) {
      const auto& d = n["delay"];
      cfg.noise.delay.eta_bar = d.value("eta_bar", cfg.noise.delay.eta_bar);
      cfg.noise.delay.v_bar = d.value("v_bar", cfg.noise.delay.v_bar);
      cfg.noise.delay.d_ref = d.value("d_ref", 3.0 * cfg.noise.delay.r_bar());
    }
    if (n.contains("actuator")) {
      const auto& a = n["actuator"];
      cfg.noise.actuator.sigma_psi = a.value("sigma_psi", cfg.noise.actuator.sigma_psi);
      cfg.noise.actuator.sigma_v = a.value("sigma_v", cfg.noise.actuator.sigma_v);
    }
  }
  if (j.contains("measurement_variances")) {
    const auto& v = j["measurement_variances"];
    cfg.variances.smart_direct = v.value("smart_direct", cfg.variances.smart_direct);
    cfg.variances.smart_indirect = v.value("smart_indirect", cfg.variances.smart_indirect);
    cfg.variances.inattentive = v.value("inattentive", cfg.variances.inattentive);
  }
  cfg.p_drop = j.value("p_drop", 0.0);
  const std::string truth = j.value("truth_integration", "world");
  cfg.truth_integration =
      truth == "relative" ? TruthIntegration::Relative : TruthIntegration::World;
  cfg.record_convergence = j.value("record_convergence", false);
  cfg.seed = j.value("seed", uint64_t{1});
  if (j.contains("swarm")) {
    cfg.swarm.clear();
    for (const auto& s : j["swarm"]) {
      TrajectorySpec spec;
      spec.x_c = s.value("x_c", 0.0);
      spec.y_c = s.value("y_c", 0.0);
      spec.z_c = s.value("z_c", 0.0);
      spec.radius = s.value("radius", 0.0);
      spec.radius_z = s.value("radius_z", 0.0);
      spec.freq = s.value("freq", 0.0);
      spec.freq_z = s.value("freq_z", 0.0);
      spec.phase = s.value("phase", 0.0);
      spec.psi0 = s.value("psi0", 0.0);
      spec.psi_turn = s.value("psi_turn", 0.0);
      spec.turn_times = s.value("turn_times", std::vector<double>{});
      cfg.swarm.push_back(spec);
    }
  } else {
    cfg.swarm = paper_default_config().swarm;
  }
  if (j.contains("topology") && j["topology"].is_array()) {
    cfg.adjacency.clear();
    for (const auto& row : j["topology"]) {
      std::vector<int> nbrs;
      for (const auto& id : row) nbrs.push_back(id.get<int>() - 1);
      cfg.adjacency.push_back(nbrs);
    }
  }
  return cfg;
}

RunConfig load_config(const std::string& path) {
  if (path == "paper-default" || path.empty()) return paper_default_config();
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config file: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return config_from_json(ss.str());
}

void save_config(const RunConfig& config, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write config file: " + path);
  out << config_to_json(config) << "\n";
}

std::string config_digest(const RunConfig& config) {
  const std::string text = config_to_json(config);
  uint64_t h = 1469598103934665603ull;  // FNV-1a
  for (unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::vector<AgentPath> propagate_truth(const RunConfig& config, Rng& rng) {
  const int n_steps = config.steps();
  const int n_agents = static_cast<int>(config.swarm.size());
  std::vector<AgentPath> paths(n_agents);
  for (int a = 0; a < n_agents; ++a) {
    const NominalState ns = nominal_state(config.swarm[a], 0.0);
    paths[a].position.reserve(n_steps + 1);
    paths[a].heading.reserve(n_steps + 1);
    paths[a].position.push_back(ns.position);
    paths[a].heading.push_back(ns.heading);
  }
  for (int k = 0; k < n_steps; ++k) {
    // midpoint input sampling keeps the integrated path on the closed form
    const double t = (k + 0.5) * config.Ts;
    for (int a = 0; a < n_agents; ++a) {
      const NominalState ns = nominal_state(config.swarm[a], t);
      const Eigen::Vector4d du = actuator_sample(rng, config.noise.actuator);
      const double rate = ns.heading_rate + du(0);
      const double psi_mid = paths[a].heading[k] + 0.5 * config.Ts * rate;
      paths[a].position.push_back(
          paths[a].position[k] +
          config.Ts * (planar_rotation(psi_mid) * (ns.body_velocity + du.tail<3>())));
      paths[a].heading.push_back(
          wrap_angle(paths[a].heading[k] + config.Ts * rate));
    }
  }
  return paths;
}

AugmentedState relative_truth(const std::vector<AgentPath>& paths, int host,
                              const std::vector<int>& neighbors, int k) {
  const Eigen::Matrix3d R_host_t = planar_rotation(paths.at(host).heading.at(k)).transpose();
  AugmentedState state;
  state.blocks.reserve(neighbors.size());
  for (int j : neighbors) {
    const double psi = wrap_angle(paths.at(j).heading.at(k) - paths.at(host).heading.at(k));
    const Eigen::Vector3d p =
        R_host_t * (paths.at(j).position.at(k) - paths.at(host).position.at(k));
    state.blocks.emplace_back(psi, p);
  }
  return state;
}

AugmentedInput nominal_inputs(const std::vector<TrajectorySpec>& swarm, int host,
                              const std::vector<int>& neighbors, double t) {
  AugmentedInput input;
  const NominalState host_state = nominal_state(swarm.at(host), t);
  input.host.psi_dot = host_state.heading_rate;
  input.host.v = host_state.body_velocity;
  input.neighbors.reserve(neighbors.size());
  for (int j : neighbors) {
    const NominalState ns = nominal_state(swarm.at(j), t);
    input.neighbors.push_back(ControlInput{ns.heading_rate, ns.body_velocity});
  }
  return input;
}

AugmentedState nominal_relative_state(const std::vector<TrajectorySpec>& swarm, int host,
                                      const std::vector<int>& neighbors, double t) {
  const NominalState host_state = nominal_state(swarm.at(host), t);
  const Eigen::Matrix3d R_host_t = planar_rotation(host_state.heading).transpose();
  AugmentedState state;
  state.blocks.reserve(neighbors.size());
  for (int j : neighbors) {
    const NominalState ns = nominal_state(swarm.at(j), t);
    state.blocks.emplace_back(wrap_angle(ns.heading - host_state.heading),
                              R_host_t * (ns.position - host_state.position));
  }
  return state;
}

MeasurementSampler::MeasurementSampler(const NoiseConfig& noise)
    : uwb_(noise.uwb), delay_(noise.delay) {
  uwb_.validate();
}

double MeasurementSampler::direct(double true_distance, Rng& rng) const {
  return true_distance + uwb_sample(rng, uwb_);
}

double MeasurementSampler::indirect(double true_distance, Rng& rng) const {
  return true_distance + uwb_sample(rng, uwb_) + delay_(rng);
}

double measure(double true_distance, MeasurementKind kind, const NoiseConfig& noise,
               Rng& rng) {
  MeasurementSampler sampler(noise);
  return kind == MeasurementKind::Direct ? sampler.direct(true_distance, rng)
                                         : sampler.indirect(true_distance, rng);
}

FilterBelief initialize_belief(const AugmentedState& truth0,
                               const UncertaintyLevel& level, Rng& rng) {
  const int n = truth0.size();
  std::uniform_real_distribution<double> u_psi(-level.psi_bar_e, level.psi_bar_e);
  std::uniform_real_distribution<double> u_elev(-M_PI / 2.0, M_PI / 2.0);
  std::uniform_real_distribution<double> u_azim(0.0, 2.0 * M_PI);

  FilterBelief belief;
  belief.x.resize(4 * n);
  belief.P = Eigen::MatrixXd::Zero(4 * n, 4 * n);
  const Eigen::Vector4d pe(level.psi_bar_e * level.psi_bar_e / 3.0,
                           level.r_bar_e * level.r_bar_e / 4.0,
                           level.r_bar_e * level.r_bar_e / 4.0,
                           level.r_bar_e * level.r_bar_e / 2.0);
  for (int a = 0; a < n; ++a) {
    const double dpsi = u_psi(rng);
    const double elev = u_elev(rng);
    const double azim = u_azim(rng);
    const Eigen::Vector3d dp(level.r_bar_e * std::cos(elev) * std::cos(azim),
                             level.r_bar_e * std::cos(elev) * std::sin(azim),
                             level.r_bar_e * std::sin(elev));
    belief.x(4 * a) = wrap_angle(truth0.blocks[a].psi_ij + dpsi);
    belief.x.segment<3>(4 * a + 1) = truth0.blocks[a].p_ij + dp;
    belief.P.block<4, 4>(4 * a, 4 * a) = pe.asDiagonal();
  }
  return belief;
}

Eigen::MatrixXd build_R(SchemeKind scheme, CovarianceMode mode,
                        const MeasurementLayout& layout,
                        const MeasurementVariances& variances) {
  const bool smart = mode == CovarianceMode::Smart;
  if (scheme == SchemeKind::nCRL) {
    Eigen::MatrixXd r(1, 1);
    r(0, 0) = smart ? variances.smart_direct : variances.inattentive;
    return r;
  }
  const int n = layout.rows(scheme);
  Eigen::VectorXd diag(n);
  if (smart) {
    diag.head(layout.n_neighbors).setConstant(variances.smart_direct);
    if (scheme == SchemeKind::fCRL) {
      diag.tail(layout.p_id()).setConstant(variances.smart_indirect);
    }
  } else {
    diag.setConstant(variances.inattentive);
  }
  return diag.asDiagonal();
}

Eigen::MatrixXd build_Q(SchemeKind scheme, const ActuatorNoiseSpec& actuator,
                        int n_neighbors) {
  const Eigen::Matrix4d qu = actuator.input_covariance();
  const int reps = scheme == SchemeKind::nCRL ? 2 : n_neighbors + 1;
  Eigen::MatrixXd q = Eigen::MatrixXd::Zero(4 * reps, 4 * reps);
  for (int i = 0; i < reps; ++i) q.block<4, 4>(4 * i, 4 * i) = qu;
  return q;
}

std::string TrialRecord::method() const {
  std::string name = scheme_name(scheme);
  if (filter == FilterKind::KernelEKF) {
    switch (kernel) {
      case KernelKind::LogVersoria: name += "(MLVC)"; break;
      case KernelKind::Versoria: name += "(MVC)"; break;
      case KernelKind::Gaussian: name += "(MGC)"; break;
    }
  }
  return name;
}

namespace {

MeasurementModel mask_rows(const MeasurementModel& base, const std::vector<int>& keep) {
  MeasurementModel masked;
  masked.dim = static_cast<int>(keep.size());
  masked.h = [base, keep](const Eigen::VectorXd& x) {
    const Eigen::VectorXd full = base.h(x);
    Eigen::VectorXd out(keep.size());
    for (size_t i = 0; i < keep.size(); ++i) out(i) = full(keep[i]);
    return out;
  };
  masked.H = [base, keep](const Eigen::VectorXd& x) {
    const Eigen::MatrixXd full = base.H(x);
    Eigen::MatrixXd out(keep.size(), full.cols());
    for (size_t i = 0; i < keep.size(); ++i) out.row(i) = full.row(keep[i]);
    return out;
  };
  return masked;
}

}  // namespace

TrialRecord run_trial(const RunConfig& config) {
  config.validate();
  const NeighborSet nbrs = config.neighbor_set();
  const MeasurementLayout layout = config.layout();
  const int n_nbrs = nbrs.size();
  const int n_steps = config.steps();
  const double Ts = config.Ts;

  TrialRecord record;
  record.seed = config.seed;
  record.level = config.uncertainty;
  record.digest = config_digest(config);
  record.scheme = config.scheme;
  record.filter = config.filter;
  record.kernel = config.kernel.kind;
  record.mode = config.covariance_mode;
  record.neighbor_ids = nbrs.neighbors;

  Rng rng(config.seed);

  // ground truth for every step
  std::vector<AugmentedState> truth;
  truth.reserve(n_steps + 1);
  if (config.truth_integration == TruthIntegration::World) {
    const std::vector<AgentPath> paths = propagate_truth(config, rng);
    for (int k = 0; k <= n_steps; ++k) {
      truth.push_back(relative_truth(paths, config.host, nbrs.neighbors, k));
    }
  } else {
    AugmentedState x = nominal_relative_state(config.swarm, config.host, nbrs.neighbors, 0.0);
    truth.push_back(x);
    for (int k = 0; k < n_steps; ++k) {
      AugmentedInput u = nominal_inputs(config.swarm, config.host, nbrs.neighbors, k * Ts);
      u.host = ControlInput::from_vector(u.host.to_vector() +
                                         actuator_sample(rng, config.noise.actuator));
      for (auto& nu : u.neighbors) {
        nu = ControlInput::from_vector(nu.to_vector() +
                                       actuator_sample(rng, config.noise.actuator));
      }
      x = discretize_step(x, u, Ts);
      truth.push_back(x);
    }
  }

  try {
    const MeasurementSampler sampler(config.noise);
    std::uniform_real_distribution<double> unit(0.0, 1.0);

    const ProcessModel aug_process = make_augmented_process(n_nbrs);
    const ProcessModel pair_process = make_augmented_process(1);
    const MeasurementModel stacked_meas = make_crl_measurement(config.scheme, layout);
    const MeasurementLayout pair_layout = MeasurementLayout::all_to_all(1);
    const MeasurementModel pair_meas = make_crl_measurement(SchemeKind::nCRL, pair_layout);

    const Eigen::MatrixXd R_full =
        build_R(config.scheme, config.covariance_mode, layout, config.variances);
    const Eigen::MatrixXd Q =
        build_Q(config.scheme, config.noise.actuator, n_nbrs);

    const bool coupled = config.scheme != SchemeKind::nCRL;
    FilterBelief belief = initialize_belief(truth[0], config.uncertainty, rng);
    std::vector<FilterBelief> pair_beliefs;
    if (!coupled) {
      for (int a = 0; a < n_nbrs; ++a) {
        pair_beliefs.push_back(FilterBelief{belief.x.segment<4>(4 * a),
                                            belief.P.block<4, 4>(4 * a, 4 * a)});
      }
    }

    record.steps.reserve(n_steps);
    for (int k = 1; k <= n_steps; ++k) {
      const AugmentedInput u_prev =
          nominal_inputs(config.swarm, config.host, nbrs.neighbors, (k - 1) * Ts);
      const AugmentedState& x_true = truth[k];

      // information packages from every neighbor
      std::vector<InformationPackage> packages(n_nbrs);
      for (int a = 0; a < n_nbrs; ++a) {
        packages[a].sender = nbrs.neighbors[a];
        packages[a].u = u_prev.neighbors[a];
        packages[a].y.push_back(
            {config.host, nbrs.neighbors[a],
             sampler.direct(x_true.blocks[a].p_ij.norm(), rng)});
      }
      if (config.scheme == SchemeKind::fCRL) {
        for (const auto& pr : layout.indirect) {
          const double d =
              (x_true.blocks[pr.alpha].p_ij - x_true.blocks[pr.beta].p_ij).norm();
          packages[pr.alpha].y.push_back(
              {nbrs.neighbors[pr.alpha], nbrs.neighbors[pr.beta],
               sampler.indirect(d, rng)});
        }
      }
      if (config.p_drop > 0.0) {
        for (auto& pkg : packages) {
          auto& entries = pkg.y;
          entries.erase(std::remove_if(entries.begin(), entries.end(),
                                       [&](const InformationPackage::RangeEntry&) {
                                         return unit(rng) < config.p_drop;
                                       }),
                        entries.end());
        }
      }

      // assemble the measurement stack in layout order
      MeasurementStack stack;
      stack.layout = layout;
      stack.direct =
          Eigen::VectorXd::Constant(n_nbrs, std::numeric_limits<double>::quiet_NaN());
      stack.indirect = Eigen::VectorXd::Constant(
          layout.p_id(), std::numeric_limits<double>::quiet_NaN());
      for (int a = 0; a < n_nbrs; ++a) {
        for (const auto& entry : packages[a].y) {
          if (entry.agent_a == config.host) {
            stack.direct(a) = entry.distance;
          } else {
            for (int m = 0; m < layout.p_id(); ++m) {
              if (nbrs.neighbors[layout.indirect[m].alpha] == entry.agent_a &&
                  nbrs.neighbors[layout.indirect[m].beta] == entry.agent_b) {
                stack.indirect(m) = entry.distance;
              }
            }
          }
        }
      }

      int fp_iters = 0;
      std::optional<ConvergenceReport> convergence;
      const auto t_start = std::chrono::steady_clock::now();
      if (coupled) {
        belief = ekf_predict(belief, u_prev.to_vector(), Q, Ts, aug_process);
        const auto [y, keep] = stack.stacked(config.scheme);
        if (!keep.empty()) {
          const bool full = static_cast<int>(keep.size()) == stacked_meas.dim;
          const MeasurementModel meas =
              full ? stacked_meas : mask_rows(stacked_meas, keep);
          Eigen::MatrixXd R = R_full;
          if (!full) {
            R.resize(keep.size(), keep.size());
            for (size_t i = 0; i < keep.size(); ++i) {
              for (size_t jj = 0; jj < keep.size(); ++jj) {
                R(i, jj) = R_full(keep[i], keep[jj]);
              }
            }
          }
          if (config.filter == FilterKind::EKF) {
            belief = ekf_update(belief, y, R, meas);
          } else {
            if (config.record_convergence) {
              const NormalizedRegression reg =
                  build_normalized_regression(belief, y, R, meas);
              const double rho = 2.0 * belief.x.lpNorm<1>() + 1.0;
              convergence = convergence_check(reg.z_star, reg.F_star,
                                              config.kernel.tau, rho, 0.5);
            }
            auto [post, diag] =
                mlvc_update(belief, y, R, meas, config.kernel, config.fixed_point);
            belief = post;
            fp_iters += diag.iterations;
          }
        }
        if (aug_process.wrap_state) aug_process.wrap_state(belief.x);
      } else {
        for (int a = 0; a < n_nbrs; ++a) {
          Eigen::VectorXd u_pair(8);
          u_pair.head<4>() = u_prev.host.to_vector();
          u_pair.tail<4>() = u_prev.neighbors[a].to_vector();
          pair_beliefs[a] = ekf_predict(pair_beliefs[a], u_pair, Q, Ts, pair_process);
          if (!std::isnan(stack.direct(a))) {
            Eigen::VectorXd y(1);
            y(0) = stack.direct(a);
            if (config.filter == FilterKind::EKF) {
              pair_beliefs[a] = ekf_update(pair_beliefs[a], y, R_full, pair_meas);
            } else {
              auto [post, diag] = mlvc_update(pair_beliefs[a], y, R_full, pair_meas,
                                              config.kernel, config.fixed_point);
              pair_beliefs[a] = post;
              fp_iters += diag.iterations;
            }
          }
          if (pair_process.wrap_state) pair_process.wrap_state(pair_beliefs[a].x);
        }
        // recomposition of the stacked belief
        for (int a = 0; a < n_nbrs; ++a) {
          belief.x.segment<4>(4 * a) = pair_beliefs[a].x;
          belief.P.block<4, 4>(4 * a, 4 * a) = pair_beliefs[a].P;
        }
      }
      const auto t_end = std::chrono::steady_clock::now();

      StepRecord step;
      step.t = k * Ts;
      step.truth = x_true;
      step.estimate = AugmentedState::from_vector(belief.x);
      step.p_trace = belief.P.trace();
      step.fp_iters = fp_iters;
      step.step_time_ns =
          std::chrono::duration_cast<std::chrono::nanoseconds>(t_end - t_start).count();
      step.convergence = convergence;
      record.steps.push_back(std::move(step));
    }
  } catch (const std::exception& e) {
    record.failed = true;
    record.failure = e.what();
  }
  return record;
}

std::vector<TrialRecord> run_monte_carlo(const RunConfig& base,
                                         const std::vector<UncertaintyLevel>& levels,
                                         int trials_per_level, uint64_t base_seed,
                                         int n_threads) {
  if (levels.empty()) throw std::invalid_argument("run_monte_carlo: no levels");
  if (trials_per_level < 1) {
    throw std::invalid_argument("run_monte_carlo: trials_per_level must be >= 1");
  }
  const int total = static_cast<int>(levels.size()) * trials_per_level;
  std::vector<RunConfig> configs(total);
  for (size_t l = 0; l < levels.size(); ++l) {
    for (int t = 0; t < trials_per_level; ++t) {
      RunConfig cfg = base;
      cfg.uncertainty = levels[l];
      cfg.seed = base_seed + 100000 * static_cast<uint64_t>(l) + static_cast<uint64_t>(t);
      configs[l * trials_per_level + t] = cfg;
    }
  }
  std::vector<TrialRecord> records(total);
  if (n_threads <= 1) {
    for (int i = 0; i < total; ++i) records[i] = run_trial(configs[i]);
    return records;
  }
  std::atomic<int> next{0};
  auto worker = [&]() {
    for (;;) {
      const int i = next.fetch_add(1);
      if (i >= total) return;
      records[i] = run_trial(configs[i]);
    }
  };
  std::vector<std::thread> pool;
  const int n = std::min(n_threads, total);
  pool.reserve(n);
  for (int i = 0; i < n; ++i) pool.emplace_back(worker);
  for (auto& th : pool) th.join();
  return records;
}

void write_trial_csv(const TrialRecord& record, std::ostream& os) {
  os << "k,t,pair,psi_true,psi_est,x_true,x_est,y_true,y_est,z_true,z_est,"
        "fp_iters,step_time_ns\n";
  char buf[512];
  for (size_t i = 0; i < record.steps.size(); ++i) {
    const StepRecord& s = record.steps[i];
    for (size_t a = 0; a < record.neighbor_ids.size(); ++a) {
      const RelativeState& tr = s.truth.blocks[a];
      const RelativeState& es = s.estimate.blocks[a];
      std::snprintf(buf, sizeof(buf),
                    "%zu,%.6g,%d,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%d,%lld\n",
                    i + 1, s.t, record.neighbor_ids[a] + 1, tr.psi_ij, es.psi_ij,
                    tr.p_ij.x(), es.p_ij.x(), tr.p_ij.y(), es.p_ij.y(), tr.p_ij.z(),
                    es.p_ij.z(), s.fp_iters, static_cast<long long>(s.step_time_ns));
      os << buf;
    }
  }
}

}  // namespace crl
