#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "crl/analysis.hpp"
#include "crl/observability.hpp"
#include "crl/simulation.hpp"

namespace fs = std::filesystem;

namespace {

std::string trial_filename(const crl::TrialSummary& s, int index) {
  std::string method = s.method;
  for (char& c : method) {
    if (c == '(' || c == ')') c = '_';
  }
  return method + "_" + s.mode + "_" + std::to_string(index) + ".csv";
}

void write_trials(const std::vector<crl::TrialRecord>& records, const fs::path& out_dir,
                  const std::string& digest) {
  fs::create_directories(out_dir / "trials");
  std::vector<crl::TrialSummary> summaries;
  summaries.reserve(records.size());
  for (size_t i = 0; i < records.size(); ++i) {
    const auto summary = crl::summarize(records[i]);
    std::ofstream csv(out_dir / "trials" / trial_filename(summary, static_cast<int>(i)));
    crl::write_trial_csv(records[i], csv);
    summaries.push_back(summary);
  }
  crl::save_summaries(summaries, (out_dir / "summary.json").string(), digest);
}

crl::SchemeKind parse_scheme(const std::string& s) {
  if (s == "fcrl") return crl::SchemeKind::fCRL;
  if (s == "hcrl") return crl::SchemeKind::hCRL;
  if (s == "ncrl") return crl::SchemeKind::nCRL;
  throw CLI::ValidationError("scheme must be fcrl|hcrl|ncrl");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Cooperative relative localization simulation lab"};
  app.require_subcommand(1);

  std::string config_path = "paper-default";
  std::string out_dir = "out";
  std::string in_dir;
  uint64_t seed = 1;
  int levels = 6;
  int trials = 20;
  int threads = 1;
  int samples = 100;
  std::string method_a, method_b;
  std::string metric = "ss_er_p";
  std::string mode = "smart";
  int resamples = 10000;
  std::string scheme_str = "fcrl";
  std::string filter_str = "mlvc";
  int ni = 4;
  int tm = 0;

  auto* simulate = app.add_subcommand("simulate", "Run a single trial");
  simulate->add_option("--config", config_path, "Config file or 'paper-default'");
  simulate->add_option("--seed", seed, "Trial seed");
  simulate->add_option("--out", out_dir, "Output directory");

  auto* montecarlo = app.add_subcommand("montecarlo", "Run a Monte Carlo batch");
  montecarlo->add_option("--config", config_path, "Config file or 'paper-default'");
  montecarlo->add_option("--levels", levels, "Number of uncertainty levels");
  montecarlo->add_option("--trials", trials, "Trials per level");
  montecarlo->add_option("--seed", seed, "Base seed");
  montecarlo->add_option("--threads", threads, "Worker threads");
  montecarlo->add_option("--out", out_dir, "Output directory");

  auto* observability = app.add_subcommand("observability", "Rank sweep along the nominal trajectories");
  observability->add_option("--config", config_path, "Config file or 'paper-default'");
  observability->add_option("--samples", samples, "Number of time samples");
  observability->add_option("--out", out_dir, "Output CSV file");

  auto* bootstrap = app.add_subcommand("bootstrap", "Compare two methods from stored summaries");
  bootstrap->add_option("--in", in_dir, "Directory holding summary.json files")->required();
  bootstrap->add_option("--a", method_a, "First method, e.g. fCRL(MLVC)")->required();
  bootstrap->add_option("--b", method_b, "Second method")->required();
  bootstrap->add_option("--metric", metric, "tr_er_psi|ss_er_psi|tr_er_p|ss_er_p");
  bootstrap->add_option("--mode", mode, "smart|inattentive");
  bootstrap->add_option("--resamples", resamples, "Bootstrap resamples");
  bootstrap->add_option("--seed", seed, "Resampling seed");

  auto* report = app.add_subcommand("report", "Aggregate stored summaries into report files");
  report->add_option("--in", in_dir, "Directory holding summary.json files")->required();
  report->add_option("--out", out_dir, "Output directory");
  report->add_option("--resamples", resamples, "Bootstrap resamples");
  report->add_option("--seed", seed, "Resampling seed");

  auto* flops = app.add_subcommand("flops", "Per-step operation count of a method");
  flops->add_option("--scheme", scheme_str, "fcrl|hcrl|ncrl");
  flops->add_option("--filter", filter_str, "ekf|mlvc");
  flops->add_option("--ni", ni, "Number of neighbors");
  flops->add_option("--tm", tm, "Mean fixed-point iterations");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*simulate) {
      crl::RunConfig config = crl::load_config(config_path);
      config.seed = seed;
      const auto record = crl::run_trial(config);
      write_trials({record}, out_dir, crl::config_digest(config));
      if (record.failed) {
        std::cerr << "trial failed: " << record.failure << "\n";
        return 1;
      }
      const auto metrics = crl::compute_metrics(record);
      std::cout << "method " << record.method() << " seed " << seed << "\n"
                << "tr_er_psi " << metrics.tr_er_psi << " deg\n"
                << "ss_er_psi " << metrics.ss_er_psi << " deg\n"
                << "tr_er_p " << metrics.tr_er_p << " m\n"
                << "ss_er_p " << metrics.ss_er_p << " m\n";
    } else if (*montecarlo) {
      crl::RunConfig config = crl::load_config(config_path);
      std::vector<crl::UncertaintyLevel> level_set;
      for (int q = 1; q <= levels; ++q) level_set.push_back(crl::uncertainty_level(q));
      const auto records = crl::run_monte_carlo(config, level_set, trials, seed, threads);
      write_trials(records, out_dir, crl::config_digest(config));
      int failed = 0;
      for (const auto& r : records) failed += r.failed ? 1 : 0;
      std::cout << records.size() << " trials (" << failed << " failed) -> " << out_dir
                << "\n";
    } else if (*observability) {
      crl::RunConfig config = crl::load_config(config_path);
      const auto nbrs = config.neighbor_set();
      const auto layout = config.layout();
      std::ofstream out(out_dir);
      if (!out) throw std::runtime_error("cannot write " + out_dir);
      out << "t,scheme,rank,sigma_min";
      for (int id : nbrs.neighbors) out << ",case_pair_" << id + 1;
      out << "\n";
      for (int s = 0; s < samples; ++s) {
        const double t = config.horizon * s / std::max(1, samples - 1);
        const auto state =
            crl::nominal_relative_state(config.swarm, config.host, nbrs.neighbors, t);
        const auto input =
            crl::nominal_inputs(config.swarm, config.host, nbrs.neighbors, t);
        const auto rank =
            crl::numeric_rank(crl::crl_ob_matrix(state, input, config.scheme, layout));
        out << t << ',' << crl::scheme_name(config.scheme) << ',' << rank.rank << ','
            << rank.sigma_min;
        for (int a = 0; a < nbrs.size(); ++a) {
          const auto label = crl::classify_motion(state.blocks[a], input.pair(a), 1e-9);
          out << ',' << crl::motion_case_name(label.primary);
        }
        out << "\n";
      }
      std::cout << "wrote " << samples << " samples to " << out_dir << "\n";
    } else if (*bootstrap) {
      const auto summaries = crl::load_summaries(in_dir);
      std::vector<double> a, b;
      for (const auto& s : summaries) {
        if (s.failed || s.mode != mode) continue;
        if (s.method == method_a) a.push_back(s.metrics.by_name(metric));
        if (s.method == method_b) b.push_back(s.metrics.by_name(metric));
      }
      crl::Rng rng(seed);
      const auto result = crl::bootstrap_compare(a, b, resamples, rng);
      std::cout << "metric " << metric << " mode " << mode << "\n"
                << method_a << ": n=" << a.size() << "  " << method_b
                << ": n=" << b.size() << "\n"
                << "nominal_diff " << result.nominal_diff << "\n"
                << "p_value " << result.p_value << "\n";
    } else if (*report) {
      const auto summaries = crl::load_summaries(in_dir);
      crl::export_report(summaries, out_dir, resamples, seed);
      std::cout << summaries.size() << " trials -> " << out_dir << "\n";
    } else if (*flops) {
      const crl::SchemeKind scheme = parse_scheme(scheme_str);
      crl::FilterKind filter;
      if (filter_str == "ekf") {
        filter = crl::FilterKind::EKF;
      } else if (filter_str == "mlvc" || filter_str == "kernel-ekf") {
        filter = crl::FilterKind::KernelEKF;
      } else {
        throw CLI::ValidationError("filter must be ekf|mlvc");
      }
      std::cout << crl::flop_estimate(scheme, filter, ni, tm) << "\n";
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
