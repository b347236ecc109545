#pragma once

#include <map>
#include <string>
#include <vector>

#include "crl/simulation.hpp"

namespace crl {

/// Averaged heading (deg) and position (m) errors over the transient and
/// steady-state intervals.
struct ErrorMetrics {
  double tr_er_psi{0.0};
  double ss_er_psi{0.0};
  double tr_er_p{0.0};
  double ss_er_p{0.0};

  double by_name(const std::string& name) const;  // e.g. "ss_er_p"
};

/// PaperLiteral divides all four sums by N_i * N_s; PerSample divides the
/// transient sums by N_i * k0 and the steady-state sums by N_i * (N_s - k0).
enum class MetricNormalization { PaperLiteral, PerSample };

/// k0 < 0 picks the 1:2 transient/steady split (N_s / 3).
ErrorMetrics compute_metrics(const TrialRecord& record,
                             MetricNormalization normalization = MetricNormalization::PaperLiteral,
                             int k0 = -1);

struct BootstrapResult {
  double nominal_diff{0.0};
  double p_value{1.0};
  int n_resamples{0};
};

/// Two-sided resampling test on the absolute mean difference; ties count as
/// exceedances.
BootstrapResult bootstrap_compare(const std::vector<double>& a,
                                  const std::vector<double>& b, int n_resamples,
                                  Rng& rng);

/// Pooled fixed-point iteration counts over all steps of all kernel-EKF runs.
struct IterationStats {
  std::map<int, long long> histogram;
  double mean{0.0};
  long long total{0};
};
IterationStats iteration_stats(const std::vector<TrialRecord>& records);

/// Mean per-step wall time keyed by method name.
std::map<std::string, double> timing_stats(const std::vector<TrialRecord>& records);

/// Everything the report layer needs from one trial.
struct TrialSummary {
  std::string method;
  std::string mode;
  double level_psi{0.0};
  double level_r{0.0};
  uint64_t seed{0};
  std::string digest;
  ErrorMetrics metrics;
  std::map<int, long long> iteration_histogram;
  double mean_step_time_ns{0.0};
  bool kernel_filter{false};
  bool failed{false};
  // fraction of recorded steps whose convergence conditions held (-1: none recorded)
  double convergence_satisfied_fraction{-1.0};
};

TrialSummary summarize(const TrialRecord& record,
                       MetricNormalization normalization = MetricNormalization::PaperLiteral);

/// Writes metrics.csv, violin_data.csv, bootstrap.csv, iterations.csv,
/// timings.csv and summary.json into out_dir. Deterministic output for a
/// given input and seed.
void export_report(const std::vector<TrialSummary>& summaries, const std::string& out_dir,
                   int bootstrap_resamples = 10000, uint64_t bootstrap_seed = 12345);

/// Reads back every summary.json under a directory (the directory itself and
/// its immediate subdirectories).
std::vector<TrialSummary> load_summaries(const std::string& dir);

void save_summaries(const std::vector<TrialSummary>& summaries, const std::string& path,
                    const std::string& digest);

}  // namespace crl
