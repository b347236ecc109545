#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "crl/analysis.hpp"

using namespace crl;
namespace fs = std::filesystem;

namespace {

TrialRecord synthetic_record(int n_steps, int n_pairs,
                             const Eigen::Vector3d& position_offset,
                             double heading_offset) {
  TrialRecord record;
  record.scheme = SchemeKind::fCRL;
  record.filter = FilterKind::EKF;
  record.seed = 1;
  for (int a = 0; a < n_pairs; ++a) record.neighbor_ids.push_back(a + 1);
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> real(-2.0, 2.0);
  for (int k = 0; k < n_steps; ++k) {
    StepRecord step;
    step.t = 0.01 * (k + 1);
    for (int a = 0; a < n_pairs; ++a) {
      const RelativeState truth(real(rng), Eigen::Vector3d(real(rng), real(rng), real(rng)));
      step.truth.blocks.push_back(truth);
      step.estimate.blocks.emplace_back(truth.psi_ij + heading_offset,
                                        truth.p_ij + position_offset);
    }
    step.fp_iters = 0;
    step.step_time_ns = 1000;
    record.steps.push_back(step);
  }
  return record;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("compute_metrics examples") {
  SUBCASE("exact estimate gives zero errors") {
    const TrialRecord record = synthetic_record(300, 4, Eigen::Vector3d::Zero(), 0.0);
    const ErrorMetrics m = compute_metrics(record);
    CHECK(m.tr_er_psi == 0.0);
    CHECK(m.ss_er_psi == 0.0);
    CHECK(m.tr_er_p == 0.0);
    CHECK(m.ss_er_p == 0.0);
  }
  SUBCASE("constant position offset, per-sample normalization") {
    const TrialRecord record =
        synthetic_record(300, 4, Eigen::Vector3d(0.1, 0.1, 0.1), 0.0);
    const ErrorMetrics m = compute_metrics(record, MetricNormalization::PerSample);
    CHECK(m.ss_er_p == doctest::Approx(0.1 * std::sqrt(3.0)).epsilon(1e-12));
    CHECK(m.tr_er_p == doctest::Approx(0.1 * std::sqrt(3.0)).epsilon(1e-12));
  }
  SUBCASE("constant heading offset, per-sample normalization") {
    const TrialRecord record = synthetic_record(300, 4, Eigen::Vector3d::Zero(), 0.1);
    const ErrorMetrics m = compute_metrics(record, MetricNormalization::PerSample);
    CHECK(m.ss_er_psi == doctest::Approx(5.7296).epsilon(1e-4));
  }
  SUBCASE("normalization modes differ by the documented factors") {
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> real(0.0, 0.4);
    const TrialRecord record =
        synthetic_record(300, 3, Eigen::Vector3d(real(rng), real(rng), real(rng)),
                         real(rng));
    const ErrorMetrics lit = compute_metrics(record, MetricNormalization::PaperLiteral);
    const ErrorMetrics per = compute_metrics(record, MetricNormalization::PerSample);
    const double n_s = 300, k0 = 100;
    CHECK(lit.tr_er_p * (n_s / k0) == doctest::Approx(per.tr_er_p).epsilon(1e-12));
    CHECK(lit.ss_er_p * (n_s / (n_s - k0)) == doctest::Approx(per.ss_er_p).epsilon(1e-12));
    CHECK(lit.tr_er_psi * (n_s / k0) == doctest::Approx(per.tr_er_psi).epsilon(1e-12));
    CHECK(lit.ss_er_psi * (n_s / (n_s - k0)) ==
          doctest::Approx(per.ss_er_psi).epsilon(1e-12));
  }
  SUBCASE("heading error uses the wrapped difference") {
    TrialRecord record;
    record.neighbor_ids = {1};
    StepRecord step;
    step.truth.blocks.emplace_back(3.1, Eigen::Vector3d(1, 0, 0));
    step.estimate.blocks.emplace_back(-3.1, Eigen::Vector3d(1, 0, 0));
    record.steps = {step, step, step};
    const ErrorMetrics m = compute_metrics(record, MetricNormalization::PerSample);
    const double wrapped = 2 * M_PI - 6.2;
    CHECK(m.ss_er_psi == doctest::Approx(wrapped * 180.0 / M_PI).epsilon(1e-9));
    CHECK(m.ss_er_psi < 10.0);  // never the unwrapped 6.2 rad
  }
}

TEST_CASE("bootstrap_compare examples") {
  SUBCASE("identical samples give diff 0 and p 1") {
    const std::vector<double> a(30, 1.7);
    Rng rng(1);
    const BootstrapResult r = bootstrap_compare(a, a, 2000, rng);
    CHECK(r.nominal_diff == 0.0);
    CHECK(r.p_value == 1.0);
  }
  SUBCASE("fully separated samples give p < 0.001") {
    const std::vector<double> a(50, 0.0);
    const std::vector<double> b(50, 10.0);
    Rng rng(2);
    const BootstrapResult r = bootstrap_compare(a, b, 10000, rng);
    CHECK(r.p_value < 0.001);
  }
  SUBCASE("deterministic for a seed and bounded") {
    std::vector<double> a, b;
    std::mt19937_64 rng_data(3);
    std::normal_distribution<double> normal(0.0, 1.0);
    for (int i = 0; i < 40; ++i) {
      a.push_back(normal(rng_data));
      b.push_back(normal(rng_data) + 0.3);
    }
    Rng r1(7), r2(7);
    const BootstrapResult x = bootstrap_compare(a, b, 5000, r1);
    const BootstrapResult y = bootstrap_compare(a, b, 5000, r2);
    CHECK(x.p_value == y.p_value);
    CHECK(x.p_value >= 0.0);
    CHECK(x.p_value <= 1.0);
  }
  SUBCASE("p is monotone non-increasing in the nominal difference") {
    // same pooled multiset, two different splits
    const std::vector<double> wide_a = {0, 1, 2, 3, 4};
    const std::vector<double> wide_b = {5, 6, 7, 8, 9};
    const std::vector<double> mixed_a = {0, 2, 4, 6, 8};
    const std::vector<double> mixed_b = {1, 3, 5, 7, 9};
    Rng r1(9), r2(9);
    const BootstrapResult wide = bootstrap_compare(wide_a, wide_b, 20000, r1);
    const BootstrapResult mixed = bootstrap_compare(mixed_a, mixed_b, 20000, r2);
    CHECK(wide.nominal_diff > mixed.nominal_diff);
    CHECK(wide.p_value <= mixed.p_value);
  }
}

TEST_CASE("iteration_stats examples") {
  TrialRecord kernel_run = synthetic_record(50, 2, Eigen::Vector3d::Zero(), 0.0);
  kernel_run.filter = FilterKind::KernelEKF;
  for (auto& step : kernel_run.steps) step.fp_iters = 1;
  SUBCASE("one-iteration runs are a point mass at 1") {
    const IterationStats stats = iteration_stats({kernel_run});
    CHECK(stats.histogram.size() == 1);
    CHECK(stats.histogram.at(1) == 50);
    CHECK(stats.mean == doctest::Approx(1.0));
  }
  SUBCASE("EKF runs contribute nothing") {
    TrialRecord ekf_run = synthetic_record(50, 2, Eigen::Vector3d::Zero(), 0.0);
    const IterationStats stats = iteration_stats({ekf_run});
    CHECK(stats.histogram.empty());
    CHECK(stats.total == 0);
  }
}

TEST_CASE("timing_stats examples") {
  TrialRecord one = synthetic_record(1, 2, Eigen::Vector3d::Zero(), 0.0);
  one.steps[0].step_time_ns = 12345;
  const auto means = timing_stats({one});
  CHECK(means.at("fCRL") == doctest::Approx(12345.0));
}

TEST_CASE("per-step cost orders as fCRL > nCRL and kernel > EKF") {
  RunConfig cfg = paper_default_config();
  cfg.horizon = 2.0;
  for (auto& spec : cfg.swarm) spec.turn_times.clear();
  std::vector<TrialRecord> records;
  for (auto scheme : {SchemeKind::fCRL, SchemeKind::nCRL}) {
    for (auto filter : {FilterKind::EKF, FilterKind::KernelEKF}) {
      cfg.scheme = scheme;
      cfg.filter = filter;
      records.push_back(run_trial(cfg));
      REQUIRE_FALSE(records.back().failed);
    }
  }
  const auto means = timing_stats(records);
  CHECK(means.at("fCRL") > means.at("nCRL"));
  CHECK(means.at("fCRL(MLVC)") > means.at("fCRL"));
  CHECK(means.at("nCRL(MLVC)") > means.at("nCRL"));
}

TEST_CASE("export_report") {
  const fs::path dir = fs::temp_directory_path() / "crl_report_test";
  fs::remove_all(dir);

  SUBCASE("empty input produces header-only CSVs and valid JSON") {
    export_report({}, dir.string(), 100, 1);
    CHECK(slurp(dir / "metrics.csv") ==
          "method,mode,level_psi,level_r,seed,tr_er_psi,ss_er_psi,tr_er_p,ss_er_p\n");
    CHECK(slurp(dir / "violin_data.csv") == "method,mode,metric,value\n");
    CHECK(slurp(dir / "bootstrap.csv") ==
          "metric,mode,method_a,method_b,nominal_diff,p_value,n_resamples\n");
    CHECK(slurp(dir / "iterations.csv") == "method,mode,iterations,count\n");
    CHECK(slurp(dir / "timings.csv") == "method,mode,mean_step_time_ns\n");
    CHECK(slurp(dir / "summary.json").find("aggregate") != std::string::npos);
  }

  SUBCASE("row counts and re-export determinism") {
    std::vector<TrialSummary> summaries;
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> real(0.1, 0.6);
    for (const char* method : {"fCRL(MLVC)", "fCRL"}) {
      for (int trial = 0; trial < 12; ++trial) {
        TrialSummary s;
        s.method = method;
        s.mode = "smart";
        s.seed = trial;
        s.digest = "d";
        s.metrics = {real(rng), real(rng), real(rng), real(rng)};
        s.kernel_filter = std::string(method) == "fCRL(MLVC)";
        if (s.kernel_filter) s.iteration_histogram[2] = 100;
        s.mean_step_time_ns = 500.0;
        summaries.push_back(s);
      }
    }
    export_report(summaries, dir.string(), 500, 42);
    const std::string violin = slurp(dir / "violin_data.csv");
    int lines = -1;  // discount the header
    for (char c : violin) lines += c == '\n' ? 1 : 0;
    CHECK(lines == 2 * 12 * 4);  // per method, per trial, per metric

    const std::string metrics_a = slurp(dir / "metrics.csv");
    const std::string bootstrap_a = slurp(dir / "bootstrap.csv");
    const std::string summary_a = slurp(dir / "summary.json");
    export_report(summaries, dir.string(), 500, 42);
    CHECK(slurp(dir / "metrics.csv") == metrics_a);
    CHECK(slurp(dir / "bootstrap.csv") == bootstrap_a);
    CHECK(slurp(dir / "summary.json") == summary_a);
  }

  SUBCASE("summaries survive the save/load round trip") {
    TrialSummary s;
    s.method = "nCRL(MLVC)";
    s.mode = "inattentive";
    s.level_psi = 0.2;
    s.level_r = 1.0;
    s.seed = 77;
    s.digest = "abc";
    s.metrics = {1.0, 2.0, 3.0, 4.0};
    s.kernel_filter = true;
    s.iteration_histogram = {{1, 10}, {3, 5}};
    s.mean_step_time_ns = 900.0;
    fs::create_directories(dir);
    save_summaries({s}, (dir / "summary.json").string(), "abc");
    const auto loaded = load_summaries(dir.string());
    REQUIRE(loaded.size() == 1);
    CHECK(loaded[0].method == s.method);
    CHECK(loaded[0].mode == s.mode);
    CHECK(loaded[0].metrics.ss_er_p == s.metrics.ss_er_p);
    CHECK(loaded[0].iteration_histogram == s.iteration_histogram);
    CHECK(loaded[0].seed == 77);
  }

  fs::remove_all(dir);
}
