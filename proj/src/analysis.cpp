#include "crl/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace crl {

using nlohmann::json;
namespace fs = std::filesystem;

double ErrorMetrics::by_name(const std::string& name) const {
  if (name == "tr_er_psi") return tr_er_psi;
  if (name == "ss_er_psi") return ss_er_psi;
  if (name == "tr_er_p") return tr_er_p;
  if (name == "ss_er_p") return ss_er_p;
  throw std::invalid_argument("unknown metric: " + name);
}

ErrorMetrics compute_metrics(const TrialRecord& record,
                             MetricNormalization normalization, int k0) {
  const int n_s = static_cast<int>(record.steps.size());
  if (n_s == 0) return {};
  if (k0 < 0) k0 = n_s / 3;
  k0 = std::min(k0, n_s);
  const int n_pairs = static_cast<int>(record.neighbor_ids.size());

  double tr_psi = 0.0, ss_psi = 0.0, tr_p = 0.0, ss_p = 0.0;
  for (int k = 0; k < n_s; ++k) {
    const StepRecord& s = record.steps[k];
    for (int a = 0; a < n_pairs; ++a) {
      const double dpsi =
          std::abs(wrap_angle(s.truth.blocks[a].psi_ij - s.estimate.blocks[a].psi_ij));
      const double dp = (s.truth.blocks[a].p_ij - s.estimate.blocks[a].p_ij).norm();
      if (k < k0) {
        tr_psi += dpsi;
        tr_p += dp;
      } else {
        ss_psi += dpsi;
        ss_p += dp;
      }
    }
  }
  const double tr_div =
      normalization == MetricNormalization::PaperLiteral ? n_pairs * n_s : n_pairs * k0;
  const double ss_div = normalization == MetricNormalization::PaperLiteral
                            ? n_pairs * n_s
                            : n_pairs * std::max(1, n_s - k0);
  ErrorMetrics m;
  m.tr_er_psi = (tr_psi / tr_div) * 180.0 / M_PI;
  m.ss_er_psi = (ss_psi / ss_div) * 180.0 / M_PI;
  m.tr_er_p = tr_p / tr_div;
  m.ss_er_p = ss_p / ss_div;
  return m;
}

BootstrapResult bootstrap_compare(const std::vector<double>& a,
                                  const std::vector<double>& b, int n_resamples,
                                  Rng& rng) {
  if (a.empty() || b.empty()) {
    throw std::invalid_argument("bootstrap_compare: empty sample set");
  }
  std::vector<double> pool = a;
  pool.insert(pool.end(), b.begin(), b.end());
  const int n = static_cast<int>(pool.size());

  auto mean = [](const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return s / v.size();
  };
  BootstrapResult result;
  result.nominal_diff = std::abs(mean(a) - mean(b));
  result.n_resamples = n_resamples;

  std::uniform_int_distribution<int> pick(0, n - 1);
  long long exceed = 0;
  for (int i = 0; i < n_resamples; ++i) {
    double sum_a = 0.0, sum_b = 0.0;
    for (int j = 0; j < n; ++j) sum_a += pool[pick(rng)];
    for (int j = 0; j < n; ++j) sum_b += pool[pick(rng)];
    if (std::abs(sum_a - sum_b) / n >= result.nominal_diff) ++exceed;
  }
  result.p_value = static_cast<double>(exceed) / n_resamples;
  return result;
}

IterationStats iteration_stats(const std::vector<TrialRecord>& records) {
  IterationStats stats;
  double sum = 0.0;
  for (const auto& record : records) {
    if (record.filter != FilterKind::KernelEKF) continue;
    for (const auto& step : record.steps) {
      ++stats.histogram[step.fp_iters];
      sum += step.fp_iters;
      ++stats.total;
    }
  }
  if (stats.total > 0) stats.mean = sum / stats.total;
  return stats;
}

std::map<std::string, double> timing_stats(const std::vector<TrialRecord>& records) {
  std::map<std::string, double> sums;
  std::map<std::string, long long> counts;
  for (const auto& record : records) {
    const std::string key = record.method();
    for (const auto& step : record.steps) {
      sums[key] += static_cast<double>(step.step_time_ns);
      ++counts[key];
    }
  }
  std::map<std::string, double> means;
  for (const auto& [key, sum] : sums) means[key] = sum / counts[key];
  return means;
}

TrialSummary summarize(const TrialRecord& record, MetricNormalization normalization) {
  TrialSummary s;
  s.method = record.method();
  s.mode = covariance_mode_name(record.mode);
  s.level_psi = record.level.psi_bar_e;
  s.level_r = record.level.r_bar_e;
  s.seed = record.seed;
  s.digest = record.digest;
  s.failed = record.failed;
  s.kernel_filter = record.filter == FilterKind::KernelEKF;
  if (!record.failed) {
    s.metrics = compute_metrics(record, normalization);
    double time_sum = 0.0;
    long long reports = 0, satisfied = 0;
    for (const auto& step : record.steps) {
      time_sum += static_cast<double>(step.step_time_ns);
      if (s.kernel_filter) ++s.iteration_histogram[step.fp_iters];
      if (step.convergence) {
        ++reports;
        satisfied += step.convergence->satisfied ? 1 : 0;
      }
    }
    if (!record.steps.empty()) s.mean_step_time_ns = time_sum / record.steps.size();
    if (reports > 0) {
      s.convergence_satisfied_fraction = static_cast<double>(satisfied) / reports;
    }
  }
  return s;
}

namespace {

std::string fmt(double x) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.10g", x);
  return buf;
}

const std::vector<std::string> kMetricNames = {"tr_er_psi", "ss_er_psi", "tr_er_p",
                                               "ss_er_p"};

std::ofstream open_out(const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  return out;
}

json summary_to_json(const TrialSummary& s) {
  json hist = json::object();
  for (const auto& [iters, count] : s.iteration_histogram) {
    hist[std::to_string(iters)] = count;
  }
  return json{{"method", s.method},
              {"mode", s.mode},
              {"level_psi", s.level_psi},
              {"level_r", s.level_r},
              {"seed", s.seed},
              {"digest", s.digest},
              {"failed", s.failed},
              {"kernel_filter", s.kernel_filter},
              {"metrics",
               {{"tr_er_psi", s.metrics.tr_er_psi},
                {"ss_er_psi", s.metrics.ss_er_psi},
                {"tr_er_p", s.metrics.tr_er_p},
                {"ss_er_p", s.metrics.ss_er_p}}},
              {"iteration_histogram", hist},
              {"mean_step_time_ns", s.mean_step_time_ns},
              {"convergence_satisfied_fraction", s.convergence_satisfied_fraction}};
}

TrialSummary summary_from_json(const json& j) {
  TrialSummary s;
  s.method = j.value("method", "");
  s.mode = j.value("mode", "smart");
  s.level_psi = j.value("level_psi", 0.0);
  s.level_r = j.value("level_r", 0.0);
  s.seed = j.value("seed", uint64_t{0});
  s.digest = j.value("digest", "");
  s.failed = j.value("failed", false);
  s.kernel_filter = j.value("kernel_filter", false);
  if (j.contains("metrics")) {
    const auto& m = j["metrics"];
    s.metrics.tr_er_psi = m.value("tr_er_psi", 0.0);
    s.metrics.ss_er_psi = m.value("ss_er_psi", 0.0);
    s.metrics.tr_er_p = m.value("tr_er_p", 0.0);
    s.metrics.ss_er_p = m.value("ss_er_p", 0.0);
  }
  if (j.contains("iteration_histogram")) {
    for (const auto& [key, value] : j["iteration_histogram"].items()) {
      s.iteration_histogram[std::stoi(key)] = value.get<long long>();
    }
  }
  s.mean_step_time_ns = j.value("mean_step_time_ns", 0.0);
  s.convergence_satisfied_fraction = j.value("convergence_satisfied_fraction", -1.0);
  return s;
}

}  // namespace

void save_summaries(const std::vector<TrialSummary>& summaries, const std::string& path,
                    const std::string& digest) {
  json j;
  j["config_digest"] = digest;
  json trials = json::array();
  for (const auto& s : summaries) trials.push_back(summary_to_json(s));
  j["trials"] = trials;
  auto out = open_out(path);
  out << j.dump(2) << "\n";
}

std::vector<TrialSummary> load_summaries(const std::string& dir) {
  std::vector<fs::path> files;
  const fs::path root(dir);
  if (fs::is_regular_file(root)) {
    files.push_back(root);
  } else {
    if (fs::exists(root / "summary.json")) files.push_back(root / "summary.json");
    if (fs::is_directory(root)) {
      for (const auto& entry : fs::directory_iterator(root)) {
        if (entry.is_directory() && fs::exists(entry.path() / "summary.json")) {
          files.push_back(entry.path() / "summary.json");
        }
      }
    }
  }
  std::sort(files.begin(), files.end());
  std::vector<TrialSummary> out;
  for (const auto& file : files) {
    std::ifstream in(file);
    if (!in) throw std::runtime_error("cannot read " + file.string());
    json j;
    in >> j;
    for (const auto& t : j["trials"]) out.push_back(summary_from_json(t));
  }
  return out;
}

void export_report(const std::vector<TrialSummary>& summaries, const std::string& out_dir,
                   int bootstrap_resamples, uint64_t bootstrap_seed) {
  fs::create_directories(out_dir);
  const fs::path root(out_dir);

  std::vector<const TrialSummary*> ok;
  for (const auto& s : summaries) {
    if (!s.failed) ok.push_back(&s);
  }

  {
    auto out = open_out(root / "metrics.csv");
    out << "method,mode,level_psi,level_r,seed,tr_er_psi,ss_er_psi,tr_er_p,ss_er_p\n";
    for (const auto* s : ok) {
      out << s->method << ',' << s->mode << ',' << fmt(s->level_psi) << ','
          << fmt(s->level_r) << ',' << s->seed << ',' << fmt(s->metrics.tr_er_psi) << ','
          << fmt(s->metrics.ss_er_psi) << ',' << fmt(s->metrics.tr_er_p) << ','
          << fmt(s->metrics.ss_er_p) << '\n';
    }
  }

  // method-mode groups in first-appearance order
  std::vector<std::pair<std::string, std::string>> groups;
  auto group_key = [&](const TrialSummary& s) {
    return std::make_pair(s.method, s.mode);
  };
  for (const auto* s : ok) {
    if (std::find(groups.begin(), groups.end(), group_key(*s)) == groups.end()) {
      groups.push_back(group_key(*s));
    }
  }
  auto group_samples = [&](const std::pair<std::string, std::string>& g,
                           const std::string& metric) {
    std::vector<double> vals;
    for (const auto* s : ok) {
      if (group_key(*s) == g) vals.push_back(s->metrics.by_name(metric));
    }
    return vals;
  };

  {
    auto out = open_out(root / "violin_data.csv");
    out << "method,mode,metric,value\n";
    for (const auto& g : groups) {
      for (const auto& metric : kMetricNames) {
        for (double v : group_samples(g, metric)) {
          out << g.first << ',' << g.second << ',' << metric << ',' << fmt(v) << '\n';
        }
      }
    }
  }

  {
    auto out = open_out(root / "bootstrap.csv");
    out << "metric,mode,method_a,method_b,nominal_diff,p_value,n_resamples\n";
    Rng rng(bootstrap_seed);
    for (const auto& metric : kMetricNames) {
      for (size_t i = 0; i < groups.size(); ++i) {
        for (size_t j = i + 1; j < groups.size(); ++j) {
          if (groups[i].second != groups[j].second) continue;  // same mode only
          const auto a = group_samples(groups[i], metric);
          const auto b = group_samples(groups[j], metric);
          if (a.empty() || b.empty()) continue;
          const BootstrapResult r = bootstrap_compare(a, b, bootstrap_resamples, rng);
          out << metric << ',' << groups[i].second << ',' << groups[i].first << ','
              << groups[j].first << ',' << fmt(r.nominal_diff) << ',' << fmt(r.p_value)
              << ',' << r.n_resamples << '\n';
        }
      }
    }
  }

  {
    auto out = open_out(root / "iterations.csv");
    out << "method,mode,iterations,count\n";
    for (const auto& g : groups) {
      std::map<int, long long> hist;
      for (const auto* s : ok) {
        if (group_key(*s) != g || !s->kernel_filter) continue;
        for (const auto& [it, c] : s->iteration_histogram) hist[it] += c;
      }
      for (const auto& [it, c] : hist) {
        out << g.first << ',' << g.second << ',' << it << ',' << c << '\n';
      }
    }
  }

  {
    auto out = open_out(root / "timings.csv");
    out << "method,mode,mean_step_time_ns\n";
    for (const auto& g : groups) {
      double sum = 0.0;
      int count = 0;
      for (const auto* s : ok) {
        if (group_key(*s) != g) continue;
        sum += s->mean_step_time_ns;
        ++count;
      }
      if (count > 0) {
        out << g.first << ',' << g.second << ',' << fmt(sum / count) << '\n';
      }
    }
  }

  {
    json agg = json::object();
    for (const auto& g : groups) {
      json per_metric = json::object();
      for (const auto& metric : kMetricNames) {
        const auto vals = group_samples(g, metric);
        double mean = 0.0;
        for (double v : vals) mean += v;
        if (!vals.empty()) mean /= vals.size();
        per_metric[metric] = mean;
        per_metric["n_trials"] = vals.size();
      }
      agg[g.first + "/" + g.second] = per_metric;
    }
    std::set<std::string> digests;
    for (const auto* s : ok) digests.insert(s->digest);
    json j;
    j["config_digests"] = digests;
    j["aggregate"] = agg;
    auto out = open_out(root / "summary.json");
    out << j.dump(2) << "\n";
  }
}

}  // namespace crl
