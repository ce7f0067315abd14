#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "rhc/dataset.hpp"
#include "rhc/engine.hpp"
#include "rhc/inference.hpp"
#include "rhc/metrics.hpp"
#include "rhc/parallel.hpp"
#include "rhc/selection.hpp"

namespace rhc {

// One experiment = (spec, seed); replication r draws its stream from
// substream_seed(seed, r), so results are bit-reproducible and independent
// of execution order.
struct ExperimentSpec {
  std::string kind;  // null_calibration | power_curve | fwer | k_histogram | stability | quality_sweep
  int replications = 2000;

  // generator parameters
  std::string generator = "two";  // two | three | circular
  int n = 30;
  int p = 2;
  double delta = 0.0;
  double sigma = 1.0;
  int k_star = 2;
  double radius = 6.0;

  // method parameters
  Linkage linkage = Linkage::complete;
  double tau = 0.1;
  int k_target = 2;             // dendrogram cut for per-merge tests
  std::vector<double> taus;     // fwer / quality sweep grids (defaults below)
  double alpha = 0.05;
  double decay = 0.5;
  int n_min = 0;                // <= 0: ceil(0.1 n)
  int n_star = 0;               // <= 0: ceil(0.4 n)
  int k_max = 10;
  int b_refs = 50;
  bool naive = false;           // constant-weight override
  int batch = 200;              // replications per Type-I batch
  QuadratureConfig quad;

  std::uint64_t seed = 1;
  int scale = 1;  // divides replication counts for quick desk runs
  int threads = 1;

  int effective_reps() const { return std::max(1, replications / std::max(1, scale)); }
};

inline nlohmann::json spec_to_json(const ExperimentSpec& s) {
  return {{"kind", s.kind},
          {"replications", s.replications},
          {"generator", s.generator},
          {"n", s.n},
          {"p", s.p},
          {"delta", s.delta},
          {"sigma", s.sigma},
          {"k_star", s.k_star},
          {"radius", s.radius},
          {"linkage", to_string(s.linkage)},
          {"tau", s.tau},
          {"k_target", s.k_target},
          {"taus", s.taus},
          {"alpha", s.alpha},
          {"decay", s.decay},
          {"n_min", s.n_min},
          {"n_star", s.n_star},
          {"k_max", s.k_max},
          {"b_refs", s.b_refs},
          {"naive", s.naive},
          {"batch", s.batch},
          {"quad", {{"panels", s.quad.panels}, {"nodes", s.quad.nodes}}},
          {"seed", s.seed},
          {"scale", s.scale}};
}

namespace detail {

inline std::pair<DataMatrix, GroundTruth> generate(const ExperimentSpec& s, std::uint64_t seed) {
  if (s.generator == "two") return generate_two_cluster(s.n, s.delta, s.sigma, s.p, seed);
  if (s.generator == "three") return generate_three_cluster(s.n, s.delta, s.sigma, seed);
  if (s.generator == "circular")
    return generate_circular(s.n, s.k_star, s.radius, s.sigma, seed);
  throw std::invalid_argument("unknown generator '" + s.generator + "'");
}

inline std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.10g", v);
  return buf;
}

}  // namespace detail

// True iff some merge strictly before step t_star joins rows with different
// ground-truth labels (complement of the cluster-preservation event).
inline bool detect_cross_merge(const MergeTrace& trace, const GroundTruth& truth, int t_star) {
  for (const auto& rec : trace.records) {
    if (rec.step >= t_star) break;
    const int label = truth.labels[rec.members_a.front()];
    for (int i : rec.members_a)
      if (truth.labels[i] != label) return true;
    for (int i : rec.members_b)
      if (truth.labels[i] != label) return true;
  }
  return false;
}

// ---- null calibration (p-value ECDF / KS / Type-I batches) ----

struct NullCalibrationResult {
  std::vector<double> p_values;  // one per replication, replication order
  double ks = 0.0;               // sup distance of the ECDF to uniform
  double type_i = 0.0;           // overall fraction with p <= alpha
  std::vector<double> type_i_batches;
};

inline double ks_to_uniform(std::vector<double> p) {
  std::sort(p.begin(), p.end());
  const double n = static_cast<double>(p.size());
  double ks = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    ks = std::max(ks, (i + 1) / n - p[i]);
    ks = std::max(ks, p[i] - i / n);
  }
  return ks;
}

inline NullCalibrationResult run_null_calibration(const ExperimentSpec& spec) {
  if (spec.k_target < 2) throw std::invalid_argument("run_null_calibration: need k_target >= 2");
  const int reps = spec.effective_reps();
  NullCalibrationResult out;
  out.p_values.assign(reps, 0.0);
  QuadratureConfig quad = spec.quad;
  quad.constant_weight = spec.naive;
  parallel_for(reps, spec.threads, [&](std::size_t r) {
    const std::uint64_t rep_seed = substream_seed(spec.seed, r);
    auto [x, truth] = detail::generate(spec, rep_seed);
    const RandomizationConfig rc{spec.tau, spec.linkage, substream_seed(rep_seed, 1)};
    // Test the K resulting clusters: the merge that would join them is one
    // step past the K-cluster cut.
    const MergeTrace trace = run_clustering(x, spec.k_target - 1, rc);
    const int t = x.n() - spec.k_target + 1;
    out.p_values[r] = p_value_f(x, trace, t, quad).p_value;
  });
  out.ks = ks_to_uniform(out.p_values);
  int hits = 0;
  for (double p : out.p_values) hits += p <= spec.alpha;
  out.type_i = static_cast<double>(hits) / reps;
  const int batch = std::max(1, spec.batch / std::max(1, spec.scale));
  for (int start = 0; start + batch <= reps; start += batch) {
    int b_hits = 0;
    for (int i = start; i < start + batch; ++i) b_hits += out.p_values[i] <= spec.alpha;
    out.type_i_batches.push_back(static_cast<double>(b_hits) / batch);
  }
  return out;
}

// ---- power as a function of effect size ----

struct PowerBin {
  double lo = 0.0, hi = 0.0;
  int rejections = 0, trials = 0;
  double power = 0.0, ci_lo = 0.0, ci_hi = 0.0;
};

struct PowerCurveResult {
  std::vector<PowerBin> bins;
  std::vector<double> effect_sizes;  // per outcome
  std::vector<char> rejected;
};

// Effect size of the tested merge: the linkage dissimilarity evaluated on
// the true means (zero under the null).
inline double effect_size(const MergeTrace& trace, int t, const GroundTruth& truth,
                          Linkage linkage) {
  if (!truth.mu) throw std::invalid_argument("effect_size: ground truth has no means");
  const DissimilarityMatrix d_mu = pairwise_dissimilarity(DataMatrix(*truth.mu));
  const auto& rec = trace.records[t - 1];
  return linkage_dissimilarity(linkage, rec.members_a, rec.members_b, d_mu);
}

inline PowerCurveResult run_power_curve(const ExperimentSpec& spec) {
  std::vector<double> deltas;
  for (int i = 0; i < 9; ++i) deltas.push_back(1.0 + 9.0 * i / 8.0);  // 9 even points on [1,10]
  const int reps = spec.effective_reps();
  const std::size_t total = deltas.size() * static_cast<std::size_t>(reps);

  PowerCurveResult out;
  out.effect_sizes.assign(total, 0.0);
  out.rejected.assign(total, 0);
  QuadratureConfig quad = spec.quad;
  quad.constant_weight = spec.naive;
  if (spec.k_target < 2) throw std::invalid_argument("run_power_curve: need k_target >= 2");
  parallel_for(total, spec.threads, [&](std::size_t idx) {
    ExperimentSpec local = spec;
    local.delta = deltas[idx / static_cast<std::size_t>(reps)];
    const std::uint64_t rep_seed = substream_seed(spec.seed, idx);
    auto [x, truth] = detail::generate(local, rep_seed);
    const RandomizationConfig rc{spec.tau, spec.linkage, substream_seed(rep_seed, 1)};
    const MergeTrace trace = run_clustering(x, spec.k_target - 1, rc);
    const int t = x.n() - spec.k_target + 1;
    const TestResult res = p_value_f(x, trace, t, quad);
    out.effect_sizes[idx] = effect_size(trace, t, truth, spec.linkage);
    out.rejected[idx] = res.p_value < spec.alpha ? 1 : 0;
  });

  double max_es = 0.0;
  for (double es : out.effect_sizes) max_es = std::max(max_es, es);
  if (max_es <= 0.0) max_es = 1.0;
  out.bins.assign(10, PowerBin{});
  const double width = max_es / 10.0;
  for (int b = 0; b < 10; ++b) {
    out.bins[b].lo = b * width;
    out.bins[b].hi = (b + 1) * width;
  }
  for (std::size_t i = 0; i < total; ++i) {
    int b = std::min(9, static_cast<int>(out.effect_sizes[i] / width));
    out.bins[b].trials += 1;
    out.bins[b].rejections += out.rejected[i];
  }
  for (auto& bin : out.bins) {
    if (bin.trials == 0) continue;
    bin.power = static_cast<double>(bin.rejections) / bin.trials;
    const double se = std::sqrt(bin.power * (1.0 - bin.power) / bin.trials);
    bin.ci_lo = std::max(0.0, bin.power - 1.96 * se);
    bin.ci_hi = std::min(1.0, bin.power + 1.96 * se);
  }
  return out;
}

// ---- family-wise error of the alpha-spending procedure ----

struct FwerRow {
  std::string method;  // "naive" or "rc"
  double tau = 0.0;
  int reps = 0;
  int k_gt_1 = 0;
  double fraction = 0.0;
};

// Global-null K-hat > 1 frequency per randomization level. The naive row is
// the deterministic clusterer tested with the constant-weight p-values.
inline std::vector<FwerRow> run_fwer(const ExperimentSpec& spec) {
  std::vector<double> taus = spec.taus;
  if (taus.empty()) taus = {spec.tau};
  const int reps = spec.effective_reps();

  std::vector<FwerRow> rows;
  std::vector<std::pair<bool, double>> levels;  // (naive, tau)
  levels.emplace_back(true, 0.0);
  for (double t : taus) levels.emplace_back(false, t);

  for (std::size_t lvl = 0; lvl < levels.size(); ++lvl) {
    const auto [is_naive, tau] = levels[lvl];
    std::vector<char> over(reps, 0);
    parallel_for(reps, spec.threads, [&, lvl_seed = substream_seed(spec.seed, lvl)](std::size_t r) {
      const std::uint64_t rep_seed = substream_seed(lvl_seed, r);
      auto [x, truth] = detail::generate(spec, rep_seed);
      SelectionConfig cfg;
      cfg.linkage = spec.linkage;
      cfg.tau = tau;
      cfg.alpha_total = spec.alpha;
      cfg.decay = spec.decay;
      cfg.n_min = spec.n_min;
      cfg.n_star = spec.n_star;
      cfg.rng_seed = substream_seed(rep_seed, 1);
      cfg.quad = spec.quad;
      cfg.quad.constant_weight = is_naive;
      const auto [est, trace] = estimate_k(x, cfg);
      over[r] = est.k_hat > 1 ? 1 : 0;
    });
    FwerRow row;
    row.method = is_naive ? "naive" : "rc";
    row.tau = tau;
    row.reps = reps;
    for (char c : over) row.k_gt_1 += c;
    row.fraction = static_cast<double>(row.k_gt_1) / reps;
    rows.push_back(row);
  }
  return rows;
}

// ---- K-hat histograms: alpha-spending vs gap statistic ----

struct KHistogramResult {
  std::map<int, int> ours, gap;
  int reps = 0;
  int overest_joint = 0;  // {K_hat > K*} and no cross merge before t*
  std::vector<int> ours_per_rep, gap_per_rep;
  std::vector<char> cross_per_rep;
};

inline KHistogramResult run_k_histogram(const ExperimentSpec& spec) {
  const int reps = spec.effective_reps();
  KHistogramResult out;
  out.reps = reps;
  out.ours_per_rep.assign(reps, 0);
  out.gap_per_rep.assign(reps, 0);
  out.cross_per_rep.assign(reps, 0);
  std::vector<char> joint(reps, 0);
  parallel_for(reps, spec.threads, [&](std::size_t r) {
    const std::uint64_t rep_seed = substream_seed(spec.seed, r);
    auto [x, truth] = detail::generate(spec, rep_seed);
    SelectionConfig cfg;
    cfg.linkage = spec.linkage;
    cfg.tau = spec.tau;
    cfg.alpha_total = spec.alpha;
    cfg.decay = spec.decay;
    cfg.n_min = spec.n_min;
    cfg.n_star = spec.n_star;
    cfg.rng_seed = substream_seed(rep_seed, 1);
    cfg.quad = spec.quad;
    cfg.quad.constant_weight = spec.naive;
    const auto [est, trace] = estimate_k(x, cfg);
    const GapResult gr =
        gap_statistic(x, spec.k_max, spec.b_refs, spec.linkage, substream_seed(rep_seed, 2));
    out.ours_per_rep[r] = est.k_hat;
    out.gap_per_rep[r] = gr.k_hat;
    const int t_star = x.n() - truth.k_star + 1;
    out.cross_per_rep[r] = detect_cross_merge(trace, truth, t_star) ? 1 : 0;
    joint[r] = (est.k_hat > truth.k_star && !out.cross_per_rep[r]) ? 1 : 0;
  });
  for (int r = 0; r < reps; ++r) {
    out.ours[out.ours_per_rep[r]] += 1;
    out.gap[out.gap_per_rep[r]] += 1;
    out.overest_joint += joint[r];
  }
  return out;
}

// ---- stability of repeated randomized runs on a fixed dataset ----

inline CooccurrenceMatrix run_stability(const DataMatrix& x, int k, double tau, Linkage linkage,
                                        int runs, std::uint64_t seed, int threads = 1) {
  if (runs < 1) throw std::invalid_argument("run_stability: need at least one run");
  std::vector<std::vector<int>> labels(runs);
  parallel_for(runs, threads, [&](std::size_t r) {
    const RandomizationConfig rc{tau, linkage, substream_seed(seed, r)};
    labels[r] = run_clustering(x, k, rc).final_labels;
  });
  return cooccurrence(labels);
}

// ---- clustering quality across randomization levels ----

struct QualityRow {
  double tau = 0.0;
  std::vector<double> wcss_tss_values, ari_values;  // replication order
  double wcss_median = 0.0, ari_median = 0.0;
};

inline double median_of(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

inline std::vector<QualityRow> run_quality_sweep(const ExperimentSpec& spec) {
  std::vector<double> taus = spec.taus;
  if (taus.empty()) taus = {0.0, 0.025, 0.05, 0.1, 0.25, 0.5, 1.0, 5.0};
  const int reps = spec.effective_reps();
  std::vector<QualityRow> rows(taus.size());
  for (std::size_t ti = 0; ti < taus.size(); ++ti) {
    rows[ti].tau = taus[ti];
    rows[ti].wcss_tss_values.assign(reps, 0.0);
    rows[ti].ari_values.assign(reps, 0.0);
  }
  parallel_for(static_cast<std::size_t>(reps) * taus.size(), spec.threads, [&](std::size_t idx) {
    const std::size_t ti = idx / reps;
    const std::size_t r = idx % reps;
    const std::uint64_t rep_seed = substream_seed(spec.seed, r);  // same data across taus
    auto [x, truth] = detail::generate(spec, rep_seed);
    const RandomizationConfig rc{taus[ti], spec.linkage, substream_seed(rep_seed, ti + 1)};
    const MergeTrace trace = run_clustering(x, spec.k_target, rc);
    rows[ti].wcss_tss_values[r] = wcss_tss(x, trace.final_labels);
    rows[ti].ari_values[r] = ari(trace.final_labels, truth.labels);
  });
  for (auto& row : rows) {
    row.wcss_median = median_of(row.wcss_tss_values);
    row.ari_median = median_of(row.ari_values);
  }
  return rows;
}

// ---- CSV / manifest emitters ----

namespace detail {

inline std::ofstream open_out(const std::filesystem::path& dir, const std::string& name) {
  std::filesystem::create_directories(dir);
  std::ofstream out(dir / name);
  if (!out) throw io_error("cannot write " + (dir / name).string());
  return out;
}

}  // namespace detail

inline void write_manifest(const std::filesystem::path& dir, const ExperimentSpec& spec,
                           const nlohmann::json& results) {
  auto out = detail::open_out(dir, "manifest.json");
  nlohmann::json j{{"schema_version", 1}, {"experiment", spec_to_json(spec)}, {"results", results}};
  out << j.dump(2) << "\n";
}

inline void emit_null_calibration(const std::filesystem::path& dir, const ExperimentSpec& spec,
                                  const NullCalibrationResult& res) {
  {
    auto out = detail::open_out(dir, "pvalues.csv");
    out << "rep,p_value\n";
    for (std::size_t r = 0; r < res.p_values.size(); ++r)
      out << r << "," << detail::fmt(res.p_values[r]) << "\n";
  }
  {
    auto out = detail::open_out(dir, "ecdf.csv");
    out << "p,ecdf\n";
    std::vector<double> sorted(res.p_values);
    std::sort(sorted.begin(), sorted.end());
    for (std::size_t i = 0; i < sorted.size(); ++i)
      out << detail::fmt(sorted[i]) << "," << detail::fmt((i + 1.0) / sorted.size()) << "\n";
  }
  {
    auto out = detail::open_out(dir, "typei.csv");
    out << "batch,type_i\n";
    for (std::size_t b = 0; b < res.type_i_batches.size(); ++b)
      out << b << "," << detail::fmt(res.type_i_batches[b]) << "\n";
  }
  write_manifest(dir, spec, {{"ks", res.ks}, {"type_i", res.type_i}});
}

inline void emit_power_curve(const std::filesystem::path& dir, const ExperimentSpec& spec,
                             const PowerCurveResult& res) {
  {
    auto out = detail::open_out(dir, "power_bins.csv");
    out << "bin_lo,bin_hi,trials,rejections,power,ci_lo,ci_hi\n";
    for (const auto& b : res.bins)
      out << detail::fmt(b.lo) << "," << detail::fmt(b.hi) << "," << b.trials << ","
          << b.rejections << "," << detail::fmt(b.power) << "," << detail::fmt(b.ci_lo) << ","
          << detail::fmt(b.ci_hi) << "\n";
  }
  {
    auto out = detail::open_out(dir, "outcomes.csv");
    out << "effect_size,rejected\n";
    for (std::size_t i = 0; i < res.effect_sizes.size(); ++i)
      out << detail::fmt(res.effect_sizes[i]) << "," << static_cast<int>(res.rejected[i]) << "\n";
  }
  write_manifest(dir, spec, {{"outcomes", res.effect_sizes.size()}});
}

inline void emit_fwer(const std::filesystem::path& dir, const ExperimentSpec& spec,
                      const std::vector<FwerRow>& rows) {
  auto out = detail::open_out(dir, "fwer.csv");
  out << "method,tau,reps,k_gt_1,fraction\n";
  for (const auto& r : rows)
    out << r.method << "," << detail::fmt(r.tau) << "," << r.reps << "," << r.k_gt_1 << ","
        << detail::fmt(r.fraction) << "\n";
  nlohmann::json res = nlohmann::json::array();
  for (const auto& r : rows)
    res.push_back({{"method", r.method}, {"tau", r.tau}, {"fraction", r.fraction}});
  write_manifest(dir, spec, {{"rows", res}});
}

inline void emit_k_histogram(const std::filesystem::path& dir, const ExperimentSpec& spec,
                             const KHistogramResult& res) {
  {
    auto out = detail::open_out(dir, "k_histogram.csv");
    out << "k,count_ours,count_gap\n";
    std::map<int, std::pair<int, int>> merged;
    for (const auto& [k, c] : res.ours) merged[k].first = c;
    for (const auto& [k, c] : res.gap) merged[k].second = c;
    for (const auto& [k, pair] : merged)
      out << k << "," << pair.first << "," << pair.second << "\n";
  }
  {
    auto out = detail::open_out(dir, "k_details.csv");
    out << "rep,k_ours,k_gap,cross_merge\n";
    for (int r = 0; r < res.reps; ++r)
      out << r << "," << res.ours_per_rep[r] << "," << res.gap_per_rep[r] << ","
          << static_cast<int>(res.cross_per_rep[r]) << "\n";
  }
  write_manifest(dir, spec,
                 {{"reps", res.reps}, {"overest_joint", res.overest_joint}});
}

inline void emit_cooccurrence(const std::filesystem::path& dir, const std::string& name,
                              const CooccurrenceMatrix& m) {
  auto out = detail::open_out(dir, name);
  for (int i = 0; i < m.n; ++i) {
    for (int j = 0; j < m.n; ++j) out << (j ? "," : "") << detail::fmt(m(i, j));
    out << "\n";
  }
}

inline void emit_quality_sweep(const std::filesystem::path& dir, const ExperimentSpec& spec,
                               const std::vector<QualityRow>& rows) {
  {
    auto out = detail::open_out(dir, "quality_raw.csv");
    out << "tau,rep,wcss_tss,ari\n";
    for (const auto& row : rows)
      for (std::size_t r = 0; r < row.wcss_tss_values.size(); ++r)
        out << detail::fmt(row.tau) << "," << r << "," << detail::fmt(row.wcss_tss_values[r])
            << "," << detail::fmt(row.ari_values[r]) << "\n";
  }
  {
    auto out = detail::open_out(dir, "quality.csv");
    out << "tau,wcss_tss_median,ari_median\n";
    for (const auto& row : rows)
      out << detail::fmt(row.tau) << "," << detail::fmt(row.wcss_median) << ","
          << detail::fmt(row.ari_median) << "\n";
  }
  write_manifest(dir, spec, nlohmann::json::object());
}

}  // namespace rhc
