#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>
#include <vector>

#include "rhc/dataset.hpp"
#include "rhc/engine.hpp"
#include "rhc/errors.hpp"
#include "rhc/rng.hpp"

namespace rhc {

// Relabels cluster ids to 1..K in order of first appearance.
inline std::vector<int> canonicalize_labels(const std::vector<int>& labels) {
  std::map<int, int> remap;
  std::vector<int> out(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    auto [it, inserted] = remap.try_emplace(labels[i], static_cast<int>(remap.size()) + 1);
    out[i] = it->second;
  }
  return out;
}

// Within-cluster over total sum of squares, in [0, 1].
inline double wcss_tss(const DataMatrix& x, const std::vector<int>& labels) {
  if (static_cast<int>(labels.size()) != x.n())
    throw std::invalid_argument("wcss_tss: label length mismatch");
  const Eigen::RowVectorXd grand = x.values.colwise().mean();
  const double tss = (x.values.rowwise() - grand).squaredNorm();
  if (!(tss > 0.0)) throw degenerate_data_error("wcss_tss: TSS = 0 (all points identical)");

  std::map<int, std::vector<int>> groups;
  for (std::size_t i = 0; i < labels.size(); ++i) groups[labels[i]].push_back(static_cast<int>(i));
  double wcss = 0.0;
  for (const auto& [label, rows] : groups) {
    Eigen::RowVectorXd mean = Eigen::RowVectorXd::Zero(x.p());
    for (int i : rows) mean += x.values.row(i);
    mean /= static_cast<double>(rows.size());
    for (int i : rows) wcss += (x.values.row(i) - mean).squaredNorm();
  }
  return wcss / tss;
}

// Adjusted Rand Index over pair counts. When the expected-index denominator
// vanishes (both partitions trivial the same way): 1 for identical
// partitions, 0 otherwise.
inline double ari(const std::vector<int>& labels_a, const std::vector<int>& labels_b) {
  if (labels_a.size() != labels_b.size()) throw std::invalid_argument("ari: length mismatch");
  const std::size_t n = labels_a.size();
  if (n < 2) throw std::invalid_argument("ari: need n >= 2");

  std::map<std::pair<int, int>, double> joint;
  std::map<int, double> count_a, count_b;
  for (std::size_t i = 0; i < n; ++i) {
    joint[{labels_a[i], labels_b[i]}] += 1.0;
    count_a[labels_a[i]] += 1.0;
    count_b[labels_b[i]] += 1.0;
  }
  auto choose2 = [](double m) { return 0.5 * m * (m - 1.0); };
  double sum_joint = 0.0, sum_a = 0.0, sum_b = 0.0;
  for (const auto& [key, m] : joint) sum_joint += choose2(m);
  for (const auto& [key, m] : count_a) sum_a += choose2(m);
  for (const auto& [key, m] : count_b) sum_b += choose2(m);
  const double total = choose2(static_cast<double>(n));
  const double expected = sum_a * sum_b / total;
  const double max_index = 0.5 * (sum_a + sum_b);
  if (max_index == expected)
    return canonicalize_labels(labels_a) == canonicalize_labels(labels_b) ? 1.0 : 0.0;
  return (sum_joint - expected) / (max_index - expected);
}

struct CooccurrenceMatrix {
  int n = 0;
  int runs = 0;
  std::vector<double> c;  // row-major n*n, entries in [0,1], unit diagonal

  double operator()(int i, int j) const { return c[static_cast<std::size_t>(i) * n + j]; }
};

// Fraction of runs in which each pair lands in the same cluster.
inline CooccurrenceMatrix cooccurrence(const std::vector<std::vector<int>>& runs) {
  if (runs.empty()) throw std::invalid_argument("cooccurrence: need at least one run");
  const std::size_t n = runs.front().size();
  for (const auto& r : runs)
    if (r.size() != n) throw std::invalid_argument("cooccurrence: label length mismatch");
  CooccurrenceMatrix out;
  out.n = static_cast<int>(n);
  out.runs = static_cast<int>(runs.size());
  out.c.assign(n * n, 0.0);
  for (const auto& r : runs) {
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i; j < n; ++j)
        if (r[i] == r[j]) {
          out.c[i * n + j] += 1.0;
          out.c[j * n + i] += (i == j) ? 0.0 : 1.0;
        }
  }
  for (double& v : out.c) v /= static_cast<double>(runs.size());
  return out;
}

struct GapResult {
  int k_hat = 1;
  std::vector<double> gap;     // index K-1
  std::vector<double> s_k;     // sd adjustment including sqrt(1 + 1/B)
  std::vector<double> log_wk;  // observed log W_K
};

namespace detail {

// W_K = total within-cluster sum of squares at the K-cluster cut.
inline double wk(const DataMatrix& x, const std::vector<int>& labels) {
  std::map<int, std::vector<int>> groups;
  for (std::size_t i = 0; i < labels.size(); ++i) groups[labels[i]].push_back(static_cast<int>(i));
  double w = 0.0;
  for (const auto& [label, rows] : groups) {
    Eigen::RowVectorXd mean = Eigen::RowVectorXd::Zero(x.p());
    for (int i : rows) mean += x.values.row(i);
    mean /= static_cast<double>(rows.size());
    for (int i : rows) w += (x.values.row(i) - mean).squaredNorm();
  }
  return w;
}

inline std::vector<double> log_wk_profile(const DataMatrix& x, int k_max, Linkage linkage) {
  const MergeTrace trace = run_clustering(x, 1, {0.0, linkage, 0});
  std::vector<double> out(k_max);
  for (int k = 1; k <= k_max; ++k) {
    const double w = wk(x, labels_at_k(trace, k));
    if (!(w > 0.0)) throw degenerate_data_error("gap_statistic: W_K = 0 at K = " + std::to_string(k));
    out[k - 1] = std::log(w);
  }
  return out;
}

}  // namespace detail

// Gap(K) = E_ref[log W_K] - log W_K with uniform bounding-box references;
// K_hat = min{K : Gap(K) >= Gap(K+1) - s_{K+1}} (k_max when never satisfied).
// W_K comes from the deterministic (tau = 0) clusterer cut at K.
inline GapResult gap_statistic(const DataMatrix& x, int k_max, int b_refs, Linkage linkage,
                               std::uint64_t rng_seed) {
  if (k_max < 1 || k_max >= x.n()) throw std::invalid_argument("gap_statistic: need 1 <= k_max < n");
  if (b_refs < 1) throw std::invalid_argument("gap_statistic: need b_refs >= 1");

  GapResult out;
  out.log_wk = detail::log_wk_profile(x, k_max, linkage);

  const Eigen::RowVectorXd lo = x.values.colwise().minCoeff();
  const Eigen::RowVectorXd hi = x.values.colwise().maxCoeff();
  std::vector<std::vector<double>> ref_log_wk(b_refs);
  for (int b = 0; b < b_refs; ++b) {
    Rng rng(substream_seed(rng_seed, static_cast<std::uint64_t>(b) + 1));
    Eigen::MatrixXd ref(x.n(), x.p());
    for (int i = 0; i < x.n(); ++i)
      for (int j = 0; j < x.p(); ++j) ref(i, j) = lo[j] + (hi[j] - lo[j]) * rng.uniform01();
    ref_log_wk[b] = detail::log_wk_profile(DataMatrix(ref), k_max, linkage);
  }

  out.gap.resize(k_max);
  out.s_k.resize(k_max);
  for (int k = 0; k < k_max; ++k) {
    double mean = 0.0;
    for (int b = 0; b < b_refs; ++b) mean += ref_log_wk[b][k];
    mean /= b_refs;
    double var = 0.0;
    for (int b = 0; b < b_refs; ++b) {
      const double dev = ref_log_wk[b][k] - mean;
      var += dev * dev;
    }
    var /= b_refs;
    out.gap[k] = mean - out.log_wk[k];
    out.s_k[k] = std::sqrt(var) * std::sqrt(1.0 + 1.0 / b_refs);
  }

  out.k_hat = k_max;
  for (int k = 1; k < k_max; ++k) {
    if (out.gap[k - 1] >= out.gap[k] - out.s_k[k]) {
      out.k_hat = k;
      break;
    }
  }
  return out;
}

}  // namespace rhc
