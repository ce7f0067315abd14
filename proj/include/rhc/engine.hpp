#pragma once

#include <cmath>
#include <cstdint>
#include <json.hpp>
#include <string>
#include <vector>

#include "rhc/linkage.hpp"
#include "rhc/rng.hpp"

namespace rhc {

struct RandomizationConfig {
  double tau = 0.1;  // 0 = deterministic greedy mode
  Linkage linkage = Linkage::complete;
  std::uint64_t rng_seed = 0;
};

struct MergeRecord {
  int step = 0;  // 1-based
  std::vector<int> members_a, members_b;  // sorted rows; members_a.front() < members_b.front()
  double dissimilarity = 0.0;
  double tau_t = 0.0;      // realized temperature (tau * mean candidate dissimilarity)
  double log_prob = 0.0;   // log probability of this merge under the step softmax
  int candidate_count = 0;
};

struct MergeTrace {
  RandomizationConfig config;
  int n = 0;
  std::vector<MergeRecord> records;       // length n - K
  std::vector<int> final_labels;          // 1..K, canonical cluster order
};

struct SoftmaxResult {
  std::vector<double> probs;
  double tau_t = 0.0;
};

// Softmax of -d/tau_t with tau_t = tau * mean(d), computed by shifting by the
// minimum dissimilarity. All-zero dissimilarities give the uniform vector.
inline SoftmaxResult merge_probabilities(const std::vector<double>& dissimilarities, double tau) {
  if (dissimilarities.empty())
    throw std::invalid_argument("merge_probabilities: empty candidate list");
  if (!(tau > 0.0))
    throw std::invalid_argument("merge_probabilities: tau must be > 0 (deterministic mode bypasses this)");
  const std::size_t m = dissimilarities.size();
  double dmin = dissimilarities[0], sum = 0.0;
  for (double d : dissimilarities) {
    if (!std::isfinite(d)) throw std::invalid_argument("merge_probabilities: non-finite dissimilarity");
    dmin = std::min(dmin, d);
    sum += d;
  }
  SoftmaxResult out;
  out.tau_t = tau * (sum / m);
  out.probs.resize(m);
  if (out.tau_t == 0.0) {  // every candidate at distance zero
    std::fill(out.probs.begin(), out.probs.end(), 1.0 / static_cast<double>(m));
    return out;
  }
  double z = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    out.probs[i] = std::exp(-(dissimilarities[i] - dmin) / out.tau_t);
    z += out.probs[i];
  }
  for (double& p : out.probs) p /= z;
  return out;
}

inline SoftmaxResult merge_probabilities(const std::vector<CandidateMerge>& candidates, double tau) {
  std::vector<double> d;
  d.reserve(candidates.size());
  for (const auto& c : candidates) d.push_back(c.dissimilarity);
  return merge_probabilities(d, tau);
}

// Log probability of candidate `chosen` under the step softmax, without
// materializing the probability vector. tau_t reported if requested.
inline double softmax_log_prob(const std::vector<double>& dissimilarities, double tau, int chosen,
                               double* tau_t_out = nullptr) {
  const std::size_t m = dissimilarities.size();
  double dmin = dissimilarities[0], sum = 0.0;
  for (double d : dissimilarities) {
    dmin = std::min(dmin, d);
    sum += d;
  }
  const double tau_t = tau * (sum / m);
  if (tau_t_out) *tau_t_out = tau_t;
  if (tau_t == 0.0) return -std::log(static_cast<double>(m));
  double z = 0.0;
  for (double d : dissimilarities) z += std::exp(-(d - dmin) / tau_t);
  return -(dissimilarities[chosen] - dmin) / tau_t - std::log(z);
}

// Inverse-CDF sampling over the canonical candidate order from one uniform.
inline int sample_merge_u(const std::vector<double>& probs, double u) {
  double cum = 0.0;
  int last_positive = -1;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    if (probs[i] > 0.0) last_positive = static_cast<int>(i);
    cum += probs[i];
    if (u < cum) return static_cast<int>(i);
  }
  return last_positive;  // u landed past the (rounded) total mass
}

inline int sample_merge(const std::vector<double>& probs, Rng& rng) {
  if (probs.empty()) throw std::invalid_argument("sample_merge: empty probability vector");
  double total = 0.0;
  for (double p : probs) total += p;
  if (std::fabs(total - 1.0) > 1e-9)
    throw std::invalid_argument("sample_merge: probabilities must sum to 1");
  return sample_merge_u(probs, rng.uniform01());
}

// Randomized agglomerative clustering: n - K sampled merges, full trace.
// Step t samples with an independent substream derived from (seed, t), so
// traces are reproducible regardless of where the run is stopped.
inline MergeTrace run_clustering(const DataMatrix& x, int k, const RandomizationConfig& cfg) {
  const int n = x.n();
  if (k < 1 || k > n) throw std::invalid_argument("run_clustering: need 1 <= K <= n");
  if (!(cfg.tau >= 0.0) || !std::isfinite(cfg.tau))
    throw std::invalid_argument("run_clustering: tau must be finite and >= 0");

  MergeTrace trace;
  trace.config = cfg;
  trace.n = n;
  trace.records.reserve(n - k);

  const DissimilarityMatrix base = pairwise_dissimilarity(x);
  LinkageMatrix lm(base, cfg.linkage);
  std::vector<double> values;

  for (int t = 1; t <= n - k; ++t) {
    lm.candidate_values(values);
    const int m_clusters = lm.count();
    int chosen;
    double tau_t = 0.0, log_prob = 0.0;
    if (cfg.tau == 0.0) {
      chosen = 0;
      for (std::size_t i = 1; i < values.size(); ++i)
        if (values[i] < values[chosen]) chosen = static_cast<int>(i);
    } else {
      const SoftmaxResult sm = merge_probabilities(values, cfg.tau);
      Rng step_rng(substream_seed(cfg.rng_seed, static_cast<std::uint64_t>(t)));
      chosen = sample_merge(sm.probs, step_rng);
      tau_t = sm.tau_t;
      log_prob = softmax_log_prob(values, cfg.tau, chosen);
    }

    // Decode the canonical candidate index into the slot pair.
    const auto& alive = lm.alive();
    int i = 0, rem = chosen;
    while (rem >= m_clusters - 1 - i) {
      rem -= m_clusters - 1 - i;
      ++i;
    }
    const int slot_a = alive[i], slot_b = alive[i + 1 + rem];

    MergeRecord rec;
    rec.step = t;
    rec.members_a = lm.members(slot_a);
    rec.members_b = lm.members(slot_b);
    rec.dissimilarity = values[chosen];
    rec.tau_t = tau_t;
    rec.log_prob = log_prob;
    rec.candidate_count = static_cast<int>(values.size());
    trace.records.push_back(std::move(rec));

    lm.merge(slot_a, slot_b);
  }

  trace.final_labels.assign(n, 0);
  int label = 0;
  for (int slot : lm.alive()) {
    ++label;
    for (int row : lm.members(slot)) trace.final_labels[row] = label;
  }
  return trace;
}

// Labels for the partition obtained after n - k merges of the trace.
inline std::vector<int> labels_at_k(const MergeTrace& trace, int k) {
  const int n = trace.n;
  const int merges = n - k;
  if (k < 1 || merges < 0 || merges > static_cast<int>(trace.records.size()))
    throw std::invalid_argument("labels_at_k: trace does not reach the requested K");
  std::vector<int> slot_of_row(n);
  for (int i = 0; i < n; ++i) slot_of_row[i] = i;
  for (int t = 0; t < merges; ++t) {
    const auto& rec = trace.records[t];
    const int target = rec.members_a.front();
    for (int row : rec.members_b) slot_of_row[row] = target;
    for (int row : rec.members_a) slot_of_row[row] = target;
  }
  std::vector<int> slots(slot_of_row);
  std::sort(slots.begin(), slots.end());
  slots.erase(std::unique(slots.begin(), slots.end()), slots.end());
  std::vector<int> labels(n);
  for (int i = 0; i < n; ++i)
    labels[i] = static_cast<int>(std::lower_bound(slots.begin(), slots.end(), slot_of_row[i]) -
                                 slots.begin()) + 1;
  return labels;
}

// ---- stable JSON contract ----

inline nlohmann::json trace_to_json(const MergeTrace& trace) {
  nlohmann::json j;
  j["config"] = {{"tau", trace.config.tau},
                 {"linkage", to_string(trace.config.linkage)},
                 {"rng_seed", trace.config.rng_seed}};
  j["n"] = trace.n;
  nlohmann::json rec;
  auto& step = rec["step"] = nlohmann::json::array();
  auto& ma = rec["members_a"] = nlohmann::json::array();
  auto& mb = rec["members_b"] = nlohmann::json::array();
  auto& dis = rec["dissimilarity"] = nlohmann::json::array();
  auto& taut = rec["tau_t"] = nlohmann::json::array();
  auto& lp = rec["log_prob"] = nlohmann::json::array();
  auto& cc = rec["candidate_count"] = nlohmann::json::array();
  for (const auto& r : trace.records) {
    step.push_back(r.step);
    ma.push_back(r.members_a);
    mb.push_back(r.members_b);
    dis.push_back(r.dissimilarity);
    taut.push_back(r.tau_t);
    lp.push_back(r.log_prob);
    cc.push_back(r.candidate_count);
  }
  j["records"] = std::move(rec);
  j["final_labels"] = trace.final_labels;
  return j;
}

inline MergeTrace trace_from_json(const nlohmann::json& j) {
  MergeTrace trace;
  trace.config.tau = j.at("config").at("tau").get<double>();
  trace.config.linkage = linkage_from_string(j.at("config").at("linkage").get<std::string>());
  trace.config.rng_seed = j.at("config").at("rng_seed").get<std::uint64_t>();
  trace.n = j.at("n").get<int>();
  const auto& rec = j.at("records");
  const auto& step = rec.at("step");
  for (std::size_t i = 0; i < step.size(); ++i) {
    MergeRecord r;
    r.step = step[i].get<int>();
    r.members_a = rec.at("members_a")[i].get<std::vector<int>>();
    r.members_b = rec.at("members_b")[i].get<std::vector<int>>();
    r.dissimilarity = rec.at("dissimilarity")[i].get<double>();
    r.tau_t = rec.at("tau_t")[i].get<double>();
    r.log_prob = rec.at("log_prob")[i].get<double>();
    r.candidate_count = rec.at("candidate_count")[i].get<int>();
    trace.records.push_back(std::move(r));
  }
  trace.final_labels = j.at("final_labels").get<std::vector<int>>();
  return trace;
}

}  // namespace rhc
