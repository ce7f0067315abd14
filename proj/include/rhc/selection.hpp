#pragma once

#include <cmath>
#include <json.hpp>
#include <optional>
#include <set>
#include <utility>
#include <vector>

#include "rhc/engine.hpp"
#include "rhc/errors.hpp"
#include "rhc/inference.hpp"

namespace rhc {

struct AlphaSchedule {
  std::vector<double> alphas;  // length n - 1, strictly decreasing
  double total = 0.0;
};

// alpha_j proportional to exp(-decay * j), j = 1..n-1, normalized to sum to
// alpha_total.
inline AlphaSchedule alpha_sequence(int n, double alpha_total, double decay) {
  if (n < 2) throw std::invalid_argument("alpha_sequence: need n >= 2");
  if (!(alpha_total >= 0.0)) throw std::invalid_argument("alpha_sequence: alpha_total must be >= 0");
  if (!(decay > 0.0)) throw std::invalid_argument("alpha_sequence: decay must be > 0");
  AlphaSchedule out;
  out.total = alpha_total;
  out.alphas.resize(n - 1);
  double sum = 0.0;
  for (int j = 1; j <= n - 1; ++j) {
    out.alphas[j - 1] = std::exp(-decay * j);
    sum += out.alphas[j - 1];
  }
  for (double& a : out.alphas) a *= alpha_total / sum;
  return out;
}

struct KStepRecord {
  int step = 0;
  bool tested = false;
  bool skipped_small = false;  // min merged size <= n_min
  bool degenerate = false;     // test refused (degenerate data); no alpha consumed
  double alpha_used = 0.0;     // 0 when no test was performed
  double p_value = -1.0;       // -1 when no test was performed
};

struct KEstimate {
  int k_hat = 1;
  std::optional<int> stop_step;   // first rejection, when any
  std::vector<KStepRecord> steps; // one record per merge performed
};

struct SelectionConfig {
  Linkage linkage = Linkage::complete;
  double tau = 0.1;
  double alpha_total = 0.05;
  double decay = 0.5;
  // Cutoffs; <= 0 selects the fractional defaults ceil(0.1 n) / ceil(0.4 n).
  int n_min = 0;
  int n_star = 0;
  std::uint64_t rng_seed = 0;
  QuadratureConfig quad;
};

inline int resolve_n_min(const SelectionConfig& cfg, int n) {
  return cfg.n_min > 0 ? cfg.n_min : static_cast<int>(std::ceil(0.1 * n));
}
inline int resolve_n_star(const SelectionConfig& cfg, int n) {
  return cfg.n_star > 0 ? cfg.n_star : static_cast<int>(std::ceil(0.4 * n));
}

// Alpha-spending walk along an existing trace with a caller-supplied p-value
// oracle (step -> p). Exposed separately so the spending logic can be
// exercised with stub p-values.
template <class PValueFn>
inline KEstimate spend_alpha(const MergeTrace& trace, const AlphaSchedule& schedule, int n_min,
                             int n_star, PValueFn&& p_value_at) {
  const int n = trace.n;
  std::multiset<double> available(schedule.alphas.begin(), schedule.alphas.end());
  KEstimate est;
  for (const auto& rec : trace.records) {
    KStepRecord step;
    step.step = rec.step;
    const int smaller =
        static_cast<int>(std::min(rec.members_a.size(), rec.members_b.size()));
    if (smaller <= n_min) {
      step.skipped_small = true;
      est.steps.push_back(step);
      continue;
    }
    if (available.empty()) {  // budget exhausted; nothing left to test against
      est.steps.push_back(step);
      continue;
    }
    const double alpha_t =
        smaller <= n_star ? *available.begin() : *std::prev(available.end());
    double p;
    try {
      p = p_value_at(rec.step);
    } catch (const degenerate_data_error&) {
      step.degenerate = true;  // skip, budget untouched
      est.steps.push_back(step);
      continue;
    }
    available.erase(smaller <= n_star ? available.begin() : std::prev(available.end()));
    step.tested = true;
    step.alpha_used = alpha_t;
    step.p_value = p;
    est.steps.push_back(step);
    if (p < alpha_t) {
      est.stop_step = rec.step;
      est.k_hat = n - rec.step + 1;
      return est;
    }
  }
  est.k_hat = 1;  // no rejection
  return est;
}

// Algorithm: run the randomized clustering to a single cluster, then walk the
// merges in order, testing each merge whose smaller cluster exceeds n_min at
// an adaptively chosen level, stopping at the first rejection.
inline std::pair<KEstimate, MergeTrace> estimate_k(const DataMatrix& x,
                                                   const SelectionConfig& cfg) {
  const int n = x.n();
  RandomizationConfig rc{cfg.tau, cfg.linkage, cfg.rng_seed};
  MergeTrace trace = run_clustering(x, 1, rc);
  const AlphaSchedule schedule = alpha_sequence(n, cfg.alpha_total, cfg.decay);
  KEstimate est = spend_alpha(trace, schedule, resolve_n_min(cfg, n), resolve_n_star(cfg, n),
                              [&](int step) { return p_value_f(x, trace, step, cfg.quad).p_value; });
  return {std::move(est), std::move(trace)};
}

inline nlohmann::json k_estimate_to_json(const KEstimate& est) {
  nlohmann::json steps = nlohmann::json::array();
  for (const auto& s : est.steps) {
    steps.push_back({{"step", s.step},
                     {"tested", s.tested},
                     {"skipped_small", s.skipped_small},
                     {"degenerate", s.degenerate},
                     {"alpha_used", s.alpha_used},
                     {"p_value", s.p_value}});
  }
  nlohmann::json j{{"k_hat", est.k_hat}, {"steps", std::move(steps)}};
  if (est.stop_step)
    j["stop_step"] = *est.stop_step;
  else
    j["stop_step"] = nullptr;
  return j;
}

}  // namespace rhc
