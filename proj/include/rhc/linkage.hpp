#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <iterator>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "rhc/dataset.hpp"
#include "rhc/errors.hpp"

namespace rhc {

enum class Linkage { complete, single, average, minimax };

inline std::string to_string(Linkage k) {
  switch (k) {
    case Linkage::complete: return "complete";
    case Linkage::single: return "single";
    case Linkage::average: return "average";
    case Linkage::minimax: return "minimax";
  }
  return "?";
}

inline Linkage linkage_from_string(const std::string& s) {
  if (s == "complete") return Linkage::complete;
  if (s == "single") return Linkage::single;
  if (s == "average") return Linkage::average;
  if (s == "minimax") return Linkage::minimax;
  throw std::invalid_argument("unknown linkage '" + s + "'");
}

// Symmetric Euclidean distances, zero diagonal.
struct DissimilarityMatrix {
  int n = 0;
  std::vector<double> d;  // row-major n*n

  double operator()(int i, int j) const { return d[static_cast<std::size_t>(i) * n + j]; }
  double& at(int i, int j) { return d[static_cast<std::size_t>(i) * n + j]; }
};

inline DissimilarityMatrix pairwise_dissimilarity(const DataMatrix& x) {
  DissimilarityMatrix out;
  out.n = x.n();
  out.d.assign(static_cast<std::size_t>(out.n) * out.n, 0.0);
  for (int i = 0; i < out.n; ++i)
    for (int j = i + 1; j < out.n; ++j) {
      const double v = (x.values.row(i) - x.values.row(j)).norm();
      out.at(i, j) = v;
      out.at(j, i) = v;
    }
  return out;
}

// Clusters listed in canonical order: ascending smallest member. Union covers
// {0..n-1}; count = n - step.
struct ClusterState {
  std::vector<std::vector<int>> clusters;  // each sorted ascending
  int step = 0;

  static ClusterState singletons(int n) {
    ClusterState s;
    s.clusters.reserve(n);
    for (int i = 0; i < n; ++i) s.clusters.push_back({i});
    return s;
  }

  // Merge the clusters at canonical positions a < b.
  void merge(int a, int b) {
    if (a == b || a < 0 || b < 0 || a >= static_cast<int>(clusters.size()) ||
        b >= static_cast<int>(clusters.size()))
      throw std::invalid_argument("ClusterState::merge: bad positions");
    if (a > b) std::swap(a, b);
    std::vector<int> merged;
    merged.reserve(clusters[a].size() + clusters[b].size());
    std::merge(clusters[a].begin(), clusters[a].end(), clusters[b].begin(), clusters[b].end(),
               std::back_inserter(merged));
    clusters[a] = std::move(merged);
    clusters.erase(clusters.begin() + b);
    ++step;
  }
};

struct CandidateMerge {
  int a = 0, b = 0;  // canonical positions in the ClusterState
  double dissimilarity = 0.0;
};

namespace detail {

inline double minimax_radius(const std::vector<int>& a, const std::vector<int>& b,
                             const DissimilarityMatrix& d) {
  // Smallest covering radius of the union: min over centers of the max
  // distance to any member.
  double best = std::numeric_limits<double>::infinity();
  auto consider = [&](int c) {
    double radius = 0.0;
    for (int j : a) radius = std::max(radius, d(c, j));
    for (int j : b) radius = std::max(radius, d(c, j));
    best = std::min(best, radius);
  };
  for (int c : a) consider(c);
  for (int c : b) consider(c);
  return best;
}

}  // namespace detail

inline double linkage_dissimilarity(Linkage kind, const std::vector<int>& a,
                                    const std::vector<int>& b, const DissimilarityMatrix& d) {
  if (a.empty() || b.empty()) throw std::invalid_argument("linkage_dissimilarity: empty cluster");
  for (int i : a)
    if (std::binary_search(b.begin(), b.end(), i))
      throw std::invalid_argument("linkage_dissimilarity: clusters overlap");
  switch (kind) {
    case Linkage::complete: {
      double v = 0.0;
      for (int i : a)
        for (int j : b) v = std::max(v, d(i, j));
      return v;
    }
    case Linkage::single: {
      double v = std::numeric_limits<double>::infinity();
      for (int i : a)
        for (int j : b) v = std::min(v, d(i, j));
      return v;
    }
    case Linkage::average: {
      double s = 0.0;
      for (int i : a)
        for (int j : b) s += d(i, j);
      return s / (static_cast<double>(a.size()) * static_cast<double>(b.size()));
    }
    case Linkage::minimax:
      return detail::minimax_radius(a, b, d);
  }
  throw std::invalid_argument("linkage_dissimilarity: unknown kind");
}

// All unordered cluster pairs in canonical (lexicographic) order.
inline std::vector<CandidateMerge> candidate_merges(const ClusterState& state, Linkage kind,
                                                    const DissimilarityMatrix& d) {
  const int m = static_cast<int>(state.clusters.size());
  if (m < 2) throw std::logic_error("candidate_merges: need at least 2 clusters");
  std::vector<CandidateMerge> out;
  out.reserve(static_cast<std::size_t>(m) * (m - 1) / 2);
  for (int i = 0; i < m; ++i)
    for (int j = i + 1; j < m; ++j)
      out.push_back({i, j, linkage_dissimilarity(kind, state.clusters[i], state.clusters[j], d)});
  return out;
}

// Incremental maintenance of all pairwise linkage values over the current
// partition. Slots are identified by the smallest member of the cluster they
// hold, so the ascending alive list is always the canonical order.
// complete/single/average use the exact merge recurrences; minimax values
// touching the merged cluster are recomputed from the base distances.
class LinkageMatrix {
 public:
  LinkageMatrix(const DissimilarityMatrix& base, Linkage kind)
      : kind_(kind), n_(base.n), base_(&base), values_(base.d), alive_(base.n), members_(base.n) {
    for (int i = 0; i < n_; ++i) {
      alive_[i] = i;
      members_[i] = {i};
    }
  }

  int count() const { return static_cast<int>(alive_.size()); }
  const std::vector<int>& alive() const { return alive_; }
  const std::vector<int>& members(int slot) const { return members_[slot]; }
  double value(int slot_a, int slot_b) const { return values_[idx(slot_a, slot_b)]; }

  // Canonical candidate enumeration: fills `out` with the current linkage
  // values in (i, j), i < j order over alive slots.
  void candidate_values(std::vector<double>& out) const {
    const std::size_t m = alive_.size();
    out.clear();
    out.reserve(m * (m - 1) / 2);
    for (std::size_t i = 0; i < m; ++i) {
      const auto row = static_cast<std::size_t>(alive_[i]) * n_;
      for (std::size_t j = i + 1; j < m; ++j) out.push_back(values_[row + alive_[j]]);
    }
  }

  // Position of the pair (slot_a, slot_b) in the canonical enumeration.
  int candidate_index(int slot_a, int slot_b) const {
    if (slot_a > slot_b) std::swap(slot_a, slot_b);
    const int m = count();
    const int ia = slot_position(slot_a), ib = slot_position(slot_b);
    return ia * (2 * m - ia - 1) / 2 + (ib - ia - 1);
  }

  // Merge the clusters in the two slots; the union stays in the lower slot.
  void merge(int slot_a, int slot_b) {
    if (slot_a > slot_b) std::swap(slot_a, slot_b);
    const double na = static_cast<double>(members_[slot_a].size());
    const double nb = static_cast<double>(members_[slot_b].size());
    std::vector<int> merged;
    merged.reserve(members_[slot_a].size() + members_[slot_b].size());
    std::merge(members_[slot_a].begin(), members_[slot_a].end(), members_[slot_b].begin(),
               members_[slot_b].end(), std::back_inserter(merged));
    members_[slot_a] = std::move(merged);
    members_[slot_b].clear();
    alive_.erase(alive_.begin() + slot_position(slot_b));

    for (int k : alive_) {
      if (k == slot_a) continue;
      double v;
      switch (kind_) {
        case Linkage::complete:
          v = std::max(values_[idx(slot_a, k)], values_[idx(slot_b, k)]);
          break;
        case Linkage::single:
          v = std::min(values_[idx(slot_a, k)], values_[idx(slot_b, k)]);
          break;
        case Linkage::average:
          v = (na * values_[idx(slot_a, k)] + nb * values_[idx(slot_b, k)]) / (na + nb);
          break;
        case Linkage::minimax:
          v = detail::minimax_radius(members_[slot_a], members_[k], *base_);
          break;
        default:
          throw std::logic_error("LinkageMatrix: unknown kind");
      }
      values_[idx(slot_a, k)] = v;
      values_[idx(k, slot_a)] = v;
    }
  }

 private:
  std::size_t idx(int i, int j) const { return static_cast<std::size_t>(i) * n_ + j; }

  int slot_position(int slot) const {
    const auto it = std::lower_bound(alive_.begin(), alive_.end(), slot);
    if (it == alive_.end() || *it != slot) throw std::logic_error("LinkageMatrix: dead slot");
    return static_cast<int>(it - alive_.begin());
  }

  Linkage kind_;
  int n_;
  const DissimilarityMatrix* base_;
  std::vector<double> values_;  // current linkage values between alive slots
  std::vector<int> alive_;      // ascending slot ids == canonical order
  std::vector<std::vector<int>> members_;
};

}  // namespace rhc
