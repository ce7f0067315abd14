#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

#include "rhc/errors.hpp"
#include "rhc/parallel.hpp"

namespace rhc {

struct QuadratureConfig {
  int panels = 64;  // composite panels per side of the split point
  int nodes = 16;   // Gauss-Legendre nodes per panel
  // Naive mode: force the merge-sequence weight to a constant, which turns
  // the conditional CDF into the unadjusted base-law CDF.
  bool constant_weight = false;
  int threads = 1;  // worker threads for node evaluation
};

struct QuadratureDiagnostics {
  int node_count = 0;
  double max_log_weight = 0.0;
  double denominator = 0.0;  // I1 + I2 after the max-shift
  bool underflow = false;
};

// Deterministic pairwise tree sum; the combination order is fixed by the
// element order, independent of any thread schedule.
inline double pairwise_sum(std::span<const double> v) {
  if (v.size() == 0) return 0.0;
  if (v.size() == 1) return v[0];
  if (v.size() == 2) return v[0] + v[1];
  const std::size_t half = v.size() / 2;
  return pairwise_sum(v.subspan(0, half)) + pairwise_sum(v.subspan(half));
}

// Nodes and weights of the G-point Gauss-Legendre rule on [-1, 1], by Newton
// iteration on the Legendre recurrence.
inline void gauss_legendre(int g, std::vector<double>& nodes, std::vector<double>& weights) {
  if (g < 1) throw std::invalid_argument("gauss_legendre: need at least one node");
  nodes.assign(g, 0.0);
  weights.assign(g, 0.0);
  const int half = (g + 1) / 2;
  constexpr double pi = 3.14159265358979323846;
  for (int i = 0; i < half; ++i) {
    double x = std::cos(pi * (i + 0.75) / (g + 0.5));
    double dp = 0.0;
    for (int it = 0; it < 100; ++it) {
      double p0 = 1.0, p1 = x;
      for (int k = 2; k <= g; ++k) {
        const double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
      }
      dp = g * (x * p1 - p0) / (x * x - 1.0);
      const double dx = p1 / dp;
      x -= dx;
      if (std::fabs(dx) < 1e-15) break;
    }
    nodes[i] = -x;
    nodes[g - 1 - i] = x;
    const double w = 2.0 / ((1.0 - x * x) * dp * dp);
    weights[i] = w;
    weights[g - 1 - i] = w;
  }
}

// Composite GL grid on (lo, hi): `panels` panels, `g` nodes each.
inline void composite_grid(double lo, double hi, int panels, int g,
                           std::vector<double>& points, std::vector<double>& weights) {
  std::vector<double> xn, xw;
  gauss_legendre(g, xn, xw);
  points.clear();
  weights.clear();
  points.reserve(static_cast<std::size_t>(panels) * g);
  weights.reserve(static_cast<std::size_t>(panels) * g);
  const double width = (hi - lo) / panels;
  for (int p = 0; p < panels; ++p) {
    const double a = lo + p * width;
    const double mid = a + 0.5 * width;
    for (int k = 0; k < g; ++k) {
      points.push_back(mid + 0.5 * width * xn[k]);
      weights.push_back(0.5 * width * xw[k]);
    }
  }
}

// Composite GL grid under the quintic smoothstep substitution
// u = lo + (hi-lo) * (6s^5 - 15s^4 + 10s^3). The Jacobian vanishes at both
// endpoints, which tames the algebraic branch points the quantile
// substitution leaves at u -> 0 and u -> 1. Constants stay exact (the
// Jacobian is a polynomial GL integrates exactly).
inline void composite_grid_graded(double lo, double hi, int panels, int g,
                                  std::vector<double>& points, std::vector<double>& weights) {
  std::vector<double> xn, xw;
  gauss_legendre(g, xn, xw);
  points.clear();
  weights.clear();
  points.reserve(static_cast<std::size_t>(panels) * g);
  weights.reserve(static_cast<std::size_t>(panels) * g);
  const double span = hi - lo;
  const double width = 1.0 / panels;
  for (int p = 0; p < panels; ++p) {
    const double a = p * width;
    const double mid = a + 0.5 * width;
    for (int k = 0; k < g; ++k) {
      const double s = mid + 0.5 * width * xn[k];
      const double phi = s * s * s * (10.0 + s * (-15.0 + 6.0 * s));
      const double dphi = 30.0 * s * s * (1.0 + s * (-2.0 + s));
      points.push_back(lo + span * phi);
      weights.push_back(0.5 * width * xw[k] * span * dphi);
    }
  }
}

// Shared core of the conditional CDF: integrates exp(log_weight(u)) over
// (0, split) and (split, 1) on composite GL grids, products taken in log
// space and shifted by the global maximum log-weight. Returns the two
// shifted integrals; their ratio is the conditional CDF / tail.
inline std::pair<double, double> weighted_split_integrals(
    double split, const std::function<double(double)>& log_weight,
    const QuadratureConfig& quad, QuadratureDiagnostics* diag = nullptr) {
  if (!(split >= 0.0 && split <= 1.0))
    throw std::invalid_argument("weighted_split_integrals: split must lie in [0, 1]");
  if (quad.panels < 1 || quad.nodes < 1)
    throw std::invalid_argument("weighted_split_integrals: panels and nodes must be >= 1");

  std::vector<double> pts, wts;
  std::vector<double> lo_pts, lo_wts, hi_pts, hi_wts;
  if (split > 0.0) composite_grid_graded(0.0, split, quad.panels, quad.nodes, lo_pts, lo_wts);
  if (split < 1.0) composite_grid_graded(split, 1.0, quad.panels, quad.nodes, hi_pts, hi_wts);
  const std::size_t n_lo = lo_pts.size();
  pts = std::move(lo_pts);
  pts.insert(pts.end(), hi_pts.begin(), hi_pts.end());
  wts = std::move(lo_wts);
  wts.insert(wts.end(), hi_wts.begin(), hi_wts.end());

  std::vector<double> lw(pts.size());
  if (quad.constant_weight) {
    std::fill(lw.begin(), lw.end(), 0.0);
  } else {
    parallel_for(pts.size(), quad.threads, [&](std::size_t i) { lw[i] = log_weight(pts[i]); });
  }

  double max_lw = -std::numeric_limits<double>::infinity();
  for (double v : lw) max_lw = std::max(max_lw, v);
  if (!std::isfinite(max_lw)) {
    if (diag) {
      diag->node_count = static_cast<int>(pts.size());
      diag->max_log_weight = max_lw;
      diag->denominator = 0.0;
      diag->underflow = true;
    }
    throw numerical_error("conditional CDF: all sequence weights vanished");
  }

  std::vector<double> terms(pts.size());
  for (std::size_t i = 0; i < pts.size(); ++i) terms[i] = wts[i] * std::exp(lw[i] - max_lw);
  const double i1 = pairwise_sum(std::span<const double>(terms).subspan(0, n_lo));
  const double i2 = pairwise_sum(std::span<const double>(terms).subspan(n_lo));

  if (diag) {
    diag->node_count = static_cast<int>(pts.size());
    diag->max_log_weight = max_lw;
    diag->denominator = i1 + i2;
    diag->underflow = !(i1 + i2 > 0.0);
  }
  if (!(i1 + i2 > 0.0))
    throw numerical_error("conditional CDF: denominator underflow after max-shift");
  return {i1, i2};
}

}  // namespace rhc
