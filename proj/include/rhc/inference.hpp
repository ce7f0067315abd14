#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "rhc/engine.hpp"
#include "rhc/errors.hpp"
#include "rhc/quadrature.hpp"
#include "rhc/special.hpp"

namespace rhc {

// nu_i = 1/|C1| on C1, -1/|C2| on C2, 0 elsewhere. Entries sum to zero and
// nu' X is the difference of the two group means.
struct ContrastVector {
  Eigen::VectorXd nu;
  double norm_sq = 0.0;
};

namespace detail {

inline std::vector<int> sorted_checked(const std::vector<int>& c, int n, const char* what) {
  if (c.empty()) throw std::invalid_argument(std::string(what) + ": empty cluster");
  std::vector<int> s(c);
  std::sort(s.begin(), s.end());
  if (s.front() < 0 || s.back() >= n || std::adjacent_find(s.begin(), s.end()) != s.end())
    throw std::invalid_argument(std::string(what) + ": bad cluster indices");
  return s;
}

inline void check_disjoint(const std::vector<int>& a, const std::vector<int>& b, const char* what) {
  for (int i : a)
    if (std::binary_search(b.begin(), b.end(), i))
      throw std::invalid_argument(std::string(what) + ": clusters overlap");
}

}  // namespace detail

inline ContrastVector contrast_vector(const std::vector<int>& c1, const std::vector<int>& c2, int n) {
  const auto s1 = detail::sorted_checked(c1, n, "contrast_vector");
  const auto s2 = detail::sorted_checked(c2, n, "contrast_vector");
  detail::check_disjoint(s1, s2, "contrast_vector");
  ContrastVector out;
  out.nu = Eigen::VectorXd::Zero(n);
  for (int i : s1) out.nu[i] = 1.0 / static_cast<double>(s1.size());
  for (int i : s2) out.nu[i] = -1.0 / static_cast<double>(s2.size());
  out.norm_sq = 1.0 / static_cast<double>(s1.size()) + 1.0 / static_cast<double>(s2.size());
  return out;
}

struct FStatistic {
  double r = 0.0;
  double bcss = 0.0;
  double wcss = 0.0;
};

// R = (N - 2) * BCSS / WCSS for the merged pair.
inline FStatistic f_statistic(const DataMatrix& x, const std::vector<int>& c1,
                              const std::vector<int>& c2) {
  const auto s1 = detail::sorted_checked(c1, x.n(), "f_statistic");
  const auto s2 = detail::sorted_checked(c2, x.n(), "f_statistic");
  detail::check_disjoint(s1, s2, "f_statistic");
  const int n_merged = static_cast<int>(s1.size() + s2.size());
  if (n_merged < 3) throw std::invalid_argument("f_statistic: need |C1| + |C2| >= 3");

  Eigen::RowVectorXd mean1 = Eigen::RowVectorXd::Zero(x.p());
  Eigen::RowVectorXd mean2 = Eigen::RowVectorXd::Zero(x.p());
  for (int i : s1) mean1 += x.values.row(i);
  for (int i : s2) mean2 += x.values.row(i);
  mean1 /= static_cast<double>(s1.size());
  mean2 /= static_cast<double>(s2.size());

  FStatistic out;
  const double w = static_cast<double>(s1.size()) * static_cast<double>(s2.size()) / n_merged;
  out.bcss = w * (mean1 - mean2).squaredNorm();
  for (int i : s1) out.wcss += (x.values.row(i) - mean1).squaredNorm();
  for (int i : s2) out.wcss += (x.values.row(i) - mean2).squaredNorm();
  if (!(out.wcss > 0.0))
    throw degenerate_data_error("f_statistic: WCSS = 0, statistic undefined");
  out.r = (n_merged - 2) * out.bcss / out.wcss;
  return out;
}

// (eta, gamma, Delta, Gamma): unit directions of the between/within
// projections, total projected energy, and the residual that passes every
// row outside the merged pair through unchanged.
struct AuxiliaryStats {
  Eigen::MatrixXd eta;          // dir(B X), unit Frobenius norm
  Eigen::MatrixXd gamma;        // dir(W X), unit Frobenius norm
  Eigen::MatrixXd gamma_resid;  // (I - B - W) X
  double delta = 0.0;           // ||B X||_F^2 + ||W X||_F^2
  int n_merged = 0;
  int p = 0;
  std::vector<int> c1, c2;  // sorted merged clusters
};

inline AuxiliaryStats auxiliary_stats(const DataMatrix& x, const std::vector<int>& c1,
                                      const std::vector<int>& c2) {
  const auto s1 = detail::sorted_checked(c1, x.n(), "auxiliary_stats");
  const auto s2 = detail::sorted_checked(c2, x.n(), "auxiliary_stats");
  detail::check_disjoint(s1, s2, "auxiliary_stats");
  const int n_merged = static_cast<int>(s1.size() + s2.size());
  if (n_merged < 3) throw std::invalid_argument("auxiliary_stats: need |C1| + |C2| >= 3");

  const ContrastVector cv = contrast_vector(s1, s2, x.n());
  const Eigen::RowVectorXd diff = cv.nu.transpose() * x.values;  // mean1 - mean2

  Eigen::MatrixXd bx = Eigen::MatrixXd::Zero(x.n(), x.p());
  for (int i : s1) bx.row(i) = diff / (static_cast<double>(s1.size()) * cv.norm_sq);
  for (int i : s2) bx.row(i) = -diff / (static_cast<double>(s2.size()) * cv.norm_sq);

  Eigen::RowVectorXd mean1 = Eigen::RowVectorXd::Zero(x.p());
  Eigen::RowVectorXd mean2 = Eigen::RowVectorXd::Zero(x.p());
  for (int i : s1) mean1 += x.values.row(i);
  for (int i : s2) mean2 += x.values.row(i);
  mean1 /= static_cast<double>(s1.size());
  mean2 /= static_cast<double>(s2.size());
  Eigen::MatrixXd wx = Eigen::MatrixXd::Zero(x.n(), x.p());
  for (int i : s1) wx.row(i) = x.values.row(i) - mean1;
  for (int i : s2) wx.row(i) = x.values.row(i) - mean2;

  const double bcss = bx.squaredNorm();
  const double wcss = wx.squaredNorm();
  if (!(bcss > 0.0) || !(wcss > 0.0))
    throw degenerate_data_error("auxiliary_stats: zero BCSS or WCSS, directions undefined");

  AuxiliaryStats out;
  out.eta = bx / std::sqrt(bcss);
  out.gamma = wx / std::sqrt(wcss);
  out.gamma_resid = x.values - bx - wx;
  out.delta = bcss + wcss;
  out.n_merged = n_merged;
  out.p = x.p();
  out.c1 = s1;
  out.c2 = s2;
  return out;
}

namespace detail {

inline void fill_f_rows(double r, const AuxiliaryStats& aux, const std::vector<int>& rows,
                        Eigen::MatrixXd& out) {
  const double nm2 = aux.n_merged - 2;
  const double sa = std::sqrt(aux.delta * (std::isinf(r) ? 1.0 : r / (nm2 + r)));
  const double sb = std::sqrt(aux.delta * (std::isinf(r) ? 0.0 : nm2 / (nm2 + r)));
  for (std::size_t k = 0; k < rows.size(); ++k) {
    const int i = rows[k];
    out.row(k) = sa * aux.eta.row(i) + sb * aux.gamma.row(i) + aux.gamma_resid.row(i);
  }
}

}  // namespace detail

// X(r) = sqrt(Delta) * (eta * sqrt(r/(N-2+r)) + gamma * sqrt((N-2)/(N-2+r))) + Gamma.
// Recovers the observed data at r = R_o.
inline DataMatrix reconstruct_f(double r, const AuxiliaryStats& aux) {
  if (!(r >= 0.0)) throw std::invalid_argument("reconstruct_f: r must be >= 0");
  const double nm2 = aux.n_merged - 2;
  const double sa = std::sqrt(aux.delta * (std::isinf(r) ? 1.0 : r / (nm2 + r)));
  const double sb = std::sqrt(aux.delta * (std::isinf(r) ? 0.0 : nm2 / (nm2 + r)));
  Eigen::MatrixXd x = sa * aux.eta + sb * aux.gamma + aux.gamma_resid;
  return DataMatrix(std::move(x));
}

namespace detail {

// Replays merges 1..t on the given dissimilarities and accumulates the log
// probability of each recorded merge. The realized temperature is recomputed
// from the dissimilarities under evaluation at every step.
inline double replay_log_weight(const MergeTrace& trace, int t, const DissimilarityMatrix& d,
                                std::vector<double>& scratch) {
  LinkageMatrix lm(d, trace.config.linkage);
  double lw = 0.0;
  for (int s = 1; s <= t; ++s) {
    const auto& rec = trace.records[s - 1];
    lm.candidate_values(scratch);
    const int slot_a = rec.members_a.front();
    const int slot_b = rec.members_b.front();
    lw += softmax_log_prob(scratch, trace.config.tau, lm.candidate_index(slot_a, slot_b));
    lm.merge(slot_a, slot_b);
  }
  return lw;
}

// Evaluates the merge-sequence log weight at reconstructed datasets. Rows
// outside the merged pair are fixed across the statistic axis, so their
// pairwise distances are computed once; per evaluation only pairs touching
// the merged rows are refreshed. Thread-safe (const state, local buffers).
class SequenceWeight {
 public:
  SequenceWeight(const MergeTrace& trace, int t, const Eigen::MatrixXd& base_rows,
                 std::vector<int> affected,
                 std::function<void(double, Eigen::MatrixXd&)> fill_affected)
      : trace_(&trace), t_(t), affected_(std::move(affected)),
        fill_affected_(std::move(fill_affected)) {
    const int n = static_cast<int>(base_rows.rows());
    base_rows_ = base_rows;
    pos_.assign(n, -1);
    for (std::size_t k = 0; k < affected_.size(); ++k) pos_[affected_[k]] = static_cast<int>(k);
    d_static_.n = n;
    d_static_.d.assign(static_cast<std::size_t>(n) * n, 0.0);
    for (int i = 0; i < n; ++i)
      for (int j = i + 1; j < n; ++j) {
        if (pos_[i] >= 0 || pos_[j] >= 0) continue;  // refreshed per evaluation
        const double v = (base_rows_.row(i) - base_rows_.row(j)).norm();
        d_static_.at(i, j) = v;
        d_static_.at(j, i) = v;
      }
  }

  double operator()(double stat) const {
    const int n = d_static_.n;
    Eigen::MatrixXd rows(static_cast<int>(affected_.size()), base_rows_.cols());
    fill_affected_(stat, rows);
    DissimilarityMatrix d = d_static_;
    for (std::size_t k = 0; k < affected_.size(); ++k) {
      const int i = affected_[k];
      for (int j = 0; j < n; ++j) {
        if (j == i) continue;
        const int pj = pos_[j];
        if (pj >= 0 && pj < static_cast<int>(k)) continue;  // already set
        const double v = pj >= 0 ? (rows.row(k) - rows.row(pj)).norm()
                                 : (rows.row(k) - base_rows_.row(j)).norm();
        d.at(i, j) = v;
        d.at(j, i) = v;
      }
    }
    std::vector<double> scratch;
    return replay_log_weight(*trace_, t_, d, scratch);
  }

 private:
  const MergeTrace* trace_;
  int t_;
  std::vector<int> affected_;
  std::function<void(double, Eigen::MatrixXd&)> fill_affected_;
  Eigen::MatrixXd base_rows_;
  std::vector<int> pos_;
  DissimilarityMatrix d_static_;
};

inline void check_trace_step(const MergeTrace& trace, int t, const char* what) {
  if (t < 1 || t > static_cast<int>(trace.records.size()))
    throw std::invalid_argument(std::string(what) + ": step out of range");
}

inline void check_aux_matches(const AuxiliaryStats& aux, const MergeTrace& trace, int t,
                              const char* what) {
  check_trace_step(trace, t, what);
  const auto& rec = trace.records[t - 1];
  if (aux.c1 != rec.members_a || aux.c2 != rec.members_b)
    throw std::invalid_argument(std::string(what) + ": auxiliary statistics do not match trace step");
}

inline SequenceWeight make_f_weight(const AuxiliaryStats& aux, const MergeTrace& trace, int t) {
  std::vector<int> affected(aux.c1);
  affected.insert(affected.end(), aux.c2.begin(), aux.c2.end());
  std::sort(affected.begin(), affected.end());
  auto fill = [&aux, affected](double r, Eigen::MatrixXd& rows) {
    fill_f_rows(r, aux, affected, rows);
  };
  return SequenceWeight(trace, t, aux.gamma_resid, affected, std::move(fill));
}

}  // namespace detail

// Log of prod_{s<=t} p^(s)(M_o^(s); X(r)): the probability of re-sampling the
// recorded merge sequence on the dataset reconstructed at statistic value r.
inline double sequence_log_weight(double r, const AuxiliaryStats& aux, const MergeTrace& trace,
                                  int t) {
  detail::check_aux_matches(aux, trace, t, "sequence_log_weight");
  if (!(trace.config.tau > 0.0))
    throw std::invalid_argument("sequence_log_weight: trace must come from a randomized run (tau > 0)");
  if (!(r >= 0.0)) throw std::invalid_argument("sequence_log_weight: r must be >= 0");
  const DataMatrix xr = reconstruct_f(r, aux);
  const DissimilarityMatrix d = pairwise_dissimilarity(xr);
  std::vector<double> scratch;
  return detail::replay_log_weight(trace, t, d, scratch);
}

struct TestResult {
  std::string variant;  // "f" or "chi"
  double statistic = 0.0;
  double p_value = 0.0;
  int step = 0;
  int size_a = 0, size_b = 0;
  QuadratureDiagnostics diagnostics;
};

namespace detail {

struct CdfTail {
  double cdf = 0.0;
  double p = 1.0;
  QuadratureDiagnostics diag;
};

// Quantile substitution u = CDF_base(r) reduces both integrals of the
// conditional CDF to (0,1); split at the observed statistic's base quantile.
inline CdfTail conditional_cdf_core(double split,
                                    const std::function<double(double)>& quantile,
                                    const std::function<double(double)>& log_weight,
                                    const QuadratureConfig& quad) {
  CdfTail out;
  std::function<double(double)> lw_u;
  if (!quad.constant_weight) lw_u = [&](double u) { return log_weight(quantile(u)); };
  const auto [i1, i2] = weighted_split_integrals(split, lw_u, quad, &out.diag);
  out.cdf = i1 / (i1 + i2);
  out.p = i2 / (i1 + i2);
  return out;
}

}  // namespace detail

// CDF of the conditional law of the F statistic at r (Theorem-style ratio of
// weighted integrals against the F(p, (N-2)p) base law).
inline double conditional_cdf_f(double r, const AuxiliaryStats& aux, const MergeTrace& trace,
                                int t, const QuadratureConfig& quad,
                                QuadratureDiagnostics* diag = nullptr) {
  detail::check_aux_matches(aux, trace, t, "conditional_cdf_f");
  if (!quad.constant_weight && !(trace.config.tau > 0.0))
    throw std::invalid_argument("conditional_cdf_f: trace must come from a randomized run (tau > 0)");
  if (!(r >= 0.0)) throw std::invalid_argument("conditional_cdf_f: r must be >= 0");
  const double d1 = aux.p;
  const double d2 = static_cast<double>(aux.n_merged - 2) * aux.p;
  const double split = special::f_cdf(r, d1, d2);
  const auto weight = detail::make_f_weight(aux, trace, t);
  const auto res = detail::conditional_cdf_core(
      split, [&](double u) { return special::f_quantile(u, d1, d2); },
      [&](double rr) { return weight(rr); }, quad);
  if (diag) *diag = res.diag;
  return res.cdf;
}

// Conditional p-value for the merge at step t of the trace (F variant).
inline TestResult p_value_f(const DataMatrix& x, const MergeTrace& trace, int t,
                            const QuadratureConfig& quad) {
  detail::check_trace_step(trace, t, "p_value_f");
  if (!quad.constant_weight && !(trace.config.tau > 0.0))
    throw std::invalid_argument("p_value_f: trace must come from a randomized run (tau > 0)");
  const auto& rec = trace.records[t - 1];
  const FStatistic fs = f_statistic(x, rec.members_a, rec.members_b);
  const AuxiliaryStats aux = auxiliary_stats(x, rec.members_a, rec.members_b);

  const double d1 = aux.p;
  const double d2 = static_cast<double>(aux.n_merged - 2) * aux.p;
  const double split = special::f_cdf(fs.r, d1, d2);
  const auto weight = detail::make_f_weight(aux, trace, t);
  const auto res = detail::conditional_cdf_core(
      split, [&](double u) { return special::f_quantile(u, d1, d2); },
      [&](double rr) { return weight(rr); }, quad);

  TestResult out;
  out.variant = "f";
  out.statistic = fs.r;
  out.p_value = res.p;
  out.step = t;
  out.size_a = static_cast<int>(rec.members_a.size());
  out.size_b = static_cast<int>(rec.members_b.size());
  out.diagnostics = res.diag;
  return out;
}

// ---- chi variant (known covariance) ----

namespace detail {

inline Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> spd_eigen(const Eigen::MatrixXd& sigma,
                                                                const char* what) {
  if (sigma.rows() != sigma.cols())
    throw std::invalid_argument(std::string(what) + ": sigma must be square");
  if ((sigma - sigma.transpose()).cwiseAbs().maxCoeff() >
      1e-10 * std::max(1.0, sigma.cwiseAbs().maxCoeff()))
    throw std::invalid_argument(std::string(what) + ": sigma must be symmetric");
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sigma);
  if (es.info() != Eigen::Success || es.eigenvalues().minCoeff() <= 0.0)
    throw std::invalid_argument(std::string(what) + ": sigma must be positive definite");
  return es;
}

}  // namespace detail

inline Eigen::MatrixXd spd_sqrt(const Eigen::MatrixXd& sigma) {
  const auto es = detail::spd_eigen(sigma, "spd_sqrt");
  return es.eigenvectors() * es.eigenvalues().cwiseSqrt().asDiagonal() *
         es.eigenvectors().transpose();
}

inline Eigen::MatrixXd spd_inv_sqrt(const Eigen::MatrixXd& sigma) {
  const auto es = detail::spd_eigen(sigma, "spd_inv_sqrt");
  return es.eigenvectors() * es.eigenvalues().cwiseSqrt().cwiseInverse().asDiagonal() *
         es.eigenvectors().transpose();
}

// U = || Sigma^{-1/2} X' nu ||_2.
inline double chi_statistic(const DataMatrix& x, const std::vector<int>& c1,
                            const std::vector<int>& c2, const Eigen::MatrixXd& sigma_half_inv) {
  const ContrastVector cv = contrast_vector(c1, c2, x.n());
  if (sigma_half_inv.rows() != x.p() || sigma_half_inv.cols() != x.p())
    throw std::invalid_argument("chi_statistic: sigma dimension mismatch");
  return (sigma_half_inv * (x.values.transpose() * cv.nu)).norm();
}

struct ChiAuxiliaryStats {
  Eigen::RowVectorXd xi;      // unit direction of Sigma^{-1/2} X' nu
  Eigen::MatrixXd pi_resid;   // (I - nu nu'/||nu||^2) X
  ContrastVector nu;
  Eigen::MatrixXd sigma_half;
  std::vector<int> c1, c2;
};

inline ChiAuxiliaryStats chi_auxiliary_stats(const DataMatrix& x, const std::vector<int>& c1,
                                             const std::vector<int>& c2,
                                             const Eigen::MatrixXd& sigma_half,
                                             const Eigen::MatrixXd& sigma_half_inv) {
  const auto s1 = detail::sorted_checked(c1, x.n(), "chi_auxiliary_stats");
  const auto s2 = detail::sorted_checked(c2, x.n(), "chi_auxiliary_stats");
  detail::check_disjoint(s1, s2, "chi_auxiliary_stats");
  ChiAuxiliaryStats out;
  out.nu = contrast_vector(s1, s2, x.n());
  const Eigen::VectorXd w = sigma_half_inv * (x.values.transpose() * out.nu.nu);
  const double u = w.norm();
  if (!(u > 0.0))
    throw degenerate_data_error("chi_auxiliary_stats: U = 0, direction undefined");
  out.xi = (w / u).transpose();
  out.pi_resid =
      x.values - out.nu.nu * (out.nu.nu.transpose() * x.values) / out.nu.norm_sq;
  out.sigma_half = sigma_half;
  out.c1 = s1;
  out.c2 = s2;
  return out;
}

// X(u) = u * nu/||nu||^2 * xi * Sigma^{1/2} + pi. Recovers the data at u = U_o.
inline DataMatrix reconstruct_chi(double u, const ChiAuxiliaryStats& aux) {
  if (!(u >= 0.0)) throw std::invalid_argument("reconstruct_chi: u must be >= 0");
  const Eigen::RowVectorXd dir = aux.xi * aux.sigma_half;
  Eigen::MatrixXd x = (u / aux.nu.norm_sq) * (aux.nu.nu * dir) + aux.pi_resid;
  return DataMatrix(std::move(x));
}

namespace detail {

inline SequenceWeight make_chi_weight(const ChiAuxiliaryStats& aux, const MergeTrace& trace,
                                      int t) {
  std::vector<int> affected(aux.c1);
  affected.insert(affected.end(), aux.c2.begin(), aux.c2.end());
  std::sort(affected.begin(), affected.end());
  const Eigen::RowVectorXd dir = aux.xi * aux.sigma_half;
  return SequenceWeight(trace, t, aux.pi_resid, affected,
                        [&aux, dir, affected](double u, Eigen::MatrixXd& rows) {
                          for (std::size_t k = 0; k < affected.size(); ++k) {
                            const int i = affected[k];
                            rows.row(k) = (u * aux.nu.nu[i] / aux.nu.norm_sq) * dir +
                                          aux.pi_resid.row(i);
                          }
                        });
}

}  // namespace detail

// Conditional p-value for the merge at step t of the trace (chi variant,
// known covariance sigma). Base law: ||nu||_2 * chi_p.
inline TestResult p_value_chi(const DataMatrix& x, const MergeTrace& trace, int t,
                              const Eigen::MatrixXd& sigma, const QuadratureConfig& quad) {
  detail::check_trace_step(trace, t, "p_value_chi");
  if (!quad.constant_weight && !(trace.config.tau > 0.0))
    throw std::invalid_argument("p_value_chi: trace must come from a randomized run (tau > 0)");
  const auto& rec = trace.records[t - 1];
  const Eigen::MatrixXd sigma_half = spd_sqrt(sigma);
  const Eigen::MatrixXd sigma_half_inv = spd_inv_sqrt(sigma);
  const ChiAuxiliaryStats aux =
      chi_auxiliary_stats(x, rec.members_a, rec.members_b, sigma_half, sigma_half_inv);
  const double stat = chi_statistic(x, rec.members_a, rec.members_b, sigma_half_inv);

  const double scale = std::sqrt(aux.nu.norm_sq);
  const double dof = x.p();
  const double split = special::chi_cdf(stat / scale, dof);
  const auto weight = detail::make_chi_weight(aux, trace, t);
  const auto res = detail::conditional_cdf_core(
      split, [&](double q) { return scale * special::chi_quantile(q, dof); },
      [&](double uu) { return weight(uu); }, quad);

  TestResult out;
  out.variant = "chi";
  out.statistic = stat;
  out.p_value = res.p;
  out.step = t;
  out.size_a = static_cast<int>(rec.members_a.size());
  out.size_b = static_cast<int>(rec.members_b.size());
  out.diagnostics = res.diag;
  return out;
}

// Plug-in spherical variance estimate (1/((n-1)p)) sum ||X_i - Xbar||^2,
// for use as an approximate Sigma = sigma_hat^2 * I in the chi pipeline.
inline double sigma_hat_sq(const DataMatrix& x) {
  const Eigen::RowVectorXd mean = x.values.colwise().mean();
  return (x.values.rowwise() - mean).squaredNorm() /
         (static_cast<double>(x.n() - 1) * static_cast<double>(x.p()));
}

inline nlohmann::json test_result_to_json(const TestResult& r) {
  return {{"variant", r.variant},
          {"statistic", r.statistic},
          {"p_value", r.p_value},
          {"step", r.step},
          {"size_a", r.size_a},
          {"size_b", r.size_b},
          {"diagnostics",
           {{"node_count", r.diagnostics.node_count},
            {"max_log_weight", r.diagnostics.max_log_weight},
            {"denominator", r.diagnostics.denominator},
            {"underflow", r.diagnostics.underflow}}}};
}

}  // namespace rhc
