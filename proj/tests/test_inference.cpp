#include "rhc/inference.hpp"

#include <catch2/catch_amalgamated.hpp>
#include <cmath>
#include <vector>

#include "rhc/dataset.hpp"

using namespace rhc;

namespace {

DataMatrix from_rows(const std::vector<std::vector<double>>& rows) {
  Eigen::MatrixXd m(rows.size(), rows.front().size());
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < rows[i].size(); ++j) m(i, j) = rows[i][j];
  return DataMatrix(std::move(m));
}

struct Instance {
  DataMatrix x;
  MergeTrace trace;
  int t;
};

// Clusters random data and returns a step whose merged pair has >= 3 rows.
Instance make_instance(int n, int p, double tau, std::uint64_t seed, Linkage kind = Linkage::complete) {
  auto [x, truth] = generate_two_cluster(n, 1.5, 1.0, p, seed);
  MergeTrace trace = run_clustering(x, 1, {tau, kind, substream_seed(seed, 9)});
  int t = -1;
  for (const auto& rec : trace.records)
    if (rec.members_a.size() + rec.members_b.size() >= 3) t = rec.step;
  return {std::move(x), std::move(trace), t};
}

// Self-normalized importance-sampling estimate of the conditional CDF at r:
// draws from the F base law via chi-square ratios of raw normals, weights by
// the replayed merge-sequence probability.
struct IsEstimate {
  double cdf = 0.0;
  double se = 0.0;
};

IsEstimate is_oracle_cdf(double r, const AuxiliaryStats& aux, const MergeTrace& trace, int t,
                         int draws, std::uint64_t seed) {
  const int d1 = aux.p;
  const int d2 = (aux.n_merged - 2) * aux.p;
  Rng rng(seed);
  std::vector<double> lw(draws), ind(draws);
  double max_lw = -1e300;
  for (int i = 0; i < draws; ++i) {
    double y1 = 0.0, y2 = 0.0;
    for (int k = 0; k < d1; ++k) {
      const double z = rng.normal();
      y1 += z * z;
    }
    for (int k = 0; k < d2; ++k) {
      const double z = rng.normal();
      y2 += z * z;
    }
    const double ri = (y1 / d1) / (y2 / d2);
    lw[i] = sequence_log_weight(ri, aux, trace, t);
    ind[i] = ri <= r ? 1.0 : 0.0;
    max_lw = std::max(max_lw, lw[i]);
  }
  double wsum = 0.0, hit = 0.0;
  for (int i = 0; i < draws; ++i) {
    const double w = std::exp(lw[i] - max_lw);
    wsum += w;
    hit += w * ind[i];
  }
  IsEstimate out;
  out.cdf = hit / wsum;
  double var = 0.0;
  for (int i = 0; i < draws; ++i) {
    const double w = std::exp(lw[i] - max_lw);
    const double dev = w * (ind[i] - out.cdf);
    var += dev * dev;
  }
  out.se = std::sqrt(var) / wsum;
  return out;
}

}  // namespace

TEST_CASE("contrast vector entries, norm, and mean difference", "[inference]") {
  const ContrastVector cv = contrast_vector({0, 1}, {2}, 4);
  REQUIRE(cv.nu[0] == Catch::Approx(0.5));
  REQUIRE(cv.nu[1] == Catch::Approx(0.5));
  REQUIRE(cv.nu[2] == Catch::Approx(-1.0));
  REQUIRE(cv.nu[3] == 0.0);
  REQUIRE(cv.norm_sq == Catch::Approx(1.5));
  REQUIRE(cv.nu.sum() == Catch::Approx(0.0).margin(1e-15));

  const ContrastVector even = contrast_vector({0, 1, 2}, {3, 4, 5}, 6);
  REQUIRE(even.norm_sq == Catch::Approx(2.0 / 3.0));

  auto [x, truth] = generate_two_cluster(6, 1.0, 1.0, 3, 5);
  const std::vector<int> c1{0, 2}, c2{3, 4, 5};
  const ContrastVector cv2 = contrast_vector(c1, c2, 6);
  Eigen::RowVectorXd mean1 = (x.values.row(0) + x.values.row(2)) / 2.0;
  Eigen::RowVectorXd mean2 = (x.values.row(3) + x.values.row(4) + x.values.row(5)) / 3.0;
  const Eigen::RowVectorXd via_nu = cv2.nu.transpose() * x.values;
  REQUIRE((via_nu - (mean1 - mean2)).norm() < 1e-12);

  REQUIRE_THROWS_AS(contrast_vector({0, 1}, {1, 2}, 4), std::invalid_argument);
  REQUIRE_THROWS_AS(contrast_vector({}, {1}, 4), std::invalid_argument);
}

TEST_CASE("F statistic on the 1-D worked example", "[inference]") {
  const DataMatrix x = from_rows({{0}, {2}, {5}, {7}});
  const FStatistic fs = f_statistic(x, {0, 1}, {2, 3});
  REQUIRE(fs.bcss == Catch::Approx(25.0));
  REQUIRE(fs.wcss == Catch::Approx(4.0));
  REQUIRE(fs.r == Catch::Approx(12.5));
}

TEST_CASE("F statistic degenerate and invariance cases", "[inference]") {
  const DataMatrix degenerate = from_rows({{1}, {1}, {4}, {4}});
  REQUIRE_THROWS_AS(f_statistic(degenerate, {0, 1}, {2, 3}), degenerate_data_error);

  // duplicating the coordinates doubles both sums, leaving R unchanged
  auto [x, truth] = generate_two_cluster(10, 2.0, 1.0, 3, 8);
  Eigen::MatrixXd doubled(10, 6);
  doubled << x.values, x.values;
  const std::vector<int> c1{0, 1, 2, 3}, c2{4, 5, 6};
  const FStatistic a = f_statistic(x, c1, c2);
  const FStatistic b = f_statistic(DataMatrix(std::move(doubled)), c1, c2);
  REQUIRE(b.bcss == Catch::Approx(2.0 * a.bcss).epsilon(1e-12));
  REQUIRE(b.wcss == Catch::Approx(2.0 * a.wcss).epsilon(1e-12));
  REQUIRE(b.r == Catch::Approx(a.r).epsilon(1e-12));

  REQUIRE_THROWS_AS(f_statistic(x, {0}, {1}), std::invalid_argument);  // N < 3
}

TEST_CASE("auxiliary statistics: energies, directions, pass-through", "[inference]") {
  const DataMatrix x = from_rows({{0}, {2}, {5}, {7}});
  const AuxiliaryStats aux = auxiliary_stats(x, {0, 1}, {2, 3});
  REQUIRE(aux.delta == Catch::Approx(29.0));
  REQUIRE(aux.n_merged == 4);

  auto [y, truth] = generate_two_cluster(12, 2.0, 1.0, 4, 15);
  const std::vector<int> c1{1, 4, 6}, c2{2, 9};
  const AuxiliaryStats a2 = auxiliary_stats(y, c1, c2);
  REQUIRE(a2.eta.norm() == Catch::Approx(1.0).epsilon(1e-12));
  REQUIRE(a2.gamma.norm() == Catch::Approx(1.0).epsilon(1e-12));
  REQUIRE(std::fabs((a2.eta.array() * a2.gamma.array()).sum()) < 1e-8);
  // rows outside the merged pair pass through to Gamma unchanged
  for (int i : {0, 3, 5, 7, 8, 10, 11})
    REQUIRE((a2.gamma_resid.row(i) - y.values.row(i)).norm() == 0.0);

  const DataMatrix degenerate = from_rows({{1}, {1}, {4}, {4}});
  REQUIRE_THROWS_AS(auxiliary_stats(degenerate, {0, 1}, {2, 3}), degenerate_data_error);
}

TEST_CASE("reconstruction recovers the data and round-trips the statistic", "[inference]") {
  auto [x, truth] = generate_two_cluster(16, 2.0, 1.0, 3, 31);
  const std::vector<int> c1{0, 2, 5, 7}, c2{1, 3, 9};
  const FStatistic fs = f_statistic(x, c1, c2);
  const AuxiliaryStats aux = auxiliary_stats(x, c1, c2);

  const DataMatrix back = reconstruct_f(fs.r, aux);
  REQUIRE((back.values - x.values).norm() <= 1e-8 * x.values.norm());

  const DataMatrix at_zero = reconstruct_f(0.0, aux);
  const Eigen::MatrixXd expect0 =
      std::sqrt(aux.delta) * aux.gamma + aux.gamma_resid;
  REQUIRE((at_zero.values - expect0).norm() < 1e-10);

  for (double r : {0.1, 1.0, 10.0}) {
    const DataMatrix xr = reconstruct_f(r, aux);
    const FStatistic round = f_statistic(xr, c1, c2);
    REQUIRE(round.r == Catch::Approx(r).epsilon(1e-8));
    const AuxiliaryStats aux_r = auxiliary_stats(xr, c1, c2);
    REQUIRE((aux_r.eta - aux.eta).norm() < 1e-8);
    REQUIRE((aux_r.gamma - aux.gamma).norm() < 1e-8);
    REQUIRE((aux_r.gamma_resid - aux.gamma_resid).norm() < 1e-8);
  }
}

TEST_CASE("sequence weight equals recorded log probabilities at the observed data",
          "[inference]") {
  const Instance inst = make_instance(14, 2, 0.2, 71);
  REQUIRE(inst.t > 0);
  const auto& rec = inst.trace.records[inst.t - 1];
  const AuxiliaryStats aux = auxiliary_stats(inst.x, rec.members_a, rec.members_b);
  const FStatistic fs = f_statistic(inst.x, rec.members_a, rec.members_b);
  double recorded = 0.0;
  for (int s = 1; s <= inst.t; ++s) recorded += inst.trace.records[s - 1].log_prob;
  const double replayed = sequence_log_weight(fs.r, aux, inst.trace, inst.t);
  REQUIRE(replayed == Catch::Approx(recorded).margin(1e-8));
}

TEST_CASE("huge tau flattens every replay factor to 1/candidates", "[inference]") {
  auto [x, truth] = generate_two_cluster(10, 1.0, 1.0, 2, 5);
  MergeTrace trace = run_clustering(x, 1, {1e12, Linkage::complete, 3});
  const int t = 7;
  const auto& rec = trace.records[t - 1];
  const AuxiliaryStats aux = auxiliary_stats(x, rec.members_a, rec.members_b);
  double flat = 0.0;
  for (int s = 1; s <= t; ++s) flat -= std::log(trace.records[s - 1].candidate_count);
  for (double r : {0.05, 0.8, 3.0, 20.0})
    REQUIRE(sequence_log_weight(r, aux, trace, t) == Catch::Approx(flat).margin(1e-9));
}

TEST_CASE("sequence weight is continuous in r", "[inference]") {
  const Instance inst = make_instance(12, 2, 0.3, 55);
  const auto& rec = inst.trace.records[inst.t - 1];
  const AuxiliaryStats aux = auxiliary_stats(inst.x, rec.members_a, rec.members_b);
  double prev = sequence_log_weight(0.5, aux, inst.trace, inst.t);
  for (int i = 1; i <= 60; ++i) {
    const double cur = sequence_log_weight(0.5 + i * 0.01, aux, inst.trace, inst.t);
    REQUIRE(std::fabs(cur - prev) < 0.5);
    prev = cur;
  }
}

TEST_CASE("trace/aux mismatch and deterministic traces are rejected", "[inference]") {
  const Instance inst = make_instance(12, 2, 0.2, 81);
  const auto& rec = inst.trace.records[inst.t - 1];
  const AuxiliaryStats aux = auxiliary_stats(inst.x, rec.members_a, rec.members_b);
  REQUIRE_THROWS_AS(sequence_log_weight(1.0, aux, inst.trace, inst.t - 1),
                    std::invalid_argument);

  auto [x, truth] = generate_two_cluster(12, 1.5, 1.0, 2, 82);
  MergeTrace det = run_clustering(x, 1, {0.0, Linkage::complete, 1});
  const auto& drec = det.records[det.records.size() - 1];
  const AuxiliaryStats daux = auxiliary_stats(x, drec.members_a, drec.members_b);
  REQUIRE_THROWS_AS(sequence_log_weight(1.0, daux, det, drec.step), std::invalid_argument);
  QuadratureConfig quad;
  REQUIRE_THROWS_AS(p_value_f(x, det, drec.step, quad), std::invalid_argument);
}

TEST_CASE("constant weight reduces the conditional CDF to the F law", "[inference]") {
  const Instance inst = make_instance(16, 3, 0.2, 90);
  const auto& rec = inst.trace.records[inst.t - 1];
  const AuxiliaryStats aux = auxiliary_stats(inst.x, rec.members_a, rec.members_b);
  QuadratureConfig quad;
  quad.constant_weight = true;
  const double d1 = aux.p, d2 = static_cast<double>(aux.n_merged - 2) * aux.p;
  const double median = special::f_quantile(0.5, d1, d2);
  REQUIRE(conditional_cdf_f(median, aux, inst.trace, inst.t, quad) ==
          Catch::Approx(0.5).margin(1e-6));
  for (double q : {0.1, 0.35, 0.8, 0.99}) {
    const double r = special::f_quantile(q, d1, d2);
    REQUIRE(conditional_cdf_f(r, aux, inst.trace, inst.t, quad) ==
            Catch::Approx(q).margin(1e-6));
  }
  REQUIRE(conditional_cdf_f(0.0, aux, inst.trace, inst.t, quad) == 0.0);
  REQUIRE(conditional_cdf_f(1e9, aux, inst.trace, inst.t, quad) ==
          Catch::Approx(1.0).margin(1e-9));
}

TEST_CASE("conditional CDF is monotone and stable under panel doubling", "[inference]") {
  const Instance inst = make_instance(14, 2, 0.15, 101);
  const auto& rec = inst.trace.records[inst.t - 1];
  const AuxiliaryStats aux = auxiliary_stats(inst.x, rec.members_a, rec.members_b);
  QuadratureConfig quad;

  double prev = -1.0;
  for (double r : {0.0, 0.2, 0.5, 1.0, 2.0, 4.0, 8.0, 30.0}) {
    const double cdf = conditional_cdf_f(r, aux, inst.trace, inst.t, quad);
    REQUIRE(cdf >= prev - 1e-9);
    REQUIRE(cdf >= 0.0);
    REQUIRE(cdf <= 1.0);
    prev = cdf;
  }

  QuadratureConfig dense = quad;
  dense.panels = quad.panels * 2;
  for (double r : {0.4, 1.3, 3.0}) {
    const double a = conditional_cdf_f(r, aux, inst.trace, inst.t, quad);
    const double b = conditional_cdf_f(r, aux, inst.trace, inst.t, dense);
    REQUIRE(std::fabs(a - b) < 1e-6);
  }
}

TEST_CASE("quadrature matches the importance-sampling oracle", "[inference]") {
  const Instance inst = make_instance(12, 2, 0.25, 117);
  const auto& rec = inst.trace.records[inst.t - 1];
  const AuxiliaryStats aux = auxiliary_stats(inst.x, rec.members_a, rec.members_b);
  const FStatistic fs = f_statistic(inst.x, rec.members_a, rec.members_b);
  QuadratureConfig quad;
  QuadratureDiagnostics diag;
  const double quad_cdf = conditional_cdf_f(fs.r, aux, inst.trace, inst.t, quad, &diag);
  const IsEstimate oracle = is_oracle_cdf(fs.r, aux, inst.trace, inst.t, 20000, 4242);
  REQUIRE(std::fabs(quad_cdf - oracle.cdf) <= 3.0 * oracle.se);
  REQUIRE(diag.node_count == 2 * quad.panels * quad.nodes);
  REQUIRE(diag.denominator > 0.0);
  REQUIRE_FALSE(diag.underflow);
}

TEST_CASE("p_value_f: naive equals the plain F tail; diagnostics populated", "[inference]") {
  const Instance inst = make_instance(16, 3, 0.2, 130);
  QuadratureConfig naive;
  naive.constant_weight = true;
  const TestResult res = p_value_f(inst.x, inst.trace, inst.t, naive);
  const double d1 = 3.0;
  const double d2 = static_cast<double>(res.size_a + res.size_b - 2) * 3.0;
  REQUIRE(res.p_value ==
          Catch::Approx(1.0 - special::f_cdf(res.statistic, d1, d2)).margin(1e-9));
  REQUIRE(res.variant == "f");
  REQUIRE(res.step == inst.t);

  QuadratureConfig quad;
  const TestResult full = p_value_f(inst.x, inst.trace, inst.t, quad);
  REQUIRE(full.p_value >= 0.0);
  REQUIRE(full.p_value <= 1.0);
  const nlohmann::json j = test_result_to_json(full);
  REQUIRE(j.contains("p_value"));
  REQUIRE(j["diagnostics"].contains("node_count"));
}

TEST_CASE("chi statistic worked examples", "[inference]") {
  // nu = e0 - e1, so X' nu = X_0 - X_1 = (3, 4)
  const DataMatrix x = from_rows({{3, 4}, {0, 0}, {1, 1}});
  const Eigen::MatrixXd id = Eigen::MatrixXd::Identity(2, 2);
  REQUIRE(chi_statistic(x, {0}, {1}, spd_inv_sqrt(id)) == Catch::Approx(5.0));
  REQUIRE(chi_statistic(x, {0}, {1}, spd_inv_sqrt(4.0 * id)) == Catch::Approx(2.5));

  const DataMatrix same = from_rows({{2, 2}, {2, 2}, {5, 1}});
  REQUIRE(chi_statistic(same, {0}, {1}, spd_inv_sqrt(id)) == Catch::Approx(0.0).margin(1e-15));

  Eigen::MatrixXd bad(2, 2);
  bad << 1.0, 2.0, 2.0, 1.0;  // eigenvalues 3, -1
  REQUIRE_THROWS_AS(spd_inv_sqrt(bad), std::invalid_argument);
  REQUIRE_THROWS_AS(spd_sqrt(Eigen::MatrixXd::Zero(2, 2)), std::invalid_argument);
}

TEST_CASE("chi reconstruction recovers the data", "[inference]") {
  Rng rng(140);
  Eigen::MatrixXd a(3, 3);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) a(i, j) = rng.normal();
  const Eigen::MatrixXd sigma =
      a.transpose() * a / 3.0 + 0.5 * Eigen::MatrixXd::Identity(3, 3);
  auto [x, truth] = generate_two_cluster(14, 2.0, 1.0, 3, 141);
  const std::vector<int> c1{0, 3, 5}, c2{2, 8};
  const Eigen::MatrixXd half = spd_sqrt(sigma), half_inv = spd_inv_sqrt(sigma);
  REQUIRE((half * half - sigma).norm() < 1e-12 * sigma.norm());
  REQUIRE((half * half_inv - Eigen::MatrixXd::Identity(3, 3)).norm() < 1e-12);

  const ChiAuxiliaryStats aux = chi_auxiliary_stats(x, c1, c2, half, half_inv);
  REQUIRE(aux.xi.norm() == Catch::Approx(1.0).epsilon(1e-10));
  const double u = chi_statistic(x, c1, c2, half_inv);
  const DataMatrix back = reconstruct_chi(u, aux);
  REQUIRE((back.values - x.values).norm() <= 1e-8 * x.values.norm());
  // rows outside the merged pair pass through unchanged
  for (int i : {1, 4, 6, 7, 9, 10, 11, 12, 13})
    REQUIRE((aux.pi_resid.row(i) - x.values.row(i)).norm() == 0.0);
}

TEST_CASE("p_value_chi: naive equals the scaled-chi tail and calibrates", "[inference]") {
  const Instance inst = make_instance(14, 3, 0.2, 150);
  const Eigen::MatrixXd sigma = Eigen::MatrixXd::Identity(3, 3);
  QuadratureConfig naive;
  naive.constant_weight = true;
  const TestResult res = p_value_chi(inst.x, inst.trace, inst.t, sigma, naive);
  const auto& rec = inst.trace.records[inst.t - 1];
  const ContrastVector cv = contrast_vector(rec.members_a, rec.members_b, inst.x.n());
  const double expect =
      1.0 - special::chi_cdf(res.statistic / std::sqrt(cv.norm_sq), 3.0);
  REQUIRE(res.p_value == Catch::Approx(expect).margin(1e-9));
  REQUIRE(res.variant == "chi");

  QuadratureConfig quad;
  const TestResult full = p_value_chi(inst.x, inst.trace, inst.t, sigma, quad);
  REQUIRE(full.p_value >= 0.0);
  REQUIRE(full.p_value <= 1.0);
}

TEST_CASE("null chi p-values are close to uniform at desk scale", "[inference]") {
  const int reps = 200;
  std::vector<double> pvals(reps);
  QuadratureConfig quad;
  quad.panels = 24;
  quad.nodes = 8;
  const Eigen::MatrixXd sigma = Eigen::MatrixXd::Identity(3, 3);
  for (int r = 0; r < reps; ++r) {
    auto [x, truth] = generate_two_cluster(16, 0.0, 1.0, 3, substream_seed(777, r));
    MergeTrace trace =
        run_clustering(x, 1, {0.1, Linkage::complete, substream_seed(778, r)});
    pvals[r] = p_value_chi(x, trace, 15, sigma, quad).p_value;
  }
  std::sort(pvals.begin(), pvals.end());
  double ks = 0.0;
  for (int i = 0; i < reps; ++i) {
    ks = std::max(ks, (i + 1.0) / reps - pvals[i]);
    ks = std::max(ks, pvals[i] - static_cast<double>(i) / reps);
  }
  REQUIRE(ks < 0.12);  // 1% critical value at 200 draws is ~0.115
}

TEST_CASE("plug-in variance helper", "[inference]") {
  auto [x, truth] = generate_two_cluster(400, 0.0, 2.0, 5, 160);
  // sigma_hat^2 estimates sigma^2 = 4 under the null
  REQUIRE(sigma_hat_sq(x) == Catch::Approx(4.0).epsilon(0.15));
}
