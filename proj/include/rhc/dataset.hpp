#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <optional>
#include <stdexcept>
#include <utility>
#include <vector>

#include "rhc/rng.hpp"

namespace rhc {

// n x p observations, rows are observations. Entries must be finite.
struct DataMatrix {
  Eigen::MatrixXd values;

  explicit DataMatrix(Eigen::MatrixXd v) : values(std::move(v)) {
    if (values.rows() < 2 || values.cols() < 1)
      throw std::invalid_argument("DataMatrix: need n >= 2 rows and p >= 1 columns");
    if (!values.allFinite()) throw std::invalid_argument("DataMatrix: entries must be finite");
  }

  int n() const { return static_cast<int>(values.rows()); }
  int p() const { return static_cast<int>(values.cols()); }
};

struct GroundTruth {
  std::vector<int> labels;  // values in {1..k_star}
  int k_star = 1;
  std::optional<Eigen::MatrixXd> mu;  // per-observation true means
  std::optional<double> sigma;
};

namespace detail {

inline Eigen::MatrixXd noisy(const Eigen::MatrixXd& mu, double sigma, std::uint64_t seed) {
  Rng rng(seed);
  Eigen::MatrixXd x(mu.rows(), mu.cols());
  // Row-major fill order is part of the seed contract.
  for (Eigen::Index i = 0; i < x.rows(); ++i)
    for (Eigen::Index j = 0; j < x.cols(); ++j) x(i, j) = mu(i, j) + sigma * rng.normal();
  return x;
}

}  // namespace detail

// Two groups of n/2, means at the origin and at (delta, 0, ..., 0).
inline std::pair<DataMatrix, GroundTruth> generate_two_cluster(int n, double delta, double sigma,
                                                               int p, std::uint64_t seed) {
  if (n < 2 || n % 2 != 0) throw std::invalid_argument("generate_two_cluster: n must be even and >= 2");
  if (p < 1) throw std::invalid_argument("generate_two_cluster: p must be >= 1");
  if (!(sigma > 0.0)) throw std::invalid_argument("generate_two_cluster: sigma must be > 0");
  if (delta < 0.0) throw std::invalid_argument("generate_two_cluster: delta must be >= 0");
  Eigen::MatrixXd mu = Eigen::MatrixXd::Zero(n, p);
  mu.block(n / 2, 0, n / 2, 1).setConstant(delta);
  GroundTruth truth;
  truth.k_star = delta > 0.0 ? 2 : 1;
  truth.labels.assign(n, 1);
  if (truth.k_star == 2)
    for (int i = n / 2; i < n; ++i) truth.labels[i] = 2;
  truth.mu = mu;
  truth.sigma = sigma;
  return {DataMatrix(detail::noisy(mu, sigma, seed)), std::move(truth)};
}

// Three equal groups with equilateral means (0,0), (delta,0), (delta/2, sqrt(3)/2*delta); p = 2.
inline std::pair<DataMatrix, GroundTruth> generate_three_cluster(int n, double delta, double sigma,
                                                                 std::uint64_t seed) {
  if (n < 3 || n % 3 != 0)
    throw std::invalid_argument("generate_three_cluster: n must be divisible by 3 and >= 3");
  if (!(sigma > 0.0)) throw std::invalid_argument("generate_three_cluster: sigma must be > 0");
  if (delta < 0.0) throw std::invalid_argument("generate_three_cluster: delta must be >= 0");
  const int g = n / 3;
  Eigen::MatrixXd mu = Eigen::MatrixXd::Zero(n, 2);
  for (int i = g; i < 2 * g; ++i) mu(i, 0) = delta;
  for (int i = 2 * g; i < n; ++i) {
    mu(i, 0) = 0.5 * delta;
    mu(i, 1) = std::sqrt(3.0) / 2.0 * delta;
  }
  GroundTruth truth;
  truth.k_star = delta > 0.0 ? 3 : 1;
  truth.labels.assign(n, 1);
  if (truth.k_star == 3)
    for (int i = 0; i < n; ++i) truth.labels[i] = i / g + 1;
  truth.mu = mu;
  truth.sigma = sigma;
  return {DataMatrix(detail::noisy(mu, sigma, seed)), std::move(truth)};
}

// k_star centers evenly spaced on the circle of the given radius (p = 2),
// group sizes as even as possible (first n mod k_star groups get one extra).
inline std::pair<DataMatrix, GroundTruth> generate_circular(int n, int k_star, double radius,
                                                            double sigma, std::uint64_t seed) {
  if (k_star < 1) throw std::invalid_argument("generate_circular: k_star must be >= 1");
  if (n < k_star || n < 2) throw std::invalid_argument("generate_circular: need n >= max(2, k_star)");
  if (!(sigma > 0.0)) throw std::invalid_argument("generate_circular: sigma must be > 0");
  if (radius < 0.0) throw std::invalid_argument("generate_circular: radius must be >= 0");
  constexpr double pi = 3.14159265358979323846;
  Eigen::MatrixXd mu(n, 2);
  GroundTruth truth;
  truth.k_star = k_star;
  truth.labels.assign(n, 1);
  const int base = n / k_star, extra = n % k_star;
  int row = 0;
  for (int k = 0; k < k_star; ++k) {
    const double angle = 2.0 * pi * k / k_star;
    const double cx = radius * std::cos(angle), cy = radius * std::sin(angle);
    const int size = base + (k < extra ? 1 : 0);
    for (int s = 0; s < size; ++s, ++row) {
      mu(row, 0) = cx;
      mu(row, 1) = cy;
      truth.labels[row] = k + 1;
    }
  }
  truth.mu = mu;
  truth.sigma = sigma;
  return {DataMatrix(detail::noisy(mu, sigma, seed)), std::move(truth)};
}

// Per-column z-scoring (opt-in; generators and the CSV loader return raw features).
inline DataMatrix standardize(const DataMatrix& x) {
  Eigen::MatrixXd v = x.values;
  for (Eigen::Index j = 0; j < v.cols(); ++j) {
    const double mean = v.col(j).mean();
    v.col(j).array() -= mean;
    const double sd = std::sqrt(v.col(j).squaredNorm() / (v.rows() - 1));
    if (sd > 0.0) v.col(j) /= sd;
  }
  return DataMatrix(std::move(v));
}

}  // namespace rhc
