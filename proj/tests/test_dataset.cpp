#include "rhc/dataset.hpp"

#include <catch2/catch_amalgamated.hpp>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "rhc/csv.hpp"
#include "rhc/engine.hpp"
#include "rhc/metrics.hpp"

using namespace rhc;

namespace {

std::filesystem::path write_temp_csv(const std::string& name, const std::string& content) {
  const auto path = std::filesystem::temp_directory_path() / name;
  std::ofstream out(path);
  out << content;
  return path;
}

}  // namespace

TEST_CASE("two-cluster generator geometry and labels", "[dataset]") {
  auto [x, truth] = generate_two_cluster(30, 6.0, 1.0, 2, 1);
  REQUIRE(x.n() == 30);
  REQUIRE(x.p() == 2);
  REQUIRE(truth.k_star == 2);
  REQUIRE(std::count(truth.labels.begin(), truth.labels.end(), 1) == 15);
  REQUIRE(std::count(truth.labels.begin(), truth.labels.end(), 2) == 15);
  const Eigen::MatrixXd& mu = *truth.mu;
  REQUIRE((mu.row(0) - mu.row(29)).norm() == Catch::Approx(6.0).epsilon(1e-14));

  auto [x0, truth0] = generate_two_cluster(30, 0.0, 1.0, 10, 2);
  REQUIRE(truth0.k_star == 1);
  REQUIRE(truth0.mu->isZero());

  REQUIRE_THROWS_AS(generate_two_cluster(31, 1.0, 1.0, 2, 1), std::invalid_argument);
  REQUIRE_THROWS_AS(generate_two_cluster(30, 1.0, 0.0, 2, 1), std::invalid_argument);
  REQUIRE_THROWS_AS(generate_two_cluster(30, 1.0, -1.0, 2, 1), std::invalid_argument);
}

TEST_CASE("well-separated two-cluster data is perfectly recovered", "[dataset]") {
  auto [x, truth] = generate_two_cluster(4, 1000.0, 1e-6, 2, 3);
  const MergeTrace trace = run_clustering(x, 2, {0.0, Linkage::complete, 0});
  REQUIRE(ari(trace.final_labels, truth.labels) == Catch::Approx(1.0));
}

TEST_CASE("three-cluster generator means are equidistant", "[dataset]") {
  for (double delta : {1.0, 6.0, 14.0}) {
    auto [x, truth] = generate_three_cluster(30, delta, 1.0, 4);
    const Eigen::MatrixXd& mu = *truth.mu;
    const double d01 = (mu.row(0) - mu.row(10)).norm();
    const double d02 = (mu.row(0) - mu.row(20)).norm();
    const double d12 = (mu.row(10) - mu.row(20)).norm();
    REQUIRE(std::fabs(d01 - delta) < 1e-12);
    REQUIRE(std::fabs(d02 - delta) < 1e-12);
    REQUIRE(std::fabs(d12 - delta) < 1e-12);
    REQUIRE(truth.k_star == 3);
  }
  auto [x, truth] = generate_three_cluster(30, 0.0, 1.0, 4);
  REQUIRE(truth.k_star == 1);
  REQUIRE_THROWS_AS(generate_three_cluster(31, 1.0, 1.0, 4), std::invalid_argument);
}

TEST_CASE("circular generator sizes and centers", "[dataset]") {
  auto [x, truth] = generate_circular(200, 10, 6.0, 1.0, 5);
  std::map<int, int> sizes;
  for (int l : truth.labels) sizes[l] += 1;
  REQUIRE(sizes.size() == 10);
  for (const auto& [label, size] : sizes) REQUIRE(size == 20);
  for (int i = 0; i < 200; ++i) REQUIRE(truth.mu->row(i).norm() == Catch::Approx(6.0));

  auto [x7, truth7] = generate_circular(7, 3, 6.0, 1.0, 5);
  std::map<int, int> sizes7;
  for (int l : truth7.labels) sizes7[l] += 1;
  REQUIRE(sizes7[1] == 3);
  REQUIRE(sizes7[2] == 2);
  REQUIRE(sizes7[3] == 2);

  auto [x1, truth1] = generate_circular(12, 1, 6.0, 1.0, 5);
  REQUIRE(truth1.k_star == 1);
  for (int i = 0; i < 12; ++i) {
    REQUIRE((*truth1.mu)(i, 0) == Catch::Approx(6.0));
    REQUIRE((*truth1.mu)(i, 1) == Catch::Approx(0.0).margin(1e-12));
  }
}

TEST_CASE("generators are bit-deterministic in the seed", "[dataset]") {
  auto [a, ta] = generate_two_cluster(20, 3.0, 2.0, 4, 77);
  auto [b, tb] = generate_two_cluster(20, 3.0, 2.0, 4, 77);
  auto [c, tc] = generate_two_cluster(20, 3.0, 2.0, 4, 78);
  REQUIRE(a.values == b.values);
  REQUIRE(a.values != c.values);
}

TEST_CASE("group means converge to true means", "[dataset]") {
  const int reps = 1000, n = 30, group = n / 2;
  const double sigma = 1.0;
  double acc = 0.0;
  for (int r = 0; r < reps; ++r) {
    auto [x, truth] = generate_two_cluster(n, 6.0, sigma, 1, substream_seed(900, r));
    acc += x.values.col(0).head(group).mean();
  }
  const double tolerance = 4.0 * sigma / std::sqrt(static_cast<double>(reps) * group);
  REQUIRE(std::fabs(acc / reps - 0.0) < tolerance);
}

TEST_CASE("standardize z-scores each column", "[dataset]") {
  auto [x, truth] = generate_two_cluster(40, 3.0, 2.5, 3, 11);
  const DataMatrix z = standardize(x);
  for (int j = 0; j < z.p(); ++j) {
    REQUIRE(z.values.col(j).mean() == Catch::Approx(0.0).margin(1e-12));
    REQUIRE(z.values.col(j).squaredNorm() / (z.n() - 1) == Catch::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("csv loader filters, drops malformed rows, records provenance", "[dataset]") {
  const auto path = write_temp_csv("rhc_test_basic.csv",
                                   "id,len,wid,sex,year\n"
                                   "0,10.5,3.2,female,2007\n"
                                   "1,11.0,3.0,male,2007\n"
                                   "2,oops,3.3,female,2008\n"
                                   "3,12.5,3.1,female,2008\n"
                                   "4,13.0,,female,2008\n"
                                   "5,14.0,3.7,female,2009\n"
                                   "6,15.0,3.9,FEMALE,2008\n");

  SECTION("filters AND across columns, OR within a column") {
    const auto res = load_csv(path.string(), {"len", "wid"},
                              {{"sex", "female"}, {"year", "2007"}, {"year", "2008"}});
    REQUIRE(res.X.n() == 2);  // rows 0 and 3; 2 fails parse, 4 missing, 5 year, 6 case
    REQUIRE(res.provenance == std::vector<int>{0, 3});
    REQUIRE(res.X.values(0, 0) == Catch::Approx(10.5));
    REQUIRE(res.X.values(1, 1) == Catch::Approx(3.1));
  }

  SECTION("empty filter list keeps all parseable rows") {
    const auto res = load_csv(path.string(), {"len", "wid"});
    REQUIRE(res.X.n() == 5);  // drops rows 2 (parse) and 4 (missing)
    REQUIRE(res.provenance == std::vector<int>{0, 1, 3, 5, 6});
  }

  SECTION("unknown columns and missing files raise io_error") {
    REQUIRE_THROWS_AS(load_csv(path.string(), {"nope"}), io_error);
    REQUIRE_THROWS_AS(load_csv(path.string(), {"len"}, {{"nope", "1"}}), io_error);
    REQUIRE_THROWS_AS(load_csv("/nonexistent/file.csv", {"len"}), io_error);
  }
}

TEST_CASE("csv loader drops exactly the malformed row among ten", "[dataset]") {
  std::string content = "v\n";
  for (int i = 0; i < 10; ++i) content += (i == 6) ? "bad\n" : std::to_string(i) + ".5\n";
  const auto path = write_temp_csv("rhc_test_malformed.csv", content);
  const auto res = load_csv(path.string(), {"v"});
  REQUIRE(res.X.n() == 9);
  REQUIRE(std::find(res.provenance.begin(), res.provenance.end(), 6) == res.provenance.end());
}
