// Command-line driver: randomized hierarchical clustering, per-merge
// conditional p-values, cluster-count selection, stability, the gap
// statistic, and the simulation harness.

#include <CLI11.hpp>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "rhc/bench.hpp"
#include "rhc/csv.hpp"
#include "rhc/dataset.hpp"
#include "rhc/engine.hpp"
#include "rhc/inference.hpp"
#include "rhc/metrics.hpp"
#include "rhc/selection.hpp"

using namespace rhc;

namespace {

struct DataOptions {
  std::string csv_path;
  std::vector<std::string> features;
  std::vector<std::string> filters;  // "col=value"
  bool standardize = false;
  std::string generate;  // two | three | circular
  int n = 30;
  int p = 2;
  double delta = 6.0;
  double sigma = 1.0;
  int k_star = 3;
  double radius = 6.0;
};

void add_data_options(CLI::App* cmd, DataOptions& opts) {
  cmd->add_option("--csv", opts.csv_path, "input CSV file (UTF-8, header row)");
  cmd->add_option("--features", opts.features, "feature column names")->delimiter(',');
  cmd->add_option("--filter", opts.filters,
                  "row filter col=value; repeat for more (same column ORs, "
                  "different columns AND)");
  cmd->add_flag("--standardize", opts.standardize, "z-score each feature column");
  cmd->add_option("--generate", opts.generate, "synthetic generator: two|three|circular");
  cmd->add_option("--n", opts.n, "observations");
  cmd->add_option("--p", opts.p, "dimensions (two-cluster generator)");
  cmd->add_option("--delta", opts.delta, "separation between true means");
  cmd->add_option("--noise", opts.sigma, "noise scale of the generator");
  cmd->add_option("--k-star", opts.k_star, "true cluster count (circular generator)");
  cmd->add_option("--radius", opts.radius, "circle radius (circular generator)");
}

DataMatrix load_data(const DataOptions& opts, std::uint64_t seed) {
  std::optional<DataMatrix> x;
  if (!opts.csv_path.empty()) {
    if (opts.features.empty())
      throw CLI::ValidationError("--features", "required with --csv");
    std::vector<CsvFilter> filters;
    for (const auto& f : opts.filters) {
      const auto eq = f.find('=');
      if (eq == std::string::npos)
        throw CLI::ValidationError("--filter", "expected col=value, got '" + f + "'");
      filters.push_back({f.substr(0, eq), f.substr(eq + 1)});
    }
    x = load_csv(opts.csv_path, opts.features, filters).X;
  } else if (opts.generate == "two") {
    x = generate_two_cluster(opts.n, opts.delta, opts.sigma, opts.p, seed).first;
  } else if (opts.generate == "three") {
    x = generate_three_cluster(opts.n, opts.delta, opts.sigma, seed).first;
  } else if (opts.generate == "circular") {
    x = generate_circular(opts.n, opts.k_star, opts.radius, opts.sigma, seed).first;
  } else {
    throw CLI::ValidationError("data", "give --csv or --generate two|three|circular");
  }
  return opts.standardize ? standardize(*x) : *x;
}

void write_or_print(const nlohmann::json& j, const std::string& out_path) {
  if (out_path.empty()) {
    std::cout << j.dump(2) << "\n";
  } else {
    std::filesystem::path p(out_path);
    if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
    std::ofstream out(p);
    out << j.dump(2) << "\n";
  }
}

// n-min/n-star accept an absolute count (>= 1) or a fraction of n (< 1).
int resolve_cutoff(double raw, int n) {
  if (raw <= 0.0) return 0;
  if (raw < 1.0) return static_cast<int>(std::ceil(raw * n));
  return static_cast<int>(raw);
}

Eigen::MatrixXd load_sigma(const std::string& arg, const DataMatrix& x) {
  if (arg == "plugin") return sigma_hat_sq(x) * Eigen::MatrixXd::Identity(x.p(), x.p());
  try {
    const double scalar = std::stod(arg);
    return scalar * Eigen::MatrixXd::Identity(x.p(), x.p());
  } catch (const std::invalid_argument&) {
  }
  // p x p matrix, one CSV row per line
  std::ifstream in(arg);
  if (!in) throw io_error("cannot open sigma file '" + arg + "'");
  std::vector<std::vector<double>> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) row.push_back(std::stod(cell));
    rows.push_back(std::move(row));
  }
  Eigen::MatrixXd sigma(rows.size(), rows.empty() ? 0 : rows[0].size());
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < rows[i].size(); ++j) sigma(i, j) = rows[i][j];
  return sigma;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"randomized hierarchical clustering with conditional inference"};
  app.require_subcommand(1);

  std::uint64_t seed = 1;
  int threads = 1;
  std::string out_dir = "out";
  int scale = 1;
  app.add_option("--seed", seed, "master RNG seed")->capture_default_str();
  app.add_option("--threads", threads, "worker threads")->capture_default_str();
  app.add_option("--out-dir", out_dir, "output directory")->capture_default_str();
  app.add_option("--scale", scale, "divide replication counts by this factor")
      ->capture_default_str();

  // shared method options
  double tau = 0.1;
  std::string linkage_name = "complete";
  int quad_panels = 64, quad_nodes = 16;
  bool naive = false;

  auto add_method = [&](CLI::App* cmd, bool with_quad) {
    cmd->add_option("--tau", tau, "randomization level (0 = deterministic)")
        ->capture_default_str();
    cmd->add_option("--linkage", linkage_name, "complete|single|average|minimax")
        ->capture_default_str();
    if (with_quad) {
      cmd->add_option("--quad-panels", quad_panels, "quadrature panels per side")
          ->capture_default_str();
      cmd->add_option("--quad-nodes", quad_nodes, "Gauss-Legendre nodes per panel")
          ->capture_default_str();
      cmd->add_flag("--naive", naive, "constant-weight override (uncorrected test)");
    }
  };

  // ---- cluster ----
  DataOptions cluster_data;
  int cluster_k = 2;
  std::string cluster_out;
  auto* cluster_cmd = app.add_subcommand("cluster", "run randomized agglomerative clustering");
  add_data_options(cluster_cmd, cluster_data);
  add_method(cluster_cmd, false);
  cluster_cmd->add_option("--k", cluster_k, "target number of clusters")->capture_default_str();
  cluster_cmd->add_option("--out", cluster_out, "trace JSON path (default: stdout)");

  // ---- pvalue ----
  DataOptions pvalue_data;
  int pvalue_k = 2, pvalue_step = 0;
  std::string pvalue_variant = "f", pvalue_sigma = "plugin", pvalue_out;
  auto* pvalue_cmd =
      app.add_subcommand("pvalue", "conditional p-value for one merge of the dendrogram");
  add_data_options(pvalue_cmd, pvalue_data);
  add_method(pvalue_cmd, true);
  pvalue_cmd->add_option("--k", pvalue_k, "test the merge joining the K resulting clusters")
      ->capture_default_str();
  pvalue_cmd->add_option("--step", pvalue_step, "test this merge step instead (1-based)");
  pvalue_cmd->add_option("--variant", pvalue_variant, "f|chi")->capture_default_str();
  pvalue_cmd->add_option("--sigma", pvalue_sigma,
                         "chi variant covariance: scalar, matrix CSV file, or 'plugin'")
      ->capture_default_str();
  pvalue_cmd->add_option("--out", pvalue_out, "result JSON path (default: stdout)");

  // ---- choose-k ----
  DataOptions choosek_data;
  double alpha = 0.05, decay = 0.5, n_min_raw = 0.0, n_star_raw = 0.0;
  std::string choosek_out;
  auto* choosek_cmd = app.add_subcommand("choose-k", "alpha-spending cluster-count estimate");
  add_data_options(choosek_cmd, choosek_data);
  add_method(choosek_cmd, true);
  choosek_cmd->add_option("--alpha", alpha, "total significance budget")->capture_default_str();
  choosek_cmd->add_option("--decay", decay, "exponential decay rate of the alpha sequence")
      ->capture_default_str();
  choosek_cmd->add_option("--n-min", n_min_raw,
                          "smallest testable cluster size; int, or fraction of n");
  choosek_cmd->add_option("--n-star", n_star_raw,
                          "conservative-level size cutoff; int, or fraction of n");
  choosek_cmd->add_option("--out", choosek_out, "result JSON path (default: stdout)");

  // ---- stability ----
  DataOptions stability_data;
  int stability_k = 2, stability_runs = 500;
  auto* stability_cmd =
      app.add_subcommand("stability", "co-occurrence matrix over repeated randomized runs");
  add_data_options(stability_cmd, stability_data);
  add_method(stability_cmd, false);
  stability_cmd->add_option("--k", stability_k, "clusters per run")->capture_default_str();
  stability_cmd->add_option("--runs", stability_runs, "number of runs")->capture_default_str();

  // ---- gap ----
  DataOptions gap_data;
  int gap_kmax = 10, gap_brefs = 50;
  auto* gap_cmd = app.add_subcommand("gap", "gap-statistic baseline for the cluster count");
  add_data_options(gap_cmd, gap_data);
  add_method(gap_cmd, false);
  gap_cmd->add_option("--k-max", gap_kmax, "largest K to consider")->capture_default_str();
  gap_cmd->add_option("--b-refs", gap_brefs, "reference datasets")->capture_default_str();

  // ---- simulate ----
  std::string sim_kind;
  ExperimentSpec sim;
  auto* sim_cmd = app.add_subcommand("simulate", "run a simulation study, writing CSV tables");
  sim_cmd->add_option("kind", sim_kind,
                      "null-calibration|power-curve|fwer|k-histogram|stability|quality-sweep")
      ->required();
  sim_cmd->add_option("--reps", sim.replications, "replications")->capture_default_str();
  sim_cmd->add_option("--generator", sim.generator, "two|three|circular")->capture_default_str();
  sim_cmd->add_option("--n", sim.n)->capture_default_str();
  sim_cmd->add_option("--p", sim.p)->capture_default_str();
  sim_cmd->add_option("--delta", sim.delta)->capture_default_str();
  sim_cmd->add_option("--sigma", sim.sigma)->capture_default_str();
  sim_cmd->add_option("--k-star", sim.k_star)->capture_default_str();
  sim_cmd->add_option("--radius", sim.radius)->capture_default_str();
  sim_cmd->add_option("--tau", sim.tau)->capture_default_str();
  sim_cmd->add_option("--taus", sim.taus, "tau grid for fwer/quality-sweep")->delimiter(',');
  sim_cmd->add_option("--linkage", linkage_name)->capture_default_str();
  sim_cmd->add_option("--k", sim.k_target, "tested dendrogram level")->capture_default_str();
  sim_cmd->add_option("--alpha", sim.alpha)->capture_default_str();
  sim_cmd->add_option("--decay", sim.decay)->capture_default_str();
  sim_cmd->add_option("--n-min", sim.n_min)->capture_default_str();
  sim_cmd->add_option("--n-star", sim.n_star)->capture_default_str();
  sim_cmd->add_option("--k-max", sim.k_max)->capture_default_str();
  sim_cmd->add_option("--b-refs", sim.b_refs)->capture_default_str();
  sim_cmd->add_option("--batch", sim.batch)->capture_default_str();
  sim_cmd->add_flag("--naive", sim.naive, "constant-weight override");
  sim_cmd->add_option("--quad-panels", sim.quad.panels)->capture_default_str();
  sim_cmd->add_option("--quad-nodes", sim.quad.nodes)->capture_default_str();
  // the stability kind can also run on a CSV dataset
  DataOptions sim_data;
  sim_cmd->add_option("--csv", sim_data.csv_path, "input CSV (stability kind)");
  sim_cmd->add_option("--features", sim_data.features, "feature columns")->delimiter(',');
  sim_cmd->add_option("--filter", sim_data.filters, "row filter col=value (repeatable)");
  sim_cmd->add_flag("--standardize", sim_data.standardize, "z-score feature columns");
  int sim_stability_k = 2;
  sim_cmd->add_option("--stability-k", sim_stability_k, "clusters per stability run")
      ->capture_default_str();

  CLI11_PARSE(app, argc, argv);

  try {
    const Linkage linkage = linkage_from_string(linkage_name);
    QuadratureConfig quad;
    quad.panels = quad_panels;
    quad.nodes = quad_nodes;
    quad.constant_weight = naive;
    quad.threads = threads;

    if (*cluster_cmd) {
      const DataMatrix x = load_data(cluster_data, substream_seed(seed, 0));
      const MergeTrace trace = run_clustering(x, cluster_k, {tau, linkage, seed});
      write_or_print(trace_to_json(trace), cluster_out);
    } else if (*pvalue_cmd) {
      const DataMatrix x = load_data(pvalue_data, substream_seed(seed, 0));
      const int t = pvalue_step > 0 ? pvalue_step : x.n() - pvalue_k + 1;
      const MergeTrace trace = run_clustering(x, 1, {tau, linkage, seed});
      TestResult res;
      if (pvalue_variant == "f") {
        res = p_value_f(x, trace, t, quad);
      } else if (pvalue_variant == "chi") {
        res = p_value_chi(x, trace, t, load_sigma(pvalue_sigma, x), quad);
      } else {
        throw CLI::ValidationError("--variant", "must be f or chi");
      }
      write_or_print(test_result_to_json(res), pvalue_out);
    } else if (*choosek_cmd) {
      const DataMatrix x = load_data(choosek_data, substream_seed(seed, 0));
      SelectionConfig cfg;
      cfg.linkage = linkage;
      cfg.tau = tau;
      cfg.alpha_total = alpha;
      cfg.decay = decay;
      cfg.n_min = resolve_cutoff(n_min_raw, x.n());
      cfg.n_star = resolve_cutoff(n_star_raw, x.n());
      cfg.rng_seed = seed;
      cfg.quad = quad;
      const auto [est, trace] = estimate_k(x, cfg);
      nlohmann::json j = k_estimate_to_json(est);
      j["trace"] = trace_to_json(trace);
      write_or_print(j, choosek_out);
    } else if (*stability_cmd) {
      const DataMatrix x = load_data(stability_data, substream_seed(seed, 0));
      const CooccurrenceMatrix m =
          run_stability(x, stability_k, tau, linkage, std::max(1, stability_runs / scale),
                        seed, threads);
      emit_cooccurrence(out_dir, "cooccurrence.csv", m);
      std::cout << "wrote " << out_dir << "/cooccurrence.csv (" << m.runs << " runs)\n";
    } else if (*gap_cmd) {
      const DataMatrix x = load_data(gap_data, substream_seed(seed, 0));
      const GapResult g = gap_statistic(x, gap_kmax, gap_brefs, linkage, seed);
      std::filesystem::create_directories(out_dir);
      std::ofstream out(std::filesystem::path(out_dir) / "gap.csv");
      out << "k,log_wk,gap,s_k\n";
      for (std::size_t k = 0; k < g.gap.size(); ++k)
        out << k + 1 << "," << g.log_wk[k] << "," << g.gap[k] << "," << g.s_k[k] << "\n";
      std::cout << "k_hat=" << g.k_hat << " (table in " << out_dir << "/gap.csv)\n";
    } else if (*sim_cmd) {
      sim.linkage = linkage;
      sim.seed = seed;
      sim.scale = scale;
      sim.threads = threads;
      const std::filesystem::path dir(out_dir);
      if (sim_kind == "null-calibration") {
        sim.kind = "null_calibration";
        const auto res = run_null_calibration(sim);
        emit_null_calibration(dir, sim, res);
        std::cout << "ks=" << res.ks << " type_i=" << res.type_i << "\n";
      } else if (sim_kind == "power-curve") {
        sim.kind = "power_curve";
        emit_power_curve(dir, sim, run_power_curve(sim));
      } else if (sim_kind == "fwer") {
        sim.kind = "fwer";
        const auto rows = run_fwer(sim);
        emit_fwer(dir, sim, rows);
        for (const auto& r : rows)
          std::cout << r.method << " tau=" << r.tau << " fraction=" << r.fraction << "\n";
      } else if (sim_kind == "k-histogram") {
        sim.kind = "k_histogram";
        emit_k_histogram(dir, sim, run_k_histogram(sim));
      } else if (sim_kind == "stability") {
        sim.kind = "stability";
        sim_data.generate = sim_data.csv_path.empty() ? sim.generator : "";
        sim_data.n = sim.n;
        sim_data.p = sim.p;
        sim_data.delta = sim.delta;
        sim_data.sigma = sim.sigma;
        sim_data.k_star = sim.k_star;
        sim_data.radius = sim.radius;
        const DataMatrix x = load_data(sim_data, substream_seed(seed, 0));
        const CooccurrenceMatrix m =
            run_stability(x, sim_stability_k, sim.tau, linkage, sim.effective_reps(), seed,
                          threads);
        emit_cooccurrence(dir, "cooccurrence.csv", m);
        write_manifest(dir, sim, {{"runs", m.runs}});
      } else if (sim_kind == "quality-sweep") {
        sim.kind = "quality_sweep";
        emit_quality_sweep(dir, sim, run_quality_sweep(sim));
      } else {
        throw CLI::ValidationError("kind", "unknown experiment '" + sim_kind + "'");
      }
      std::cout << "tables written to " << out_dir << "\n";
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
