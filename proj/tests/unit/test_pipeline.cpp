#include <filesystem>
#include <fstream>

#include "doctest.h"

#include "coldrec/errors.hpp"
#include "coldrec/io.hpp"
#include "coldrec/pipeline.hpp"
#include "test_util.hpp"

using namespace coldrec;
using test::TempDir;

namespace {

MetricReport report_for(double alpha, double ndcg, double min80) {
  MetricReport r;
  r.k = 20;
  r.alpha = alpha;
  r.values["ndcg"] = ndcg;
  r.values["mdg_min80"] = min80;
  return r;
}

ExperimentConfig tiny_config() {
  ExperimentConfig cfg;
  SyntheticConfig synth;
  synth.num_users = 300;
  synth.num_items = 210;
  synth.latent_dim = 8;
  synth.feature_dim = 16;
  synth.interactions_per_user = 10;
  cfg.synthetic = synth;
  cfg.warm_frac = 5.0 / 7.0;
  cfg.bpr.latent_dim = 8;
  cfg.bpr.epochs = 6;
  cfg.bpr.negatives_per_positive = 1;
  cfg.num_runs = 2;
  cfg.k_list = {10, 20};
  cfg.alpha_sweep = {1.0, 3.0};
  cfg.seed = 5;
  return cfg;
}

}  // namespace

TEST_CASE("select_alpha balances accuracy budget against min80") {
  // only alpha=0 within budget
  std::vector<MetricReport> reports{report_for(0.0, 0.5, 0.01),
                                    report_for(1.0, 0.3, 0.09)};
  CHECK(select_alpha(reports, 0.1) == 0.0);

  // two alphas inside the budget with equal min80: smaller wins
  reports = {report_for(0.0, 0.5, 0.01), report_for(1.0, 0.49, 0.05),
             report_for(2.0, 0.48, 0.05)};
  CHECK(select_alpha(reports, 0.1) == 1.0);

  // alpha=1 barely passes the budget and maximizes min80
  reports = {report_for(0.0, 0.50, 0.01), report_for(0.5, 0.49, 0.03),
             report_for(1.0, 0.451, 0.08), report_for(2.0, 0.40, 0.10)};
  CHECK(select_alpha(reports, 0.1) == 1.0);

  // unbounded budget returns the global min80 maximizer
  CHECK(select_alpha(reports, std::numeric_limits<double>::infinity()) == 2.0);

  // zero budget keeps only alphas at least as accurate as alpha=0
  reports = {report_for(0.0, 0.50, 0.01), report_for(1.0, 0.50, 0.02),
             report_for(2.0, 0.499, 0.50)};
  CHECK(select_alpha(reports, 0.0) == 1.0);

  CHECK_THROWS_AS(select_alpha({report_for(1.0, 0.5, 0.1)}, 0.1), ConfigError);
}

TEST_CASE("compare_runs flags significant and large changes") {
  std::vector<MetricReport> base, treated;
  for (int run = 0; run < 5; ++run) {
    MetricReport b;
    b.values = {{"gini_div", 0.40 + 0.001 * run}, {"ndcg", 0.200}};
    base.push_back(b);
    MetricReport t;
    t.values = {{"gini_div", 0.60 + 0.001 * run}, {"ndcg", 0.200}};
    treated.push_back(t);
  }
  const auto rows = compare_runs(base, treated);
  REQUIRE(rows.size() == 2);
  const auto& gini = rows[0].metric == "gini_div" ? rows[0] : rows[1];
  const auto& ndcg = rows[0].metric == "ndcg" ? rows[0] : rows[1];
  CHECK(gini.significant_gain);
  CHECK_FALSE(gini.significant_loss);
  CHECK(gini.large_change);
  CHECK(gini.delta == doctest::Approx(0.2).epsilon(1e-9));
  CHECK_FALSE(ndcg.significant_gain);
  CHECK_FALSE(ndcg.large_change);
  CHECK(ndcg.delta == doctest::Approx(0.0));

  // identical report sets: no flags anywhere
  const auto none = compare_runs(base, base);
  for (const auto& row : none) {
    CHECK(row.delta == 0.0);
    CHECK_FALSE(row.significant_gain);
    CHECK_FALSE(row.significant_loss);
    CHECK_FALSE(row.large_change);
  }

  CHECK_THROWS_AS(compare_runs({base[0]}, {treated[0]}), DataError);
  std::vector<MetricReport> missing = treated;
  missing[2].values.erase("ndcg");
  CHECK_THROWS_AS(compare_runs(base, missing), ConfigError);
}

TEST_CASE("experiment config json round trip and validation") {
  ExperimentConfig cfg = tiny_config();
  cfg.cold_mode = "mlp";
  cfg.knn.neighborhood = 5;
  const std::string text = cfg.to_json();
  const ExperimentConfig back = ExperimentConfig::from_json(text);
  CHECK(back.synthetic->num_users == 300);
  CHECK(back.cold_mode == "mlp");
  CHECK(back.knn.neighborhood == 5);
  CHECK(back.k_list == cfg.k_list);
  CHECK(back.alpha_sweep == cfg.alpha_sweep);
  CHECK(back.warm_frac == doctest::Approx(cfg.warm_frac));

  CHECK_THROWS_AS(ExperimentConfig::from_json("{"), ConfigError);
  CHECK_THROWS_AS(ExperimentConfig::from_json("{\"eval\":{\"k\":[0]}}"),
                  ConfigError);
  ExperimentConfig bad = tiny_config();
  bad.cold_mode = "vae";
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = tiny_config();
  bad.alpha_sweep = {0.0};
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("pipeline produces per-run rows plus aggregates deterministically") {
  TempDir dir("pipe");
  ExperimentConfig cfg = tiny_config();
  cfg.out_dir = dir.file("out_a");
  const PipelineResult result = run_pipeline(cfg);
  REQUIRE(result.runs.size() == 2);

  // per (model, pool, alpha, k): one row per run
  std::map<std::tuple<std::string, std::string, double, Index>, int> seen;
  for (const RunArtifacts& art : result.runs) {
    CHECK(art.rows.size() == 2 * 3 * 2 + 2 * 2);  // coldgen sweep + knn
    for (const MetricRow& row : art.rows) {
      seen[{row.model, row.pool, row.alpha, row.k}]++;
      CHECK(row.report.values.count("ndcg") == 1);
      CHECK(row.report.values.count("gini_div") == 1);
    }
  }
  for (const auto& [key, count] : seen) CHECK(count == 2);
  CHECK(result.aggregates.size() == seen.size());

  // metrics.csv reads back with the same rows
  const auto rows = read_metrics_csv(dir.file("out_a/metrics.csv"));
  CHECK(rows.size() == result.runs[0].rows.size() * 2);

  // reruns are byte-identical
  ExperimentConfig cfg_b = tiny_config();
  cfg_b.out_dir = dir.file("out_b");
  run_pipeline(cfg_b);
  CHECK(read_text_file(dir.file("out_a/metrics.csv")) ==
        read_text_file(dir.file("out_b/metrics.csv")));
  CHECK(read_text_file(dir.file("out_a/runs/run0/warm_items.emb")) ==
        read_text_file(dir.file("out_b/runs/run0/warm_items.emb")));
  CHECK(read_text_file(dir.file("out_a/runs/run1/cold_test.emb")) ==
        read_text_file(dir.file("out_b/runs/run1/cold_test.emb")));

  // diagnostics and sidecars exist
  namespace fs = std::filesystem;
  CHECK(fs::exists(dir.file("out_a/diagnostics/fig1.csv")));
  CHECK(fs::exists(dir.file("out_a/diagnostics/fig2.csv")));
  CHECK(fs::exists(dir.file("out_a/diagnostics/fig3.csv")));
  CHECK(fs::exists(dir.file("out_a/diagnostics/fig4_alpha0.csv")));
  CHECK(fs::exists(dir.file("out_a/diagnostics/concentration.json")));
  CHECK(fs::exists(dir.file("out_a/runs/run0/warm_users.json")));
  CHECK(fs::exists(dir.file("out_a/summary.json")));
  CHECK_FALSE(fs::exists(dir.file("out_a/.lock")));
  CHECK_FALSE(fs::exists(dir.file("out_a/STALE")));

  // the sidecar embeds the exact config
  const std::string sidecar =
      read_text_file(dir.file("out_a/runs/run0/cold_test_scaled.json"));
  CHECK(sidecar.find("\"alpha\"") != std::string::npos);
  CHECK(sidecar.find("\"mu_w\"") != std::string::npos);
  CHECK(sidecar.find("\"num_users\": 300") != std::string::npos);
}

TEST_CASE("pipeline refuses a locked output directory") {
  TempDir dir("lock");
  ExperimentConfig cfg = tiny_config();
  cfg.num_runs = 1;
  cfg.out_dir = dir.file("out");
  std::filesystem::create_directories(cfg.out_dir);
  std::ofstream lock(dir.file("out/.lock"));
  lock << "held\n";
  lock.close();
  CHECK_THROWS_AS(run_pipeline(cfg), ConfigError);
}

TEST_CASE("metrics csv round trip via in-memory rows") {
  TempDir dir("csvrt");
  MetricRow row;
  row.model = "coldgen";
  row.pool = "test";
  row.alpha = 1.5;
  row.k = 20;
  row.run = 3;
  row.seed = 45;
  row.report.k = 20;
  row.report.evaluated_users = 11;
  row.report.evaluated_items = 7;
  row.report.values = {{"ndcg", 0.125},   {"recall", 0.25},
                       {"mdg_min80", 0.01}, {"mdg_max5", 0.5},
                       {"mdg_all", 0.1},  {"gini_div", 0.75}};
  write_metrics_csv(dir.file("m.csv"), {row}, aggregate_rows({row}));
  const auto rows = read_metrics_csv(dir.file("m.csv"));
  REQUIRE(rows.size() == 1);
  CHECK(rows[0].model == "coldgen");
  CHECK(rows[0].alpha == 1.5);
  CHECK(rows[0].run == 3);
  CHECK(rows[0].report.values.at("gini_div") == doctest::Approx(0.75));
}
