#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "coldrec/analysis.hpp"
#include "coldrec/coldgen.hpp"
#include "coldrec/metrics.hpp"
#include "coldrec/ranking.hpp"
#include "coldrec/types.hpp"
#include "coldrec/warm.hpp"

namespace coldrec {

struct ExperimentConfig {
  // Data source: synthetic config, or interaction/feature paths.
  std::optional<SyntheticConfig> synthetic = SyntheticConfig{};
  std::string interactions_path;
  std::vector<std::string> feature_mode_paths;

  double warm_frac = 0.8;
  double train_frac = 0.8;
  double val_frac = 0.1;

  std::uint64_t seed = 42;
  Index num_runs = 5;
  int threads = 1;
  std::string out_dir;

  BprConfig bpr;
  bool early_stopping = false;
  Index patience = 5;

  std::string cold_mode = "ridge";  // "ridge" or "mlp"
  double ridge_lambda = 0.1;
  MlpConfig mlp;

  bool knn_baseline = true;
  KnnConfig knn;

  std::vector<Index> k_list = {20, 50};
  std::vector<double> alpha_sweep = {0.5, 1.0, 1.5, 2.0, 2.5, 3.0, 4.0, 5.0};
  double alpha_budget = 0.1;  // tolerated relative NDCG@20 loss

  bool pooled_diagnostics = false;
  bool warm_as_cold_diagnostics = false;
  std::string mu_w_source = "pretrained";  // or "generated"

  void validate() const;  // throws ConfigError
  std::string to_json() const;
  static ExperimentConfig from_json(const std::string& text);
  static ExperimentConfig load(const std::string& path);
};

struct MetricRow {
  std::string model;  // "coldgen" or "knn"
  std::string pool;   // "val" or "test"
  double alpha = 0.0;
  Index k = 0;
  Index run = 0;
  std::uint64_t seed = 0;
  MetricReport report;
};

struct AggregateRow {
  std::string model, pool;
  double alpha = 0.0;
  Index k = 0;
  std::map<std::string, double> mean;
  std::map<std::string, double> stddev;
};

struct RunArtifacts {
  Index run = 0;
  std::uint64_t seed = 0;
  double selected_alpha = 0.0;
  double warm_magnitude_popularity_spearman = 0.0;
  double cold_magnitude_count_spearman = 0.0;  // test pool, alpha=0, k=20
  // Test pool, k=20, top_n=min(50, pool): one entry per evaluated alpha.
  std::map<double, ConcentrationStats> test_concentration;
  std::vector<MetricRow> rows;
};

struct PipelineResult {
  std::vector<RunArtifacts> runs;
  std::vector<AggregateRow> aggregates;
};

// Runs the full experiment: data -> split -> warm training -> cold encoder ->
// alpha sweep ranking -> metrics -> alpha selection -> diagnostics. Writes
// report and model files when cfg.out_dir is set; the output directory is
// guarded by a lock file and a STALE marker is left behind on stage failure.
PipelineResult run_pipeline(const ExperimentConfig& cfg);

// Among alphas whose validation NDCG@20 is >= (1 - budget) of the alpha=0
// value, picks the one maximizing MDG-Min80%@20, ties to the smaller alpha.
// Reports must all carry k=20 values for "ndcg" and "mdg_min80".
double select_alpha(const std::vector<MetricReport>& val_reports,
                    double user_acc_budget = 0.1);

struct PoolEvaluation {
  std::map<Index, MetricReport> by_k;
  std::map<Index, PredictionCounts> counts_by_k;  // pool-local item ids
  std::map<Index, ItemMdgTable> mdg_by_k;         // pool-local item ids
};

// All metrics for one ranking log. `relevant_by_user` is aligned with
// log.users and holds pool-local item ids.
PoolEvaluation evaluate_ranking(const RankingLog& log,
                                const std::vector<std::vector<Index>>& relevant_by_user,
                                std::span<const Index> k_list, Index pool_size);

struct ComparisonRow {
  std::string metric;
  double mean_base = 0.0, mean_treated = 0.0, delta = 0.0, p_value = 1.0;
  bool significant_gain = false, significant_loss = false;
  bool large_change = false;  // |delta| >= 10% of |mean_base|
};

// Per-metric mean delta with Welch significance over run-level values.
std::vector<ComparisonRow> compare_runs(const std::vector<MetricReport>& base,
                                        const std::vector<MetricReport>& treated,
                                        double p_threshold = 0.01,
                                        double change_frac = 0.10);

void write_metrics_csv(const std::string& path,
                       const std::vector<MetricRow>& rows,
                       const std::vector<AggregateRow>& aggregates);
std::vector<MetricRow> read_metrics_csv(const std::string& path);
std::vector<AggregateRow> aggregate_rows(const std::vector<MetricRow>& rows);
void write_comparison_csv(const std::string& path,
                          const std::vector<ComparisonRow>& rows);

}  // namespace coldrec
