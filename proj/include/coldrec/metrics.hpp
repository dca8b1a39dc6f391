#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "coldrec/types.hpp"

namespace coldrec {

// Binary-relevance NDCG with discount 1/log2(rank + 1), rank 1-based,
// normalized by the ideal DCG over min(k, |relevant|).
double ndcg_at_k(std::span<const Index> ranked,
                 const std::vector<Index>& relevant, Index k);

// |top-k intersect relevant| / |relevant| (denominator uncapped).
double recall_at_k(std::span<const Index> ranked,
                   const std::vector<Index>& relevant, Index k);

// Mean Discounted Gain for one item: average over its target users of
// 1[rank <= k] / log2(1 + rank), ranks 1-based.
double mdg_at_k(std::span<const Index> target_user_ranks, Index k);

struct ItemMdg {
  Index item;
  Index num_target_users;
  double mdg;
};
using ItemMdgTable = std::vector<ItemMdg>;

struct MdgAggregates {
  double min80;  // mean over the ceil(0.8 n) lowest-MDG items
  double max5;   // mean over the ceil(0.05 n) highest-MDG items
  double all;
};

// Items ordered by (mdg asc, item asc) before taking the slices.
MdgAggregates mdg_aggregates(const ItemMdgTable& table);

// 1 - Gini coefficient of the per-item prediction counts, zero-count items
// included. Sorted ascending, G = sum_i (2i - n - 1) c_i / (n * sum c).
double gini_diversity(std::span<const Index> counts);

struct WelchResult {
  double t = 0.0;
  double p = 1.0;   // two-sided
  double df = 0.0;  // Welch-Satterthwaite degrees of freedom
  bool degenerate = false;
};

// Welch's two-sample t-test. Both samples need >= 2 values. Zero variance on
// both sides degenerates to the "no difference" sentinel (t=0, p=1) for equal
// means, or (t=+-inf, p=0) otherwise.
WelchResult welch_t_test(std::span<const double> sample_a,
                         std::span<const double> sample_b);

// Regularized incomplete beta, used for the t distribution tail. Exposed for
// tests.
double reg_incomplete_beta(double a, double b, double x);

struct MetricReport {
  Index k = 0;
  std::map<std::string, double> values;
  Index evaluated_users = 0;
  Index evaluated_items = 0;
  std::uint64_t seed = 0;
  double alpha = 0.0;
  std::string model;
};

std::string report_json(const MetricReport& report);
std::string report_csv_header();
std::string report_csv_row(const MetricReport& report);

// CSV export: "item_id,num_target_users,mdg". Labels fall back to indices.
void write_mdg_csv(const std::string& path, const ItemMdgTable& table,
                   const std::vector<std::string>& item_labels = {});

}  // namespace coldrec
