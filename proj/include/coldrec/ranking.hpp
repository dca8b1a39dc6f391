#pragma once

#include <string>
#include <vector>

#include "coldrec/types.hpp"

namespace coldrec {

struct RankedItem {
  Index item;
  double score;
};

// Per-user top-k lists over a candidate pool. Lists are sorted by descending
// score with ties broken by ascending item index.
struct RankingLog {
  Index k = 0;
  std::vector<Index> pool;
  std::vector<Index> users;                   // evaluated users
  std::vector<std::vector<RankedItem>> topk;  // aligned with `users`
};

struct PredictionCounts {
  std::vector<Index> pool;    // candidate items
  std::vector<Index> counts;  // top-k appearances, aligned with `pool`
};

// Batch top-k scoring: per user, dot products against the pool minus that
// user's exclusions, then top-k under the (score desc, item asc) order.
// `exclusions`, when non-empty, is aligned with `users` and each entry must
// be sorted ascending. Deterministic for any thread count.
RankingLog rank_topk(const Mat& user_vectors, const Mat& item_vectors,
                     std::span<const Index> pool, std::span<const Index> users,
                     Index k,
                     const std::vector<std::vector<Index>>& exclusions = {},
                     int threads = 1);

// 1-based rank of `target` within `pool`: 1 + items scoring strictly higher
// + equal-scored items with a smaller index.
Index rank_of_item(std::span<const double> user_vector, const Mat& item_vectors,
                   std::span<const Index> pool, Index target);

// Occurrence counts over the first min(k, list) entries of each user's list;
// k = 0 means the log's own cutoff.
PredictionCounts prediction_counts(const RankingLog& log, Index k = 0);

// CSV export: "user_id,rank,item_id,score" with scores at 6 decimals.
void write_ranking_csv(const std::string& path, const RankingLog& log);
// CSV export: "item_id,count".
void write_counts_csv(const std::string& path, const PredictionCounts& counts);
PredictionCounts read_counts_csv(const std::string& path);

}  // namespace coldrec
