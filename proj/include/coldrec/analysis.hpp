#pragma once

#include <string>
#include <vector>

#include "coldrec/ranking.hpp"
#include "coldrec/types.hpp"

namespace coldrec {

// Prediction count against number of holdout target users, one row per pool
// item with at least one holdout interaction.
struct Fig1Row {
  Index item;
  Index target_users;
  Index pred_count;
};
std::vector<Fig1Row> fig1_table(const PredictionCounts& counts,
                                const InteractionTable& holdout);

// Maximum training popularity among an item's n most cosine-similar warm
// neighbors in content space.
struct NeighborPopRow {
  Index item;
  Index neighbor_max_pop;
};
std::vector<NeighborPopRow> neighbor_popularity(
    std::span<const Index> cold_subset, const Mat& features,
    std::span<const Index> warm_items, std::span<const Index> warm_popularity,
    Index n_neighbors = 10);

// Prediction count against embedding magnitude; embedding row i corresponds
// to counts.pool[i].
struct Fig3Row {
  Index item;
  double magnitude;
  Index pred_count;
};
std::vector<Fig3Row> fig3_table(const PredictionCounts& counts,
                                const Mat& cold_embeddings);

// Counts sorted descending; the i-th item (1-based) sits at percentile
// 100*i/n over the full pool, and zero-count items are dropped from the rows.
struct PercentileRow {
  double percentile;
  Index count;
};
std::vector<PercentileRow> percentile_curve(const PredictionCounts& counts);

struct ConcentrationStats {
  Index top_n = 0;
  double top_n_share = 0.0;  // fraction of all top-k slots
  Index zero_pred_items = 0;
};
ConcentrationStats concentration(const PredictionCounts& counts, Index top_n,
                                 Index k, Index num_users);

// Pearson correlation of midrank-averaged ranks.
double spearman(std::span<const double> xs, std::span<const double> ys);

// The top 10% most-predicted items (ceil cutoff, count desc / index asc).
std::vector<Index> top_decile_by_count(const PredictionCounts& counts);

void write_fig1_csv(const std::string& path, const std::vector<Fig1Row>& rows);
void write_fig2_csv(const std::string& path,
                    const std::vector<NeighborPopRow>& rows,
                    const PredictionCounts& counts);
void write_fig3_csv(const std::string& path, const std::vector<Fig3Row>& rows);
void write_fig4_csv(const std::string& path,
                    const std::vector<PercentileRow>& rows);

}  // namespace coldrec
