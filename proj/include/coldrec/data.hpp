#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "coldrec/types.hpp"

namespace coldrec {

// Reads "user_id<TAB>item_id" lines, mapping ids to contiguous indices in
// first-seen order. Lines starting with '#' and blank lines are ignored;
// duplicate pairs are dropped. Throws DataError with the line number for
// malformed lines and for an empty file.
InteractionTable load_interactions(const std::string& path);

void write_interactions(const std::string& path, const InteractionTable& table);

// Reads "user_index<TAB>item_index" lines where both fields are nonnegative
// integers used verbatim as indices (no first-seen remapping), so files
// written by the split stage keep their global index space. Dimensions are
// max index + 1 unless larger counts are given.
InteractionTable load_interactions_indexed(const std::string& path,
                                           Index num_users = 0,
                                           Index num_items = 0);

// L2-normalizes each mode block row-wise (all-zero rows stay zero) and
// concatenates the blocks. All modes must have the same row count.
Mat build_features(const std::vector<Mat>& per_mode_matrices);

struct ItemPartition {
  std::vector<Index> warm;  // each sorted ascending
  std::vector<Index> cold_val;
  std::vector<Index> cold_test;
};

// Shuffles item ids by seed. Warm count is round-half-up(warm_frac * n); the
// cold remainder splits 50:50 with an odd item going to validation.
ItemPartition partition_items(Index num_items, double warm_frac,
                              std::uint64_t seed);

// Two-stage split: items into warm/cold-val/cold-test, then warm pairs
// independently sampled into train/val/test at (train_frac, val_frac, rest).
DatasetSplits split_dataset(const InteractionTable& table, const Mat& features,
                            double warm_frac = 0.8, double train_frac = 0.8,
                            double val_frac = 0.1, std::uint64_t seed = 0);

struct SyntheticData {
  InteractionTable interactions;
  Mat features;                    // row-normalized content vectors
  std::vector<double> popularity;  // ground-truth sampling weights, sum 1
};

// Zipf-skewed implicit feedback with content features tied to popularity:
// item latents are standard normal, indexed in descending alignment with a
// random trend direction so that low indices (high popularity rank) share
// content structure. Each user draws `interactions_per_user` distinct items
// with probability proportional to exp(z_u . z_i + beta * log p_i), via
// Gumbel top-k in log space. Features are A z_i plus Gaussian(sigma) noise,
// then row-normalized. Fully deterministic given the seed.
SyntheticData generate_synthetic(const SyntheticConfig& cfg);

}  // namespace coldrec
