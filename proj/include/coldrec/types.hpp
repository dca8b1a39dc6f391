#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace coldrec {

using Index = std::uint32_t;

// Dense row-major matrix of doubles. Backs content features and embedding
// tables alike; persisted as float32 EMB1 files at the I/O boundary.
class Mat {
 public:
  Mat() = default;
  Mat(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  bool empty() const { return data_.empty(); }

  double* operator[](std::size_t r) { return data_.data() + r * cols_; }
  const double* operator[](std::size_t r) const {
    return data_.data() + r * cols_;
  }

  std::span<double> row(std::size_t r) {
    return {data_.data() + r * cols_, cols_};
  }
  std::span<const double> row(std::size_t r) const {
    return {data_.data() + r * cols_, cols_};
  }

  double& at(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double at(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::vector<double>& values() { return data_; }
  const std::vector<double>& values() const { return data_; }

  bool all_finite() const {
    for (double v : data_) {
      if (!std::isfinite(v)) return false;
    }
    return true;
  }

  bool operator==(const Mat& other) const = default;

 private:
  std::size_t rows_ = 0, cols_ = 0;
  std::vector<double> data_;
};

inline double dot(std::span<const double> a, std::span<const double> b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

// Factors rounded to float32 before multiplying, accumulation in double.
// Scoring with this makes rankings identical whether an embedding matrix
// lives in memory or was round-tripped through an EMB1 file.
inline double dot_f32(std::span<const double> a, std::span<const double> b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    acc += static_cast<double>(static_cast<float>(a[i]) *
                               static_cast<float>(b[i]));
  }
  return acc;
}

inline double l2_norm(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

// Zero-norm vectors yield cosine 0.
inline double cosine(std::span<const double> a, std::span<const double> b) {
  const double na = l2_norm(a), nb = l2_norm(b);
  if (na == 0.0 || nb == 0.0) return 0.0;
  return dot(a, b) / (na * nb);
}

// Deduplicated (user, item) implicit-feedback pairs with contiguous indices.
struct InteractionTable {
  Index num_users = 0;
  Index num_items = 0;
  std::vector<std::pair<Index, Index>> pairs;  // no duplicate (user, item)
  std::vector<Index> popularity;               // per-item pair count
  std::vector<std::string> user_ids;           // original labels; may be empty
  std::vector<std::string> item_ids;

  void recount_popularity();
  void validate() const;  // throws DataError on a broken invariant
};

// Per-user item lists, each sorted ascending.
std::vector<std::vector<Index>> items_by_user(const InteractionTable& table);

// Restrict `table` to pairs whose item is in `items` and remap item indices
// to positions within `items`. Throws DataError if a pair references an item
// outside `items`.
InteractionTable reindex_items(const InteractionTable& table,
                               std::span<const Index> items);

struct DatasetSplits {
  std::vector<Index> warm_items;  // global item ids, ascending
  std::vector<Index> cold_val_items;
  std::vector<Index> cold_test_items;
  InteractionTable warm_train, warm_val, warm_test;  // global index space
  InteractionTable cold_val, cold_test;              // holdout interactions
};

struct SyntheticConfig {
  Index num_users = 2000;
  Index num_items = 1400;
  std::size_t latent_dim = 16;
  std::size_t feature_dim = 32;
  double zipf_exponent = 1.2;      // s > 0
  double popularity_weight = 1.0;  // beta
  double feature_noise = 0.1;      // sigma >= 0
  // How loosely popularity rank follows the content trend direction; 0 makes
  // content fully predictive of popularity.
  double trend_noise = 2.5;
  Index interactions_per_user = 30;
  std::uint64_t seed = 42;
};

}  // namespace coldrec
