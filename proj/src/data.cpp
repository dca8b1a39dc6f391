#include "coldrec/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>
#include <set>
#include <unordered_map>

#include "coldrec/errors.hpp"

namespace coldrec {

void InteractionTable::recount_popularity() {
  popularity.assign(num_items, 0);
  for (const auto& [u, i] : pairs) {
    (void)u;
    ++popularity[i];
  }
}

void InteractionTable::validate() const {
  if (popularity.size() != num_items) {
    throw DataError("popularity size does not match item count");
  }
  std::set<std::pair<Index, Index>> seen;
  std::size_t pop_sum = 0;
  for (const auto& p : pairs) {
    if (p.first >= num_users || p.second >= num_items) {
      throw DataError("interaction index out of range");
    }
    if (!seen.insert(p).second) throw DataError("duplicate interaction pair");
  }
  for (Index c : popularity) pop_sum += c;
  if (pop_sum != pairs.size()) {
    throw DataError("popularity does not sum to pair count");
  }
}

std::vector<std::vector<Index>> items_by_user(const InteractionTable& table) {
  std::vector<std::vector<Index>> by_user(table.num_users);
  for (const auto& [u, i] : table.pairs) by_user[u].push_back(i);
  for (auto& v : by_user) std::sort(v.begin(), v.end());
  return by_user;
}

InteractionTable reindex_items(const InteractionTable& table,
                               std::span<const Index> items) {
  constexpr Index kUnmapped = static_cast<Index>(-1);
  std::vector<Index> to_local(table.num_items, kUnmapped);
  for (std::size_t pos = 0; pos < items.size(); ++pos) {
    to_local[items[pos]] = static_cast<Index>(pos);
  }
  InteractionTable out;
  out.num_users = table.num_users;
  out.num_items = static_cast<Index>(items.size());
  out.user_ids = table.user_ids;
  if (!table.item_ids.empty()) {
    out.item_ids.reserve(items.size());
    for (Index g : items) out.item_ids.push_back(table.item_ids[g]);
  }
  out.pairs.reserve(table.pairs.size());
  for (const auto& [u, i] : table.pairs) {
    if (to_local[i] == kUnmapped) {
      throw DataError("pair references an item outside the subset");
    }
    out.pairs.emplace_back(u, to_local[i]);
  }
  out.recount_popularity();
  return out;
}

InteractionTable load_interactions(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError(path + ": cannot open");
  InteractionTable table;
  std::unordered_map<std::string, Index> user_index, item_index;
  std::set<std::pair<Index, Index>> seen;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    const std::size_t tab = line.find('\t');
    if (tab == std::string::npos || tab == 0 || tab + 1 >= line.size() ||
        line.find('\t', tab + 1) != std::string::npos) {
      throw DataError(path + ": malformed line " + std::to_string(line_no) +
                      " (expected user<TAB>item)");
    }
    const std::string user_id = line.substr(0, tab);
    const std::string item_id = line.substr(tab + 1);
    auto [uit, u_new] = user_index.try_emplace(
        user_id, static_cast<Index>(table.user_ids.size()));
    if (u_new) table.user_ids.push_back(user_id);
    auto [iit, i_new] = item_index.try_emplace(
        item_id, static_cast<Index>(table.item_ids.size()));
    if (i_new) table.item_ids.push_back(item_id);
    const std::pair<Index, Index> pair{uit->second, iit->second};
    if (seen.insert(pair).second) table.pairs.push_back(pair);
  }
  if (table.pairs.empty()) {
    throw DataError(path + ": no interactions found");
  }
  table.num_users = static_cast<Index>(table.user_ids.size());
  table.num_items = static_cast<Index>(table.item_ids.size());
  table.recount_popularity();
  return table;
}

InteractionTable load_interactions_indexed(const std::string& path,
                                           Index num_users, Index num_items) {
  std::ifstream in(path);
  if (!in) throw DataError(path + ": cannot open");
  InteractionTable table;
  std::set<std::pair<Index, Index>> seen;
  std::string line;
  std::size_t line_no = 0;
  Index max_user = 0, max_item = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    const std::size_t tab = line.find('\t');
    if (tab == std::string::npos) {
      throw DataError(path + ": malformed line " + std::to_string(line_no));
    }
    Index user, item;
    try {
      user = static_cast<Index>(std::stoul(line.substr(0, tab)));
      item = static_cast<Index>(std::stoul(line.substr(tab + 1)));
    } catch (const std::exception&) {
      throw DataError(path + ": non-numeric index at line " +
                      std::to_string(line_no));
    }
    max_user = std::max(max_user, user);
    max_item = std::max(max_item, item);
    const std::pair<Index, Index> pair{user, item};
    if (seen.insert(pair).second) table.pairs.push_back(pair);
  }
  if (table.pairs.empty()) throw DataError(path + ": no interactions found");
  table.num_users = std::max(num_users, max_user + 1);
  table.num_items = std::max(num_items, max_item + 1);
  table.recount_popularity();
  return table;
}

void write_interactions(const std::string& path,
                        const InteractionTable& table) {
  std::ofstream out(path);
  if (!out) throw DataError(path + ": cannot open for writing");
  for (const auto& [u, i] : table.pairs) {
    if (table.user_ids.empty()) {
      out << u;
    } else {
      out << table.user_ids[u];
    }
    out << '\t';
    if (table.item_ids.empty()) {
      out << i;
    } else {
      out << table.item_ids[i];
    }
    out << '\n';
  }
}

Mat build_features(const std::vector<Mat>& per_mode_matrices) {
  if (per_mode_matrices.empty()) throw DataError("no feature modes given");
  const std::size_t rows = per_mode_matrices.front().rows();
  std::size_t total_cols = 0;
  for (const Mat& m : per_mode_matrices) {
    if (m.rows() != rows) throw DataError("feature mode row counts differ");
    if (!m.all_finite()) throw DataError("non-finite feature value");
    total_cols += m.cols();
  }
  Mat out(rows, total_cols);
  std::size_t col_base = 0;
  for (const Mat& m : per_mode_matrices) {
    for (std::size_t r = 0; r < rows; ++r) {
      const double norm = l2_norm(m.row(r));
      const double inv = norm > 0.0 ? 1.0 / norm : 0.0;  // all-zero rows stay
      for (std::size_t c = 0; c < m.cols(); ++c) {
        out.at(r, col_base + c) = m.at(r, c) * inv;
      }
    }
    col_base += m.cols();
  }
  return out;
}

ItemPartition partition_items(Index num_items, double warm_frac,
                              std::uint64_t seed) {
  if (!(warm_frac > 0.0 && warm_frac < 1.0)) {
    throw ConfigError("warm_frac must be in (0,1)");
  }
  std::vector<Index> ids(num_items);
  std::iota(ids.begin(), ids.end(), 0u);
  std::mt19937_64 rng(seed);
  std::shuffle(ids.begin(), ids.end(), rng);
  // round-half-up so counts are reproducible
  const auto warm_count =
      static_cast<std::size_t>(std::floor(warm_frac * num_items + 0.5));
  if (warm_count == 0 || warm_count >= num_items) {
    throw DataError("item partition leaves an empty warm or cold set");
  }
  const std::size_t cold = num_items - warm_count;
  const std::size_t val_count = (cold + 1) / 2;  // odd remainder -> validation
  ItemPartition part;
  part.warm.assign(ids.begin(), ids.begin() + warm_count);
  part.cold_val.assign(ids.begin() + warm_count,
                       ids.begin() + warm_count + val_count);
  part.cold_test.assign(ids.begin() + warm_count + val_count, ids.end());
  if (part.cold_val.empty() || part.cold_test.empty()) {
    throw DataError("cold split is empty");
  }
  std::sort(part.warm.begin(), part.warm.end());
  std::sort(part.cold_val.begin(), part.cold_val.end());
  std::sort(part.cold_test.begin(), part.cold_test.end());
  return part;
}

DatasetSplits split_dataset(const InteractionTable& table, const Mat& features,
                            double warm_frac, double train_frac,
                            double val_frac, std::uint64_t seed) {
  if (!(train_frac > 0.0 && val_frac > 0.0 && train_frac + val_frac < 1.0)) {
    throw ConfigError("interaction fractions must satisfy 0 < train, val and "
                      "train + val < 1");
  }
  if (features.rows() != table.num_items) {
    throw DataError("feature rows do not match item count");
  }

  DatasetSplits splits;
  auto part = partition_items(table.num_items, warm_frac, seed);
  splits.warm_items = std::move(part.warm);
  splits.cold_val_items = std::move(part.cold_val);
  splits.cold_test_items = std::move(part.cold_test);

  enum : unsigned char { kWarm, kColdVal, kColdTest };
  std::vector<unsigned char> membership(table.num_items, kWarm);
  for (Index i : splits.cold_val_items) membership[i] = kColdVal;
  for (Index i : splits.cold_test_items) membership[i] = kColdTest;

  auto init = [&table](InteractionTable& t) {
    t.num_users = table.num_users;
    t.num_items = table.num_items;
    t.user_ids = table.user_ids;
    t.item_ids = table.item_ids;
  };
  init(splits.warm_train);
  init(splits.warm_val);
  init(splits.warm_test);
  init(splits.cold_val);
  init(splits.cold_test);

  // Separate stream from the item shuffle so partition_items stands alone.
  std::mt19937_64 rng(seed * 0x9e3779b97f4a7c15ULL + 1);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  for (const auto& pair : table.pairs) {
    switch (membership[pair.second]) {
      case kColdVal:
        splits.cold_val.pairs.push_back(pair);
        break;
      case kColdTest:
        splits.cold_test.pairs.push_back(pair);
        break;
      default: {
        const double u = unif(rng);
        if (u < train_frac) {
          splits.warm_train.pairs.push_back(pair);
        } else if (u < train_frac + val_frac) {
          splits.warm_val.pairs.push_back(pair);
        } else {
          splits.warm_test.pairs.push_back(pair);
        }
      }
    }
  }
  for (auto* t : {&splits.warm_train, &splits.warm_val, &splits.warm_test,
                  &splits.cold_val, &splits.cold_test}) {
    t->recount_popularity();
  }
  const char* names[] = {"warm_train", "warm_val", "warm_test", "cold_val",
                         "cold_test"};
  const InteractionTable* tables[] = {&splits.warm_train, &splits.warm_val,
                                      &splits.warm_test, &splits.cold_val,
                                      &splits.cold_test};
  for (int i = 0; i < 5; ++i) {
    if (tables[i]->pairs.empty()) {
      throw DataError(std::string("empty interaction split: ") + names[i]);
    }
  }
  return splits;
}

SyntheticData generate_synthetic(const SyntheticConfig& cfg) {
  if (cfg.num_users == 0 || cfg.num_items == 0 || cfg.latent_dim == 0 ||
      cfg.feature_dim == 0 || cfg.interactions_per_user == 0) {
    throw ConfigError("synthetic counts must be positive");
  }
  if (!(cfg.zipf_exponent > 0.0)) {
    throw ConfigError("zipf_exponent must be > 0");
  }
  if (cfg.feature_noise < 0.0) throw ConfigError("feature_noise must be >= 0");
  if (cfg.interactions_per_user >= cfg.num_items) {
    throw ConfigError("interactions_per_user must be < num_items");
  }

  const std::size_t d = cfg.latent_dim;
  const Index n_items = cfg.num_items;
  const Index n_users = cfg.num_users;
  std::mt19937_64 rng(cfg.seed);
  std::normal_distribution<double> std_normal(0.0, 1.0);

  Mat item_latents(n_items, d);
  for (double& v : item_latents.values()) v = std_normal(rng);

  // Index items by descending alignment with a random trend direction, so
  // content carries a learnable popularity signal. The noise term keeps that
  // signal partial: items can look popular without being popular, which is
  // the mismatch cold-start models inherit.
  std::vector<double> trend(d);
  for (double& v : trend) v = std_normal(rng);
  const double trend_scale = std::sqrt(double(d));
  std::vector<Index> order(n_items);
  std::iota(order.begin(), order.end(), 0u);
  std::vector<double> align(n_items);
  for (Index i = 0; i < n_items; ++i) {
    align[i] = dot(item_latents.row(i), trend) / trend_scale +
               cfg.trend_noise * std_normal(rng);
  }
  std::sort(order.begin(), order.end(), [&align](Index a, Index b) {
    if (align[a] != align[b]) return align[a] > align[b];
    return a < b;
  });
  Mat sorted_latents(n_items, d);
  for (Index i = 0; i < n_items; ++i) {
    std::copy_n(item_latents[order[i]], d, sorted_latents[i]);
  }

  std::vector<double> popularity(n_items);
  double pop_sum = 0.0;
  for (Index i = 0; i < n_items; ++i) {
    popularity[i] = std::pow(static_cast<double>(i + 1), -cfg.zipf_exponent);
    pop_sum += popularity[i];
  }
  for (double& p : popularity) p /= pop_sum;

  // User latent norms near 1.5 balance personal affinity against the
  // popularity term: strong enough that exposure is not pure herd behavior,
  // weak enough that the Zipf skew still dominates training counts.
  std::normal_distribution<double> user_normal(0.0, 1.5 / std::sqrt(double(d)));
  Mat user_latents(n_users, d);
  for (double& v : user_latents.values()) v = user_normal(rng);

  std::normal_distribution<double> proj_normal(0.0, 1.0 / std::sqrt(double(d)));
  Mat projection(cfg.feature_dim, d);
  for (double& v : projection.values()) v = proj_normal(rng);

  Mat features(n_items, cfg.feature_dim);
  for (Index i = 0; i < n_items; ++i) {
    for (std::size_t f = 0; f < cfg.feature_dim; ++f) {
      features.at(i, f) = dot(projection.row(f), sorted_latents.row(i)) +
                          cfg.feature_noise * std_normal(rng);
    }
    const double norm = l2_norm(features.row(i));
    if (norm > 0.0) {
      for (std::size_t f = 0; f < cfg.feature_dim; ++f) {
        features.at(i, f) /= norm;
      }
    }
  }

  InteractionTable table;
  table.num_users = n_users;
  table.num_items = n_items;
  std::vector<double> log_pop(n_items);
  for (Index i = 0; i < n_items; ++i) log_pop[i] = std::log(popularity[i]);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::vector<double> keys(n_items);
  std::vector<Index> item_order(n_items);
  std::vector<Index> picked(cfg.interactions_per_user);
  for (Index u = 0; u < n_users; ++u) {
    // Gumbel top-k in log space samples k distinct items with probability
    // proportional to exp(z_u . z_i + beta * log p_i), no overflow possible.
    for (Index i = 0; i < n_items; ++i) {
      double r = unif(rng);
      if (r <= 0.0) r = std::numeric_limits<double>::min();
      const double gumbel = -std::log(-std::log(r));
      keys[i] = dot(user_latents.row(u), sorted_latents.row(i)) +
                cfg.popularity_weight * log_pop[i] + gumbel;
    }
    std::iota(item_order.begin(), item_order.end(), 0u);
    std::partial_sort(item_order.begin(),
                      item_order.begin() + cfg.interactions_per_user,
                      item_order.end(), [&keys](Index a, Index b) {
                        if (keys[a] != keys[b]) return keys[a] > keys[b];
                        return a < b;
                      });
    picked.assign(item_order.begin(),
                  item_order.begin() + cfg.interactions_per_user);
    std::sort(picked.begin(), picked.end());
    for (Index i : picked) table.pairs.emplace_back(u, i);
  }
  table.recount_popularity();

  return SyntheticData{std::move(table), std::move(features),
                       std::move(popularity)};
}

}  // namespace coldrec
