#include "coldrec/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <unordered_map>

#include "coldrec/errors.hpp"

namespace coldrec {

std::vector<Fig1Row> fig1_table(const PredictionCounts& counts,
                                const InteractionTable& holdout) {
  std::unordered_map<Index, Index> count_of;
  count_of.reserve(counts.pool.size());
  for (std::size_t i = 0; i < counts.pool.size(); ++i) {
    count_of.emplace(counts.pool[i], counts.counts[i]);
  }
  for (Index item = 0; item < holdout.num_items; ++item) {
    if (holdout.popularity[item] > 0 && count_of.find(item) == count_of.end()) {
      throw DataError("holdout item not in counted pool");
    }
  }
  std::vector<Fig1Row> rows;
  for (std::size_t i = 0; i < counts.pool.size(); ++i) {
    const Index item = counts.pool[i];
    if (item >= holdout.num_items) throw DataError("pool item out of range");
    const Index target_users = holdout.popularity[item];
    if (target_users == 0) continue;  // only items with holdout interactions
    rows.push_back({item, target_users, counts.counts[i]});
  }
  return rows;
}

std::vector<NeighborPopRow> neighbor_popularity(
    std::span<const Index> cold_subset, const Mat& features,
    std::span<const Index> warm_items, std::span<const Index> warm_popularity,
    Index n_neighbors) {
  if (warm_items.empty()) throw DataError("empty warm item set");
  if (warm_popularity.size() != warm_items.size()) {
    throw DataError("warm popularity not aligned with warm items");
  }
  if (n_neighbors == 0 || n_neighbors > warm_items.size()) {
    throw ConfigError("n_neighbors must be in [1, |warm_items|]");
  }
  std::vector<NeighborPopRow> rows;
  rows.reserve(cold_subset.size());
  std::vector<std::size_t> order(warm_items.size());
  std::vector<double> sims(warm_items.size());
  for (Index c : cold_subset) {
    for (std::size_t w = 0; w < warm_items.size(); ++w) {
      sims[w] = cosine(features.row(c), features.row(warm_items[w]));
    }
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::partial_sort(order.begin(), order.begin() + n_neighbors, order.end(),
                      [&](std::size_t a, std::size_t b) {
                        if (sims[a] != sims[b]) return sims[a] > sims[b];
                        return warm_items[a] < warm_items[b];
                      });
    Index max_pop = 0;
    for (Index n = 0; n < n_neighbors; ++n) {
      max_pop = std::max(max_pop, warm_popularity[order[n]]);
    }
    rows.push_back({c, max_pop});
  }
  return rows;
}

std::vector<Fig3Row> fig3_table(const PredictionCounts& counts,
                                const Mat& cold_embeddings) {
  if (cold_embeddings.rows() != counts.pool.size()) {
    throw DataError("embedding rows do not match counted pool");
  }
  std::vector<Fig3Row> rows;
  rows.reserve(counts.pool.size());
  for (std::size_t i = 0; i < counts.pool.size(); ++i) {
    rows.push_back(
        {counts.pool[i], l2_norm(cold_embeddings.row(i)), counts.counts[i]});
  }
  return rows;
}

std::vector<PercentileRow> percentile_curve(const PredictionCounts& counts) {
  std::vector<std::pair<Index, Index>> sorted;  // (count, item)
  sorted.reserve(counts.pool.size());
  std::size_t total = 0;
  for (std::size_t i = 0; i < counts.pool.size(); ++i) {
    sorted.emplace_back(counts.counts[i], counts.pool[i]);
    total += counts.counts[i];
  }
  if (total == 0) throw DataError("all prediction counts are zero");
  std::sort(sorted.begin(), sorted.end(), [](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    return a.second < b.second;
  });
  // Percentile over the full pool; zero-count items occupy the tail and are
  // not emitted.
  const double n = double(sorted.size());
  std::vector<PercentileRow> rows;
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    if (sorted[i].first == 0) break;
    rows.push_back({100.0 * double(i + 1) / n, sorted[i].first});
  }
  return rows;
}

ConcentrationStats concentration(const PredictionCounts& counts, Index top_n,
                                 Index k, Index num_users) {
  if (top_n > counts.pool.size()) {
    throw ConfigError("top_n exceeds pool size");
  }
  std::vector<Index> sorted(counts.counts.begin(), counts.counts.end());
  std::sort(sorted.begin(), sorted.end(), std::greater<Index>());
  std::size_t total = 0, top = 0, zeros = 0;
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    total += sorted[i];
    if (i < top_n) top += sorted[i];
    if (sorted[i] == 0) ++zeros;
  }
  if (total == 0) throw DataError("all prediction counts are zero");
  if (total > std::size_t(k) * num_users) {
    throw DataError("counts exceed the top-k slot budget");
  }
  return {top_n, double(top) / double(total), static_cast<Index>(zeros)};
}

namespace {

std::vector<double> midranks(std::span<const double> xs) {
  const std::size_t n = xs.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(),
            [&xs](std::size_t a, std::size_t b) { return xs[a] < xs[b]; });
  std::vector<double> ranks(n);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && xs[order[j + 1]] == xs[order[i]]) ++j;
    const double rank = 0.5 * double(i + j) + 1.0;  // midrank, 1-based
    for (std::size_t t = i; t <= j; ++t) ranks[order[t]] = rank;
    i = j + 1;
  }
  return ranks;
}

}  // namespace

double spearman(std::span<const double> xs, std::span<const double> ys) {
  if (xs.size() != ys.size()) throw ConfigError("length mismatch");
  if (xs.size() < 2) throw ConfigError("need at least two observations");
  const std::vector<double> rx = midranks(xs);
  const std::vector<double> ry = midranks(ys);
  const double n = double(xs.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    mx += rx[i];
    my += ry[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) {
    throw DataError("spearman: zero variance in a ranking");
  }
  return sxy / std::sqrt(sxx * syy);
}

std::vector<Index> top_decile_by_count(const PredictionCounts& counts) {
  std::vector<std::pair<Index, Index>> sorted;  // (count, item)
  sorted.reserve(counts.pool.size());
  for (std::size_t i = 0; i < counts.pool.size(); ++i) {
    sorted.emplace_back(counts.counts[i], counts.pool[i]);
  }
  std::sort(sorted.begin(), sorted.end(), [](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    return a.second < b.second;
  });
  const std::size_t take = (sorted.size() + 9) / 10;  // ceil(0.1 n)
  std::vector<Index> items;
  items.reserve(take);
  for (std::size_t i = 0; i < take; ++i) items.push_back(sorted[i].second);
  return items;
}

void write_fig1_csv(const std::string& path, const std::vector<Fig1Row>& rows) {
  std::ofstream out(path);
  if (!out) throw DataError(path + ": cannot open for writing");
  out << "item_id,num_target_users,pred_count\n";
  for (const Fig1Row& r : rows) {
    out << r.item << ',' << r.target_users << ',' << r.pred_count << '\n';
  }
}

void write_fig2_csv(const std::string& path,
                    const std::vector<NeighborPopRow>& rows,
                    const PredictionCounts& counts) {
  std::unordered_map<Index, Index> count_of;
  for (std::size_t i = 0; i < counts.pool.size(); ++i) {
    count_of.emplace(counts.pool[i], counts.counts[i]);
  }
  std::ofstream out(path);
  if (!out) throw DataError(path + ": cannot open for writing");
  out << "item_id,neighbor_max_pop,pred_count\n";
  for (const NeighborPopRow& r : rows) {
    const auto it = count_of.find(r.item);
    out << r.item << ',' << r.neighbor_max_pop << ','
        << (it == count_of.end() ? 0 : it->second) << '\n';
  }
}

void write_fig3_csv(const std::string& path, const std::vector<Fig3Row>& rows) {
  std::ofstream out(path);
  if (!out) throw DataError(path + ": cannot open for writing");
  out << "item_id,magnitude,pred_count\n";
  char buf[32];
  for (const Fig3Row& r : rows) {
    std::snprintf(buf, sizeof(buf), "%.6f", r.magnitude);
    out << r.item << ',' << buf << ',' << r.pred_count << '\n';
  }
}

void write_fig4_csv(const std::string& path,
                    const std::vector<PercentileRow>& rows) {
  std::ofstream out(path);
  if (!out) throw DataError(path + ": cannot open for writing");
  out << "percentile,pred_count\n";
  char buf[32];
  for (const PercentileRow& r : rows) {
    std::snprintf(buf, sizeof(buf), "%.4f", r.percentile);
    out << buf << ',' << r.count << '\n';
  }
}

}  // namespace coldrec
