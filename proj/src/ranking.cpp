#include "coldrec/ranking.hpp"

#include <algorithm>
#include <cstdio>
#include <exception>
#include <fstream>
#include <sstream>
#include <thread>
#include <unordered_map>

#include "coldrec/errors.hpp"

namespace coldrec {

namespace {

// Shared ordering: score descending, then item index ascending.
inline bool ranked_before(const RankedItem& a, const RankedItem& b) {
  if (a.score != b.score) return a.score > b.score;
  return a.item < b.item;
}

void rank_one_user(const Mat& user_vectors, const Mat& item_vectors,
                   std::span<const Index> pool, Index user, Index k,
                   const std::vector<Index>* excluded,
                   std::vector<RankedItem>& out) {
  std::vector<RankedItem> candidates;
  candidates.reserve(pool.size());
  const auto u = user_vectors.row(user);
  for (Index item : pool) {
    if (excluded != nullptr &&
        std::binary_search(excluded->begin(), excluded->end(), item)) {
      continue;
    }
    candidates.push_back({item, dot_f32(u, item_vectors.row(item))});
  }
  if (candidates.empty()) {
    throw DataError("empty pool after exclusions for user " +
                    std::to_string(user));
  }
  const std::size_t take = std::min<std::size_t>(k, candidates.size());
  std::partial_sort(candidates.begin(), candidates.begin() + take,
                    candidates.end(), ranked_before);
  candidates.resize(take);
  out = std::move(candidates);
}

}  // namespace

RankingLog rank_topk(const Mat& user_vectors, const Mat& item_vectors,
                     std::span<const Index> pool, std::span<const Index> users,
                     Index k, const std::vector<std::vector<Index>>& exclusions,
                     int threads) {
  if (k < 1) throw ConfigError("k must be >= 1");
  if (user_vectors.cols() != item_vectors.cols()) {
    throw ConfigError("user and item vector dimensions differ");
  }
  if (pool.empty()) throw DataError("empty candidate pool");
  if (!exclusions.empty() && exclusions.size() != users.size()) {
    throw ConfigError("exclusions must align with users");
  }
  for (Index item : pool) {
    if (item >= item_vectors.rows()) {
      throw DataError("pool item out of range");
    }
  }
  for (Index user : users) {
    if (user >= user_vectors.rows()) {
      throw DataError("user index out of range");
    }
  }

  RankingLog log;
  log.k = k;
  log.pool.assign(pool.begin(), pool.end());
  log.users.assign(users.begin(), users.end());
  log.topk.resize(users.size());

  auto run_range = [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      const std::vector<Index>* excl =
          exclusions.empty() ? nullptr : &exclusions[i];
      rank_one_user(user_vectors, item_vectors, pool, users[i], k, excl,
                    log.topk[i]);
    }
  };

  if (threads <= 1 || users.size() < 2) {
    run_range(0, users.size());
    return log;
  }

  const std::size_t n_threads =
      std::min<std::size_t>(threads, std::max<std::size_t>(1, users.size()));
  std::vector<std::thread> workers;
  std::vector<std::exception_ptr> errors(n_threads);
  const std::size_t chunk = (users.size() + n_threads - 1) / n_threads;
  for (std::size_t t = 0; t < n_threads; ++t) {
    const std::size_t begin = t * chunk;
    const std::size_t end = std::min(users.size(), begin + chunk);
    workers.emplace_back([&, t, begin, end] {
      try {
        run_range(begin, end);
      } catch (...) {
        errors[t] = std::current_exception();
      }
    });
  }
  for (auto& w : workers) w.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return log;
}

Index rank_of_item(std::span<const double> user_vector, const Mat& item_vectors,
                   std::span<const Index> pool, Index target) {
  bool found = false;
  for (Index item : pool) {
    if (item == target) {
      found = true;
      break;
    }
  }
  if (!found) throw DataError("target item not in pool");
  const double target_score = dot_f32(user_vector, item_vectors.row(target));
  Index rank = 1;
  for (Index item : pool) {
    if (item == target) continue;
    const double s = dot_f32(user_vector, item_vectors.row(item));
    if (s > target_score || (s == target_score && item < target)) ++rank;
  }
  return rank;
}

PredictionCounts prediction_counts(const RankingLog& log, Index k) {
  if (k == 0) k = log.k;
  std::unordered_map<Index, std::size_t> position;
  position.reserve(log.pool.size());
  for (std::size_t i = 0; i < log.pool.size(); ++i) {
    position.emplace(log.pool[i], i);
  }
  PredictionCounts counts;
  counts.pool = log.pool;
  counts.counts.assign(log.pool.size(), 0);
  for (const auto& list : log.topk) {
    const std::size_t take = std::min<std::size_t>(k, list.size());
    for (std::size_t r = 0; r < take; ++r) {
      const auto it = position.find(list[r].item);
      if (it == position.end()) throw DataError("ranked item not in pool");
      ++counts.counts[it->second];
    }
  }
  return counts;
}

void write_ranking_csv(const std::string& path, const RankingLog& log) {
  std::ofstream out(path);
  if (!out) throw DataError(path + ": cannot open for writing");
  out << "user_id,rank,item_id,score\n";
  char buf[32];
  for (std::size_t i = 0; i < log.users.size(); ++i) {
    for (std::size_t r = 0; r < log.topk[i].size(); ++r) {
      std::snprintf(buf, sizeof(buf), "%.6f", log.topk[i][r].score);
      out << log.users[i] << ',' << (r + 1) << ',' << log.topk[i][r].item
          << ',' << buf << '\n';
    }
  }
}

void write_counts_csv(const std::string& path, const PredictionCounts& counts) {
  std::ofstream out(path);
  if (!out) throw DataError(path + ": cannot open for writing");
  out << "item_id,count\n";
  for (std::size_t i = 0; i < counts.pool.size(); ++i) {
    out << counts.pool[i] << ',' << counts.counts[i] << '\n';
  }
}

PredictionCounts read_counts_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError(path + ": cannot open");
  std::string line;
  if (!std::getline(in, line)) throw DataError(path + ": empty counts file");
  PredictionCounts counts;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string item, count;
    if (!std::getline(ss, item, ',') || !std::getline(ss, count, ',')) {
      throw DataError(path + ": malformed line " + std::to_string(line_no));
    }
    try {
      counts.pool.push_back(static_cast<Index>(std::stoul(item)));
      counts.counts.push_back(static_cast<Index>(std::stoul(count)));
    } catch (const std::exception&) {
      throw DataError(path + ": malformed line " + std::to_string(line_no));
    }
  }
  return counts;
}

}  // namespace coldrec
