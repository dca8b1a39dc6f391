#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <set>

#include "doctest.h"

#include "coldrec/errors.hpp"
#include "coldrec/metrics.hpp"
#include "coldrec/ranking.hpp"
#include "test_util.hpp"

using namespace coldrec;

TEST_CASE("ndcg hand examples") {
  const std::vector<Index> relevant{5};
  CHECK(ndcg_at_k(std::vector<Index>{5, 1}, relevant, 2) ==
        doctest::Approx(1.0).epsilon(1e-12));
  CHECK(ndcg_at_k(std::vector<Index>{1, 5}, relevant, 2) ==
        doctest::Approx(1.0 / std::log2(3.0)).epsilon(1e-12));
  CHECK(ndcg_at_k(std::vector<Index>{1, 2, 5}, relevant, 2) == 0.0);
  CHECK_THROWS_AS(ndcg_at_k(std::vector<Index>{1}, {}, 2), DataError);
}

TEST_CASE("recall hand examples") {
  CHECK(recall_at_k(std::vector<Index>{1, 2, 3}, {1, 9}, 3) ==
        doctest::Approx(0.5));
  CHECK(recall_at_k(std::vector<Index>{9, 1}, {1, 9}, 2) ==
        doctest::Approx(1.0));
}

TEST_CASE("mdg hand examples") {
  CHECK(mdg_at_k(std::vector<Index>{1}, 20) == doctest::Approx(1.0));
  CHECK(mdg_at_k(std::vector<Index>{1, 3}, 3) == doctest::Approx(0.75));
  CHECK(mdg_at_k(std::vector<Index>{4, 9}, 3) == 0.0);
  CHECK_THROWS_AS(mdg_at_k({}, 3), DataError);
}

TEST_CASE("mdg aggregates with the ceil slicing rule") {
  ItemMdgTable table;
  const double values[] = {0.0, 0.2, 0.5, 0.75, 1.0};
  for (Index i = 0; i < 5; ++i) table.push_back({i, 1, values[i]});
  const MdgAggregates agg = mdg_aggregates(table);
  CHECK(agg.min80 == doctest::Approx(0.3625).epsilon(1e-12));
  CHECK(agg.max5 == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(agg.all == doctest::Approx(0.49).epsilon(1e-12));

  ItemMdgTable uniform;
  for (Index i = 0; i < 7; ++i) uniform.push_back({i, 2, 0.4});
  const MdgAggregates u = mdg_aggregates(uniform);
  CHECK(u.min80 == doctest::Approx(0.4));
  CHECK(u.max5 == doctest::Approx(0.4));
  CHECK(u.all == doctest::Approx(0.4));

  const MdgAggregates single = mdg_aggregates({{3, 1, 0.7}});
  CHECK(single.min80 == doctest::Approx(0.7));
  CHECK(single.max5 == doctest::Approx(0.7));
  CHECK(single.all == doctest::Approx(0.7));
}

TEST_CASE("mdg aggregates ordering property") {
  std::mt19937_64 rng(31);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  for (int trial = 0; trial < 50; ++trial) {
    ItemMdgTable table;
    const Index n = 1 + rng() % 40;
    for (Index i = 0; i < n; ++i) table.push_back({i, 1, unif(rng)});
    const MdgAggregates agg = mdg_aggregates(table);
    CHECK(agg.min80 <= agg.all + 1e-12);
    CHECK(agg.all <= agg.max5 + 1e-12);
  }
}

TEST_CASE("gini diversity hand examples") {
  CHECK(gini_diversity(std::vector<Index>{5, 5, 5}) == doctest::Approx(1.0));
  CHECK(gini_diversity(std::vector<Index>{0, 0, 0, 4}) ==
        doctest::Approx(0.25).epsilon(1e-12));
  CHECK(gini_diversity(std::vector<Index>{1, 2, 3, 4}) ==
        doctest::Approx(0.75).epsilon(1e-12));
  CHECK_THROWS_AS(gini_diversity(std::vector<Index>{0, 0}), DataError);

  // adding a zero-count item to a uniform distribution lowers diversity
  CHECK(gini_diversity(std::vector<Index>{3, 3, 3, 0}) < 1.0);
}

namespace {

// Student-t two-sided p via adaptive Simpson integration of the density.
double t_pdf(double x, double df) {
  const double c = std::lgamma((df + 1.0) / 2.0) - std::lgamma(df / 2.0) -
                   0.5 * std::log(df * M_PI);
  return std::exp(c - (df + 1.0) / 2.0 * std::log1p(x * x / df));
}

double simpson(double a, double b, double df, int depth) {
  const double m = 0.5 * (a + b);
  const double coarse =
      (b - a) / 6.0 * (t_pdf(a, df) + 4.0 * t_pdf(m, df) + t_pdf(b, df));
  if (depth == 0) return coarse;
  const double left =
      (m - a) / 6.0 *
      (t_pdf(a, df) + 4.0 * t_pdf(0.5 * (a + m), df) + t_pdf(m, df));
  const double right =
      (b - m) / 6.0 *
      (t_pdf(m, df) + 4.0 * t_pdf(0.5 * (m + b), df) + t_pdf(b, df));
  if (std::fabs(left + right - coarse) < 1e-12) return left + right;
  return simpson(a, m, df, depth - 1) + simpson(m, b, df, depth - 1);
}

double oracle_two_sided_p(double t, double df) {
  const double inner = simpson(-std::fabs(t), std::fabs(t), df, 30);
  return 1.0 - inner;
}

}  // namespace

TEST_CASE("welch t test matches the integration oracle") {
  const std::vector<double> a{1, 2, 3, 4, 5};
  const std::vector<double> b{2, 3, 4, 5, 6};
  const WelchResult res = welch_t_test(a, b);
  CHECK(res.t == doctest::Approx(-1.0).epsilon(1e-12));
  CHECK(res.df == doctest::Approx(8.0).epsilon(1e-12));
  CHECK(res.p == doctest::Approx(oracle_two_sided_p(res.t, res.df))
                     .epsilon(1e-8));
  CHECK(res.p == doctest::Approx(0.3466).epsilon(1e-3));

  std::mt19937_64 rng(37);
  std::normal_distribution<double> nd(0.0, 1.0);
  for (int trial = 0; trial < 25; ++trial) {
    std::vector<double> x(3 + rng() % 10), y(3 + rng() % 10);
    for (double& v : x) v = nd(rng);
    for (double& v : y) v = 0.5 + 1.7 * nd(rng);
    const WelchResult r = welch_t_test(x, y);
    CHECK(r.p ==
          doctest::Approx(oracle_two_sided_p(r.t, r.df)).epsilon(1e-7));
  }
}

TEST_CASE("welch t test degenerate handling") {
  const std::vector<double> same{2, 2, 2};
  const WelchResult eq = welch_t_test(same, same);
  CHECK(eq.degenerate);
  CHECK(eq.t == 0.0);
  CHECK(eq.p == 1.0);

  const std::vector<double> other{3, 3, 3};
  const WelchResult diff = welch_t_test(same, other);
  CHECK(diff.degenerate);
  CHECK(diff.p == 0.0);

  const std::vector<double> identical{1, 2, 3};
  const WelchResult ident = welch_t_test(identical, identical);
  CHECK(ident.t == 0.0);
  CHECK(ident.p == doctest::Approx(1.0));

  CHECK_THROWS_AS(welch_t_test(std::vector<double>{1.0}, same), DataError);
}

TEST_CASE("recall and mdg are monotone non-increasing as k shrinks") {
  std::mt19937_64 rng(41);
  for (int trial = 0; trial < 30; ++trial) {
    const std::size_t n = 10 + rng() % 20;
    std::vector<Index> ranked(n);
    std::iota(ranked.begin(), ranked.end(), 0u);
    std::shuffle(ranked.begin(), ranked.end(), rng);
    std::vector<Index> relevant;
    for (Index i = 0; i < n; ++i) {
      if (rng() % 3 == 0) relevant.push_back(i);
    }
    if (relevant.empty()) relevant.push_back(0);
    std::vector<Index> ranks;
    for (Index i = 0; i < n; ++i) {
      if (rng() % 4 == 0) ranks.push_back(1 + rng() % n);
    }
    if (ranks.empty()) ranks.push_back(2);
    double prev_recall = 0.0, prev_mdg = 0.0;
    for (Index k = 1; k <= n; ++k) {
      const double rc = recall_at_k(ranked, relevant, k);
      const double md = mdg_at_k(ranks, k);
      CHECK(rc >= prev_recall - 1e-12);
      CHECK(md >= prev_mdg - 1e-12);
      prev_recall = rc;
      prev_mdg = md;
    }
  }
}

// With a single relevant item the ideal DCG is constant, making NDCG
// monotone in k as well.
TEST_CASE("ndcg grows with k for singleton relevance") {
  std::mt19937_64 rng(42);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t n = 5 + rng() % 15;
    std::vector<Index> ranked(n);
    std::iota(ranked.begin(), ranked.end(), 0u);
    std::shuffle(ranked.begin(), ranked.end(), rng);
    const std::vector<Index> relevant{static_cast<Index>(rng() % n)};
    double prev = 0.0;
    for (Index k = 1; k <= n; ++k) {
      const double nd = ndcg_at_k(ranked, relevant, k);
      CHECK(nd >= prev - 1e-12);
      prev = nd;
    }
  }
}

namespace {

// Exhaustive oracle over a raw score matrix: full sort per user, direct
// formula evaluation, no shared code with the library path.
struct OracleMetrics {
  double ndcg, recall, min80, max5, all, gini;
};

OracleMetrics oracle_eval(const std::vector<std::vector<double>>& scores,
                          const std::vector<std::vector<Index>>& relevant,
                          Index k) {
  const std::size_t n_users = scores.size();
  const std::size_t n_items = scores.front().size();
  std::vector<std::vector<Index>> rank_of(n_users,
                                          std::vector<Index>(n_items, 0));
  std::vector<Index> counts(n_items, 0);
  for (std::size_t u = 0; u < n_users; ++u) {
    std::vector<Index> order(n_items);
    std::iota(order.begin(), order.end(), 0u);
    std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) {
      if (scores[u][a] != scores[u][b]) return scores[u][a] > scores[u][b];
      return a < b;
    });
    for (std::size_t pos = 0; pos < n_items; ++pos) {
      rank_of[u][order[pos]] = static_cast<Index>(pos + 1);
      if (pos < k) ++counts[order[pos]];
    }
  }
  double ndcg_sum = 0.0, recall_sum = 0.0;
  for (std::size_t u = 0; u < n_users; ++u) {
    double dcg = 0.0;
    std::size_t hits = 0;
    for (Index item : relevant[u]) {
      if (rank_of[u][item] <= k) {
        dcg += 1.0 / std::log2(1.0 + rank_of[u][item]);
        ++hits;
      }
    }
    double idcg = 0.0;
    for (std::size_t r = 1; r <= std::min<std::size_t>(k, relevant[u].size());
         ++r) {
      idcg += 1.0 / std::log2(1.0 + double(r));
    }
    ndcg_sum += dcg / idcg;
    recall_sum += double(hits) / double(relevant[u].size());
  }
  // per-item MDG over target users
  std::vector<std::pair<double, Index>> mdgs;
  for (Index item = 0; item < n_items; ++item) {
    double sum = 0.0;
    std::size_t targets = 0;
    for (std::size_t u = 0; u < n_users; ++u) {
      if (std::find(relevant[u].begin(), relevant[u].end(), item) ==
          relevant[u].end()) {
        continue;
      }
      ++targets;
      if (rank_of[u][item] <= k) sum += 1.0 / std::log2(1.0 + rank_of[u][item]);
    }
    if (targets > 0) mdgs.emplace_back(sum / double(targets), item);
  }
  std::sort(mdgs.begin(), mdgs.end());
  const std::size_t n = mdgs.size();
  auto slice_mean = [&mdgs](std::size_t begin, std::size_t end) {
    double s = 0.0;
    for (std::size_t i = begin; i < end; ++i) s += mdgs[i].first;
    return s / double(end - begin);
  };
  const std::size_t n80 =
      static_cast<std::size_t>(std::ceil(0.8 * double(n) - 1e-12));
  const std::size_t n5 =
      static_cast<std::size_t>(std::ceil(0.05 * double(n) - 1e-12));
  OracleMetrics out;
  out.ndcg = ndcg_sum / double(n_users);
  out.recall = recall_sum / double(n_users);
  out.min80 = slice_mean(0, n80);
  out.max5 = slice_mean(n - n5, n);
  out.all = slice_mean(0, n);
  // Gini over sorted counts
  std::vector<double> sorted(counts.begin(), counts.end());
  std::sort(sorted.begin(), sorted.end());
  double total = std::accumulate(sorted.begin(), sorted.end(), 0.0);
  double weighted = 0.0;
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    weighted += (2.0 * double(i + 1) - double(sorted.size()) - 1.0) * sorted[i];
  }
  out.gini = 1.0 - weighted / (double(sorted.size()) * total);
  return out;
}

}  // namespace

TEST_CASE("metric stack matches the exhaustive oracle on small instances") {
  std::mt19937_64 rng(43);
  std::uniform_int_distribution<int> level(0, 4);
  for (int trial = 0; trial < 150; ++trial) {
    const std::size_t n_users = 1 + rng() % 10;
    const std::size_t n_items = 2 + rng() % 9;
    const Index k = 1 + static_cast<Index>(rng() % n_items);
    std::vector<std::vector<double>> scores(n_users,
                                            std::vector<double>(n_items));
    for (auto& row : scores) {
      for (double& v : row) v = 0.5 * level(rng);
    }
    std::vector<std::vector<Index>> relevant(n_users);
    for (std::size_t u = 0; u < n_users; ++u) {
      for (Index i = 0; i < n_items; ++i) {
        if (rng() % 3 == 0) relevant[u].push_back(i);
      }
      if (relevant[u].empty()) {
        relevant[u].push_back(static_cast<Index>(rng() % n_items));
      }
    }
    // library path: matrices scoring identically to the raw score matrix
    Mat users(n_users, n_items), items(n_items, n_items, 0.0);
    for (std::size_t u = 0; u < n_users; ++u) {
      for (std::size_t i = 0; i < n_items; ++i) users.at(u, i) = scores[u][i];
    }
    for (std::size_t i = 0; i < n_items; ++i) items.at(i, i) = 1.0;
    std::vector<Index> pool(n_items), evaluated(n_users);
    std::iota(pool.begin(), pool.end(), 0u);
    std::iota(evaluated.begin(), evaluated.end(), 0u);
    const RankingLog log =
        rank_topk(users, items, pool, evaluated, static_cast<Index>(n_items));

    double ndcg_sum = 0.0, recall_sum = 0.0;
    ItemMdgTable mdg_table;
    std::vector<std::vector<Index>> ranks(n_items);
    for (std::size_t u = 0; u < n_users; ++u) {
      std::vector<Index> ranked;
      for (std::size_t r = 0; r < std::min<std::size_t>(k, log.topk[u].size());
           ++r) {
        ranked.push_back(log.topk[u][r].item);
      }
      ndcg_sum += ndcg_at_k(ranked, relevant[u], k);
      recall_sum += recall_at_k(ranked, relevant[u], k);
      for (Index item : relevant[u]) {
        Index rank = static_cast<Index>(n_items + 1);
        for (std::size_t r = 0; r < log.topk[u].size(); ++r) {
          if (log.topk[u][r].item == item) {
            rank = static_cast<Index>(r + 1);
            break;
          }
        }
        ranks[item].push_back(rank);
      }
    }
    for (Index item = 0; item < n_items; ++item) {
      if (!ranks[item].empty()) {
        mdg_table.push_back({item, static_cast<Index>(ranks[item].size()),
                             mdg_at_k(ranks[item], k)});
      }
    }
    const MdgAggregates agg = mdg_aggregates(mdg_table);
    const PredictionCounts counts = prediction_counts(log, k);
    const double gini = gini_diversity(counts.counts);

    const OracleMetrics oracle = oracle_eval(scores, relevant, k);
    CHECK(ndcg_sum / double(n_users) == doctest::Approx(oracle.ndcg).epsilon(1e-9));
    CHECK(recall_sum / double(n_users) ==
          doctest::Approx(oracle.recall).epsilon(1e-9));
    CHECK(agg.min80 == doctest::Approx(oracle.min80).epsilon(1e-9));
    CHECK(agg.max5 == doctest::Approx(oracle.max5).epsilon(1e-9));
    CHECK(agg.all == doctest::Approx(oracle.all).epsilon(1e-9));
    CHECK(gini == doctest::Approx(oracle.gini).epsilon(1e-9));
  }
}

// Consistent relabeling of item ids leaves every metric unchanged when
// scores are tie-free (the index tie-break makes tied groups label-sensitive).
TEST_CASE("metrics are invariant under item relabeling") {
  std::mt19937_64 rng(47);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t n_users = 2 + rng() % 6;
    const std::size_t n_items = 4 + rng() % 6;
    const Index k = 2 + static_cast<Index>(rng() % (n_items - 1));
    std::vector<std::vector<double>> scores(n_users,
                                            std::vector<double>(n_items));
    for (auto& row : scores) {
      for (double& v : row) v = unif(rng);
    }
    std::vector<std::vector<Index>> relevant(n_users);
    for (std::size_t u = 0; u < n_users; ++u) {
      relevant[u].push_back(static_cast<Index>(rng() % n_items));
    }
    std::vector<Index> perm(n_items);
    std::iota(perm.begin(), perm.end(), 0u);
    std::shuffle(perm.begin(), perm.end(), rng);

    auto eval = [&](bool permuted) {
      Mat users(n_users, n_items), items(n_items, n_items, 0.0);
      for (std::size_t u = 0; u < n_users; ++u) {
        for (std::size_t i = 0; i < n_items; ++i) {
          users.at(u, permuted ? perm[i] : i) = scores[u][i];
        }
      }
      for (std::size_t i = 0; i < n_items; ++i) items.at(i, i) = 1.0;
      std::vector<Index> pool(n_items), evaluated(n_users);
      std::iota(pool.begin(), pool.end(), 0u);
      std::iota(evaluated.begin(), evaluated.end(), 0u);
      const RankingLog log =
          rank_topk(users, items, pool, evaluated, static_cast<Index>(n_items));
      double ndcg = 0.0, recall = 0.0;
      ItemMdgTable table;
      std::vector<std::vector<Index>> ranks(n_items);
      for (std::size_t u = 0; u < n_users; ++u) {
        std::vector<Index> ranked;
        for (std::size_t r = 0; r < std::min<std::size_t>(k, n_items); ++r) {
          ranked.push_back(log.topk[u][r].item);
        }
        const std::vector<Index> rel{permuted ? perm[relevant[u][0]]
                                              : relevant[u][0]};
        ndcg += ndcg_at_k(ranked, rel, k);
        recall += recall_at_k(ranked, rel, k);
        Index rank = static_cast<Index>(n_items + 1);
        for (std::size_t r = 0; r < log.topk[u].size(); ++r) {
          if (log.topk[u][r].item == rel[0]) rank = static_cast<Index>(r + 1);
        }
        ranks[rel[0]].push_back(rank);
      }
      for (Index i = 0; i < n_items; ++i) {
        if (!ranks[i].empty()) {
          table.push_back({i, static_cast<Index>(ranks[i].size()),
                           mdg_at_k(ranks[i], k)});
        }
      }
      const MdgAggregates agg = mdg_aggregates(table);
      const PredictionCounts counts = prediction_counts(log, k);
      return std::vector<double>{ndcg,      recall,  agg.min80,
                                 agg.max5,  agg.all, gini_diversity(counts.counts)};
    };
    const auto base = eval(false);
    const auto permuted = eval(true);
    for (std::size_t m = 0; m < base.size(); ++m) {
      CHECK(base[m] == doctest::Approx(permuted[m]).epsilon(1e-12));
    }
  }
}

TEST_CASE("report serialization") {
  MetricReport r;
  r.k = 20;
  r.model = "coldgen";
  r.alpha = 1.5;
  r.seed = 9;
  r.evaluated_users = 10;
  r.evaluated_items = 5;
  r.values = {{"ndcg", 0.25},      {"recall", 0.5},  {"mdg_min80", 0.01},
              {"mdg_max5", 0.4},   {"mdg_all", 0.1}, {"gini_div", 0.6}};
  const std::string json = report_json(r);
  CHECK(json.find("\"model\":\"coldgen\"") != std::string::npos);
  CHECK(json.find("\"ndcg\":0.25") != std::string::npos);
  const std::string row = report_csv_row(r);
  CHECK(row.find("coldgen,1.5,20,9,10,5,0.250000") == 0);
}
