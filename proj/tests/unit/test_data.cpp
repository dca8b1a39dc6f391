#include <cmath>
#include <numeric>
#include <set>

#include "doctest.h"

#include "coldrec/data.hpp"
#include "coldrec/errors.hpp"
#include "coldrec/io.hpp"
#include "test_util.hpp"

using namespace coldrec;
using test::TempDir;

TEST_CASE("load_interactions maps ids and drops duplicates") {
  TempDir dir("load");
  write_text_file(dir.file("dup.tsv"), "a\tx\na\tx\n");
  InteractionTable t = load_interactions(dir.file("dup.tsv"));
  CHECK(t.num_users == 1);
  CHECK(t.num_items == 1);
  CHECK(t.pairs.size() == 1);

  write_text_file(dir.file("two.tsv"), "a\tx\nb\ty\n");
  t = load_interactions(dir.file("two.tsv"));
  CHECK(t.num_users == 2);
  CHECK(t.num_items == 2);
  CHECK(t.pairs.size() == 2);
  CHECK(t.user_ids == std::vector<std::string>{"a", "b"});
  CHECK(t.popularity == std::vector<Index>{1, 1});
  t.validate();
}

TEST_CASE("load_interactions handles comments and reports bad lines") {
  TempDir dir("loadbad");
  write_text_file(dir.file("c.tsv"), "# header comment\na\tx\n\nb\ty\n");
  const InteractionTable t = load_interactions(dir.file("c.tsv"));
  CHECK(t.pairs.size() == 2);

  write_text_file(dir.file("m.tsv"), "a\tx\nnotab\n");
  try {
    load_interactions(dir.file("m.tsv"));
    FAIL("expected DataError");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find("line 2") != std::string::npos);
  }

  write_text_file(dir.file("extra.tsv"), "a\tx\ty\n");
  CHECK_THROWS_AS(load_interactions(dir.file("extra.tsv")), DataError);
  write_text_file(dir.file("empty.tsv"), "# nothing\n");
  CHECK_THROWS_AS(load_interactions(dir.file("empty.tsv")), DataError);
}

TEST_CASE("indexed loader keeps the global index space") {
  TempDir dir("loadidx");
  write_text_file(dir.file("n.tsv"), "5\t9\n0\t2\n5\t9\n");
  const InteractionTable t = load_interactions_indexed(dir.file("n.tsv"), 10, 12);
  CHECK(t.num_users == 10);
  CHECK(t.num_items == 12);
  CHECK(t.pairs.size() == 2);
  CHECK(t.popularity[9] == 1);
}

TEST_CASE("build_features normalizes per mode and concatenates") {
  Mat a(1, 2);
  a.at(0, 0) = 3.0;
  a.at(0, 1) = 4.0;
  Mat out = build_features({a});
  CHECK(out.at(0, 0) == doctest::Approx(0.6).epsilon(1e-12));
  CHECK(out.at(0, 1) == doctest::Approx(0.8).epsilon(1e-12));

  Mat zero(1, 3, 0.0);
  out = build_features({a, zero});
  REQUIRE(out.cols() == 5);
  CHECK(out.at(0, 2) == 0.0);
  CHECK(out.at(0, 3) == 0.0);
  CHECK(out.at(0, 4) == 0.0);

  // dims add up the way the multimodal datasets do
  Mat m1(2, 1024, 0.5), m2(2, 1024, 0.25), m3(2, 768, 1.0);
  out = build_features({m1, m2, m3});
  CHECK(out.cols() == 2816);

  Mat mismatch(3, 2, 1.0);
  CHECK_THROWS_AS(build_features({a, mismatch}), DataError);
  Mat inf(1, 2, 0.0);
  inf.at(0, 0) = std::numeric_limits<double>::infinity();
  CHECK_THROWS_AS(build_features({inf}), DataError);
}

TEST_CASE("build_features: every nonzero mode block has unit norm") {
  std::mt19937_64 rng(5);
  const Mat m1 = test::random_mat(20, 7, rng), m2 = test::random_mat(20, 3, rng);
  const Mat out = build_features({m1, m2});
  for (std::size_t r = 0; r < out.rows(); ++r) {
    const double n1 = l2_norm(out.row(r).subspan(0, 7));
    const double n2 = l2_norm(out.row(r).subspan(7, 3));
    CHECK(n1 == doctest::Approx(1.0).epsilon(1e-6));
    CHECK(n2 == doctest::Approx(1.0).epsilon(1e-6));
  }
}

TEST_CASE("partition_items matches the stated rounding rules") {
  ItemPartition p = partition_items(1000, 0.8, 3);
  CHECK(p.warm.size() == 800);
  CHECK(p.cold_val.size() == 100);
  CHECK(p.cold_test.size() == 100);

  // Clothing-sized item count with the odd remainder going to validation.
  p = partition_items(23033, 0.8, 3);
  CHECK(p.warm.size() == 18426);
  CHECK(p.cold_val.size() == 2304);
  CHECK(p.cold_test.size() == 2303);

  // every item lands in exactly one part
  std::vector<Index> all;
  for (const auto* v : {&p.warm, &p.cold_val, &p.cold_test}) {
    all.insert(all.end(), v->begin(), v->end());
  }
  std::sort(all.begin(), all.end());
  std::vector<Index> expect(23033);
  std::iota(expect.begin(), expect.end(), 0u);
  CHECK(all == expect);

  const ItemPartition again = partition_items(23033, 0.8, 3);
  CHECK(again.warm == p.warm);
  CHECK(again.cold_val == p.cold_val);
  const ItemPartition other = partition_items(23033, 0.8, 4);
  CHECK(other.warm != p.warm);
}

namespace {

InteractionTable dense_table(Index users, Index items, Index per_user,
                             std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<Index> item(0, items - 1);
  std::set<std::pair<Index, Index>> seen;
  InteractionTable t;
  t.num_users = users;
  t.num_items = items;
  for (Index u = 0; u < users; ++u) {
    while (true) {
      std::size_t count = 0;
      for (const auto& p : seen) {
        if (p.first == u) ++count;
      }
      if (count >= per_user) break;
      seen.emplace(u, item(rng));
    }
  }
  t.pairs.assign(seen.begin(), seen.end());
  t.recount_popularity();
  return t;
}

}  // namespace

TEST_CASE("split_dataset conserves interactions and references") {
  const InteractionTable table = dense_table(60, 40, 8, 9);
  const Mat features(40, 0);
  const DatasetSplits s = split_dataset(table, features, 0.8, 0.8, 0.1, 17);

  CHECK(s.warm_items.size() == 32);
  CHECK(s.cold_val_items.size() == 4);
  CHECK(s.cold_test_items.size() == 4);

  const std::size_t total = s.warm_train.pairs.size() +
                            s.warm_val.pairs.size() +
                            s.warm_test.pairs.size() + s.cold_val.pairs.size() +
                            s.cold_test.pairs.size();
  CHECK(total == table.pairs.size());

  const std::set<Index> warm(s.warm_items.begin(), s.warm_items.end());
  const std::set<Index> cv(s.cold_val_items.begin(), s.cold_val_items.end());
  const std::set<Index> ct(s.cold_test_items.begin(), s.cold_test_items.end());
  for (const auto* t : {&s.warm_train, &s.warm_val, &s.warm_test}) {
    for (const auto& [u, i] : t->pairs) CHECK(warm.count(i) == 1);
  }
  for (const auto& [u, i] : s.cold_val.pairs) CHECK(cv.count(i) == 1);
  for (const auto& [u, i] : s.cold_test.pairs) CHECK(ct.count(i) == 1);

  const DatasetSplits again = split_dataset(table, features, 0.8, 0.8, 0.1, 17);
  CHECK(again.warm_train.pairs == s.warm_train.pairs);
  CHECK(again.cold_test.pairs == s.cold_test.pairs);
}

TEST_CASE("split_dataset rejects bad fractions and empty splits") {
  const InteractionTable table = dense_table(6, 10, 1, 2);
  const Mat features(10, 0);
  CHECK_THROWS_AS(split_dataset(table, features, 0.8, 0.9, 0.2, 1),
                  ConfigError);
  CHECK_THROWS_AS(split_dataset(table, features, 1.5, 0.8, 0.1, 1),
                  ConfigError);
  // 6 pairs cannot fill five nonempty splits every time
  CHECK_THROWS_AS(split_dataset(table, features, 0.8, 0.8, 0.1, 1), DataError);
}

TEST_CASE("generate_synthetic shapes and determinism") {
  SyntheticConfig cfg;
  cfg.num_users = 2000;
  cfg.num_items = 1400;
  cfg.latent_dim = 16;
  cfg.seed = 77;
  const SyntheticData a = generate_synthetic(cfg);
  CHECK(a.interactions.num_users == 2000);
  CHECK(a.interactions.num_items == 1400);
  CHECK(a.features.rows() == 1400);
  CHECK(a.features.cols() == cfg.feature_dim);
  CHECK(a.interactions.pairs.size() ==
        std::size_t(2000) * cfg.interactions_per_user);
  a.interactions.validate();
  for (std::size_t r = 0; r < a.features.rows(); ++r) {
    CHECK(l2_norm(a.features.row(r)) == doctest::Approx(1.0).epsilon(1e-9));
  }
  CHECK(a.popularity.front() > a.popularity.back());

  const SyntheticData b = generate_synthetic(cfg);
  CHECK(a.interactions.pairs == b.interactions.pairs);
  CHECK(a.features.values() == b.features.values());
  CHECK(a.popularity == b.popularity);

  SyntheticConfig bad = cfg;
  bad.interactions_per_user = 1400;
  CHECK_THROWS_AS(generate_synthetic(bad), ConfigError);
  bad = cfg;
  bad.zipf_exponent = 0.0;
  CHECK_THROWS_AS(generate_synthetic(bad), ConfigError);
}

// Monte-Carlo check over the sampler: with one draw per user the
// without-replacement correction vanishes, so the top two items' empirical
// count ratio estimates p_1/p_2 = 2^s.
TEST_CASE("generate_synthetic zipf head ratio approximates 2^s") {
  SyntheticConfig cfg;
  cfg.num_users = 12000;
  cfg.num_items = 500;
  cfg.latent_dim = 64;
  cfg.feature_dim = 16;
  cfg.zipf_exponent = 1.2;
  cfg.popularity_weight = 1.0;
  cfg.interactions_per_user = 1;
  cfg.seed = 123;
  const SyntheticData data = generate_synthetic(cfg);
  std::vector<Index> counts = data.interactions.popularity;
  std::sort(counts.begin(), counts.end(), std::greater<Index>());
  const double ratio = double(counts[0]) / double(counts[1]);
  const double expected = std::pow(2.0, 1.2);
  CHECK(ratio > 0.8 * expected);
  CHECK(ratio < 1.2 * expected);
}

TEST_CASE("reindex_items remaps and rejects outsiders") {
  InteractionTable t;
  t.num_users = 2;
  t.num_items = 5;
  t.pairs = {{0, 4}, {1, 2}};
  t.recount_popularity();
  const std::vector<Index> subset{2, 4};
  const InteractionTable local = reindex_items(t, subset);
  CHECK(local.num_items == 2);
  CHECK(local.pairs == std::vector<std::pair<Index, Index>>{{0, 1}, {1, 0}});
  const std::vector<Index> missing{2};
  CHECK_THROWS_AS(reindex_items(t, missing), DataError);
}
