// Command-line front end for the cold-start popularity-bias toolkit.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "coldrec/analysis.hpp"
#include "coldrec/coldgen.hpp"
#include "coldrec/data.hpp"
#include "coldrec/errors.hpp"
#include "coldrec/io.hpp"
#include "coldrec/metrics.hpp"
#include "coldrec/mitigate.hpp"
#include "coldrec/pipeline.hpp"
#include "coldrec/ranking.hpp"
#include "coldrec/warm.hpp"

namespace fs = std::filesystem;
using namespace coldrec;
using nlohmann::json;

namespace {

Mat select_rows(const Mat& m, std::span<const Index> rows) {
  Mat out(rows.size(), m.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    std::copy_n(m[rows[i]], m.cols(), out[i]);
  }
  return out;
}

void write_sidecar(const std::string& path, const json& j) {
  write_text_file(path, j.dump(2) + "\n");
}

struct GenerateArgs {
  SyntheticConfig synth;
  std::string out;
};

void run_generate(const GenerateArgs& args) {
  fs::create_directories(args.out);
  const SyntheticData data = generate_synthetic(args.synth);
  write_interactions((fs::path(args.out) / "interactions.tsv").string(),
                     data.interactions);
  write_emb1((fs::path(args.out) / "features.emb").string(), data.features);
  std::string pop = "item_id,weight\n";
  char buf[64];
  for (std::size_t i = 0; i < data.popularity.size(); ++i) {
    std::snprintf(buf, sizeof(buf), "%zu,%.9g\n", i, data.popularity[i]);
    pop += buf;
  }
  write_text_file((fs::path(args.out) / "popularity.csv").string(), pop);
  write_sidecar((fs::path(args.out) / "generate.json").string(),
                json{{"num_users", args.synth.num_users},
                     {"num_items", args.synth.num_items},
                     {"latent_dim", args.synth.latent_dim},
                     {"feature_dim", args.synth.feature_dim},
                     {"zipf_exponent", args.synth.zipf_exponent},
                     {"popularity_weight", args.synth.popularity_weight},
                     {"feature_noise", args.synth.feature_noise},
                     {"trend_noise", args.synth.trend_noise},
                     {"interactions_per_user", args.synth.interactions_per_user},
                     {"seed", args.synth.seed}});
  std::cout << "wrote " << data.interactions.pairs.size() << " pairs for "
            << data.interactions.num_users << " users x "
            << data.interactions.num_items << " items to " << args.out << "\n";
}

struct SplitArgs {
  std::string interactions, features, out;
  double warm_frac = 0.8, train_frac = 0.8, val_frac = 0.1;
  std::uint64_t seed = 42;
};

void run_split(const SplitArgs& args) {
  // With a feature file the item ids must be row indices into it, so the
  // index-preserving loader applies; otherwise ids may be arbitrary labels.
  InteractionTable table;
  Mat features;
  if (!args.features.empty()) {
    features = read_feature_file(args.features);
    table = load_interactions_indexed(args.interactions, 0,
                                      static_cast<Index>(features.rows()));
    if (table.num_items > features.rows()) {
      throw DataError("interaction item index exceeds feature rows");
    }
  } else {
    table = load_interactions(args.interactions);
    features = Mat(table.num_items, 0);
  }
  const DatasetSplits splits =
      split_dataset(table, features, args.warm_frac, args.train_frac,
                    args.val_frac, args.seed);
  fs::create_directories(args.out);
  const fs::path out(args.out);
  write_index_csv((out / "warm_items.csv").string(), splits.warm_items);
  write_index_csv((out / "cold_val_items.csv").string(),
                  splits.cold_val_items);
  write_index_csv((out / "cold_test_items.csv").string(),
                  splits.cold_test_items);
  // Split tables are written with numeric global indices so later stages can
  // reload them without any remapping; ids.csv keeps the original labels.
  auto write_numeric = [&out](const char* name, InteractionTable t) {
    t.user_ids.clear();
    t.item_ids.clear();
    write_interactions((out / name).string(), t);
  };
  write_numeric("warm_train.tsv", splits.warm_train);
  write_numeric("warm_val.tsv", splits.warm_val);
  write_numeric("warm_test.tsv", splits.warm_test);
  write_numeric("cold_val.tsv", splits.cold_val);
  write_numeric("cold_test.tsv", splits.cold_test);
  if (!table.user_ids.empty()) {
    std::string ids = "kind,index,id\n";
    for (std::size_t u = 0; u < table.user_ids.size(); ++u) {
      ids += "user," + std::to_string(u) + "," + table.user_ids[u] + "\n";
    }
    for (std::size_t i = 0; i < table.item_ids.size(); ++i) {
      ids += "item," + std::to_string(i) + "," + table.item_ids[i] + "\n";
    }
    write_text_file((out / "ids.csv").string(), ids);
  }
  write_sidecar((out / "split.json").string(),
                json{{"interactions", args.interactions},
                     {"num_users", table.num_users},
                     {"num_items", table.num_items},
                     {"warm_frac", args.warm_frac},
                     {"train_frac", args.train_frac},
                     {"val_frac", args.val_frac},
                     {"seed", args.seed},
                     {"warm_items", splits.warm_items.size()},
                     {"cold_val_items", splits.cold_val_items.size()},
                     {"cold_test_items", splits.cold_test_items.size()}});
  std::cout << "split " << table.num_items << " items into "
            << splits.warm_items.size() << " warm / "
            << splits.cold_val_items.size() << " cold-val / "
            << splits.cold_test_items.size() << " cold-test\n";
}

struct TrainWarmArgs {
  std::string train, warm_items, out;
  Index num_users = 0;
  BprConfig bpr;
  bool early_stopping = false;
  std::string val;
  Index patience = 5;
};

void run_train_warm(const TrainWarmArgs& args) {
  InteractionTable train =
      load_interactions_indexed(args.train, args.num_users);
  std::vector<Index> warm_items;
  if (!args.warm_items.empty()) {
    warm_items = read_index_csv(args.warm_items);
    train = reindex_items(train, warm_items);
  }
  FactorModel model;
  if (args.early_stopping) {
    InteractionTable val =
        load_interactions_indexed(args.val, train.num_users);
    if (!warm_items.empty()) val = reindex_items(val, warm_items);
    model = train_warm_early_stopped(train, val, args.bpr, args.patience);
  } else {
    model = train_warm(train, args.bpr);
  }
  fs::create_directories(args.out);
  const fs::path out(args.out);
  write_emb1((out / "warm_users.emb").string(), model.user_embeddings);
  write_emb1((out / "warm_items.emb").string(), model.item_embeddings);
  write_sidecar((out / "warm_model.json").string(),
                json{{"train", args.train},
                     {"latent_dim", args.bpr.latent_dim},
                     {"learning_rate", args.bpr.learning_rate},
                     {"l2_lambda", args.bpr.l2_lambda},
                     {"epochs", args.bpr.epochs},
                     {"negatives_per_positive", args.bpr.negatives_per_positive},
                     {"init_scale", args.bpr.init_scale},
                     {"seed", args.bpr.seed},
                     {"early_stopping", args.early_stopping}});
  std::cout << "trained warm model: " << model.user_embeddings.rows()
            << " users x " << model.item_embeddings.rows() << " items, d="
            << model.latent_dim << "\n";
}

struct TrainColdArgs {
  std::string features, warm_items, warm_emb, out;
  std::string mode = "ridge";
  double lambda = 0.1;
  MlpConfig mlp;
};

void run_train_cold(const TrainColdArgs& args) {
  const Mat features = read_feature_file(args.features);
  const Mat warm_emb = read_emb1(args.warm_emb);
  Mat warm_features = features;
  if (!args.warm_items.empty()) {
    const std::vector<Index> warm_items = read_index_csv(args.warm_items);
    warm_features = select_rows(features, warm_items);
  }
  ColdEncoder enc;
  if (args.mode == "mlp") {
    enc = fit_encoder_mlp(warm_features, warm_emb, args.mlp);
  } else if (args.mode == "ridge") {
    enc = fit_encoder(warm_features, warm_emb, args.lambda);
  } else {
    throw ConfigError("mode must be ridge or mlp");
  }
  fs::create_directories(args.out);
  const fs::path out(args.out);
  json sidecar{{"mode", args.mode}, {"features", args.features}};
  if (enc.kind == ColdEncoder::Kind::linear) {
    write_emb1((out / "encoder_w.emb").string(), enc.w);
    sidecar["ridge_lambda"] = args.lambda;
  } else {
    write_emb1((out / "encoder_w1.emb").string(), enc.w1);
    write_emb1((out / "encoder_w2.emb").string(), enc.w2);
    sidecar["hidden_dim"] = args.mlp.hidden_dim;
    sidecar["learning_rate"] = args.mlp.learning_rate;
    sidecar["epochs"] = args.mlp.epochs;
    sidecar["seed"] = args.mlp.seed;
  }
  write_sidecar((out / "encoder.json").string(), sidecar);
  std::cout << "fitted " << args.mode << " encoder\n";
}

struct InferColdArgs {
  std::string encoder_dir, features, items, out;
};

void run_infer_cold(const InferColdArgs& args) {
  const json sidecar =
      json::parse(read_text_file(args.encoder_dir + "/encoder.json"));
  ColdEncoder enc;
  if (sidecar.value("mode", "ridge") == "mlp") {
    enc.kind = ColdEncoder::Kind::mlp;
    enc.w1 = read_emb1(args.encoder_dir + "/encoder_w1.emb");
    enc.w2 = read_emb1(args.encoder_dir + "/encoder_w2.emb");
  } else {
    enc.kind = ColdEncoder::Kind::linear;
    enc.w = read_emb1(args.encoder_dir + "/encoder_w.emb");
  }
  Mat features = read_feature_file(args.features);
  if (!args.items.empty()) {
    const std::vector<Index> items = read_index_csv(args.items);
    features = select_rows(features, items);
  }
  write_emb1(args.out, generate_cold(enc, features));
  std::cout << "generated " << features.rows() << " cold embeddings\n";
}

struct RankArgs {
  std::string user_emb, item_emb, out, users_file, exclude;
  Index k = 20;
  int threads = 1;
};

void run_rank(const RankArgs& args) {
  const Mat users_m = read_emb1(args.user_emb);
  const Mat items_m = read_emb1(args.item_emb);
  std::vector<Index> pool(items_m.rows());
  std::iota(pool.begin(), pool.end(), 0u);
  std::vector<Index> users;
  if (args.users_file.empty()) {
    users.resize(users_m.rows());
    std::iota(users.begin(), users.end(), 0u);
  } else {
    users = read_index_csv(args.users_file);
  }
  std::vector<std::vector<Index>> exclusions;
  if (!args.exclude.empty()) {
    const InteractionTable excl = load_interactions_indexed(
        args.exclude, static_cast<Index>(users_m.rows()),
        static_cast<Index>(items_m.rows()));
    const auto by_user = items_by_user(excl);
    exclusions.reserve(users.size());
    for (Index u : users) exclusions.push_back(by_user[u]);
  }
  const RankingLog log =
      rank_topk(users_m, items_m, pool, users, args.k, exclusions, args.threads);
  fs::create_directories(args.out);
  write_ranking_csv((fs::path(args.out) / "ranking.csv").string(), log);
  write_counts_csv((fs::path(args.out) / "counts.csv").string(),
                   prediction_counts(log));
  std::cout << "ranked " << users.size() << " users over " << pool.size()
            << " items at k=" << args.k << "\n";
}

struct ScaleArgs {
  std::string in, warm_emb, out;
  double mu_w = 0.0;
  double alpha = 0.0;
};

void run_scale(const ScaleArgs& args) {
  const Mat cold = read_emb1(args.in);
  double mu_w = args.mu_w;
  if (mu_w <= 0.0) {
    if (args.warm_emb.empty()) {
      throw ConfigError("scale needs --mu-w or --warm-emb");
    }
    mu_w = warm_mean_magnitude(read_emb1(args.warm_emb));
  }
  write_emb1(args.out, scale_embeddings(cold, mu_w, args.alpha));
  write_sidecar(args.out + ".json",
                json{{"alpha", args.alpha}, {"mu_w", mu_w}, {"input", args.in}});
  std::cout << "scaled " << cold.rows() << " embeddings with alpha="
            << args.alpha << ", mu_w=" << mu_w << "\n";
}

struct EvaluateArgs {
  std::string user_emb, item_emb, holdout, out;
  std::vector<Index> k_list = {20, 50};
  int threads = 1;
  std::string model = "coldgen";
  double alpha = 0.0;
  std::uint64_t seed = 0;
};

void run_evaluate(const EvaluateArgs& args) {
  const Mat users_m = read_emb1(args.user_emb);
  const Mat items_m = read_emb1(args.item_emb);
  const InteractionTable holdout = load_interactions_indexed(
      args.holdout, static_cast<Index>(users_m.rows()),
      static_cast<Index>(items_m.rows()));
  if (holdout.num_items > items_m.rows()) {
    throw DataError("holdout references items beyond the embedding matrix");
  }
  const auto by_user = items_by_user(holdout);
  std::vector<Index> users;
  std::vector<std::vector<Index>> relevant;
  for (Index u = 0; u < holdout.num_users; ++u) {
    if (by_user[u].empty()) continue;
    users.push_back(u);
    relevant.push_back(by_user[u]);
  }
  if (users.empty()) throw DataError("no users with holdout interactions");
  std::vector<Index> pool(items_m.rows());
  std::iota(pool.begin(), pool.end(), 0u);
  const Index k_max = *std::max_element(args.k_list.begin(), args.k_list.end());
  const RankingLog log =
      rank_topk(users_m, items_m, pool, users, k_max, {}, args.threads);
  const PoolEvaluation eval = evaluate_ranking(
      log, relevant, args.k_list, static_cast<Index>(items_m.rows()));
  fs::create_directories(args.out);
  const fs::path out(args.out);
  std::string csv = report_csv_header() + "\n";
  json reports = json::array();
  for (Index k : args.k_list) {
    MetricReport report = eval.by_k.at(k);
    report.model = args.model;
    report.alpha = args.alpha;
    report.seed = args.seed;
    csv += report_csv_row(report) + "\n";
    reports.push_back(json::parse(report_json(report)));
    write_mdg_csv((out / ("item_mdg_k" + std::to_string(k) + ".csv")).string(),
                  eval.mdg_by_k.at(k));
    write_counts_csv((out / ("counts_k" + std::to_string(k) + ".csv")).string(),
                     eval.counts_by_k.at(k));
  }
  write_text_file((out / "metrics.csv").string(), csv);
  write_text_file((out / "metrics.json").string(), reports.dump(2) + "\n");
  for (Index k : args.k_list) {
    const MetricReport& r = eval.by_k.at(k);
    std::printf("k=%-3u ndcg=%.4f recall=%.4f mdg_min80=%.4f mdg_max5=%.4f "
                "mdg_all=%.4f gini_div=%.4f (%u users, %u items)\n",
                k, r.values.at("ndcg"), r.values.at("recall"),
                r.values.at("mdg_min80"), r.values.at("mdg_max5"),
                r.values.at("mdg_all"), r.values.at("gini_div"),
                r.evaluated_users, r.evaluated_items);
  }
}

struct AnalyzeArgs {
  std::string counts, holdout, features, item_emb, warm_items, warm_train, out;
  Index top_n = 50;
  Index k = 20;
  Index num_users = 0;
  Index n_neighbors = 10;
};

void run_analyze(const AnalyzeArgs& args) {
  const PredictionCounts counts = read_counts_csv(args.counts);
  fs::create_directories(args.out);
  const fs::path out(args.out);
  if (!args.holdout.empty()) {
    Index max_item = 0;
    for (Index item : counts.pool) max_item = std::max(max_item, item);
    const InteractionTable holdout =
        load_interactions_indexed(args.holdout, 0, max_item + 1);
    write_fig1_csv((out / "fig1.csv").string(), fig1_table(counts, holdout));
  }
  if (!args.features.empty() && !args.warm_items.empty() &&
      !args.warm_train.empty()) {
    const Mat features = read_feature_file(args.features);
    const std::vector<Index> warm_items = read_index_csv(args.warm_items);
    const InteractionTable warm_train = load_interactions_indexed(
        args.warm_train, 0, static_cast<Index>(features.rows()));
    std::vector<Index> warm_pop;
    warm_pop.reserve(warm_items.size());
    for (Index item : warm_items) {
      warm_pop.push_back(warm_train.popularity[item]);
    }
    write_fig2_csv((out / "fig2.csv").string(),
                   neighbor_popularity(top_decile_by_count(counts), features,
                                       warm_items, warm_pop, args.n_neighbors),
                   counts);
  }
  if (!args.item_emb.empty()) {
    const Mat emb = read_emb1(args.item_emb);
    write_fig3_csv((out / "fig3.csv").string(), fig3_table(counts, emb));
  }
  write_fig4_csv((out / "fig4.csv").string(), percentile_curve(counts));
  Index num_users = args.num_users;
  if (num_users == 0) {
    // Upper bound when the evaluated user count is not supplied.
    std::size_t total = 0;
    for (Index c : counts.counts) total += c;
    num_users = static_cast<Index>((total + args.k - 1) / args.k);
  }
  const ConcentrationStats stats = concentration(
      counts, std::min<Index>(args.top_n, counts.pool.size()), args.k,
      num_users);
  write_sidecar((out / "concentration.json").string(),
                json{{"top_n", stats.top_n},
                     {"top_n_share", stats.top_n_share},
                     {"zero_pred_items", stats.zero_pred_items},
                     {"k", args.k}});
  std::printf("top-%u share=%.4f zero_pred_items=%u\n", stats.top_n,
              stats.top_n_share, stats.zero_pred_items);
}

struct CompareArgs {
  std::string metrics, out;
  std::string model = "coldgen", pool = "test";
  Index k = 20;
  double base_alpha = 0.0;
  double treated_alpha = 0.0;
};

void run_compare(const CompareArgs& args) {
  const std::vector<MetricRow> rows = read_metrics_csv(args.metrics);
  auto collect = [&](double alpha) {
    std::vector<MetricRow> matched;
    for (const MetricRow& r : rows) {
      if (r.model == args.model && r.pool == args.pool && r.k == args.k &&
          r.alpha == alpha) {
        matched.push_back(r);
      }
    }
    std::sort(matched.begin(), matched.end(),
              [](const MetricRow& a, const MetricRow& b) {
                return a.run < b.run;
              });
    std::vector<MetricReport> reports;
    for (const MetricRow& r : matched) reports.push_back(r.report);
    return reports;
  };
  const auto base = collect(args.base_alpha);
  const auto treated = collect(args.treated_alpha);
  if (base.empty() || treated.empty()) {
    throw DataError("no matching rows for the requested comparison");
  }
  const auto table = compare_runs(base, treated);
  if (!args.out.empty()) write_comparison_csv(args.out, table);
  std::printf("%-10s %12s %12s %10s %10s  flags\n", "metric", "base", "treated",
              "delta", "p");
  for (const ComparisonRow& r : table) {
    std::string flags;
    if (r.significant_gain) flags += "+sig ";
    if (r.significant_loss) flags += "-sig ";
    if (r.large_change) flags += ">=10% ";
    std::printf("%-10s %12.6f %12.6f %+10.6f %10.4g  %s\n", r.metric.c_str(),
                r.mean_base, r.mean_treated, r.delta, r.p_value, flags.c_str());
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"cold-start popularity bias experimentation toolkit"};
  app.require_subcommand(1);

  GenerateArgs gen;
  CLI::App* generate = app.add_subcommand("generate", "synthesize a dataset");
  generate->add_option("--users", gen.synth.num_users, "user count");
  generate->add_option("--items", gen.synth.num_items, "item count");
  generate->add_option("--latent-dim", gen.synth.latent_dim, "latent dim");
  generate->add_option("--feature-dim", gen.synth.feature_dim, "feature dim");
  generate->add_option("--zipf", gen.synth.zipf_exponent, "zipf exponent");
  generate->add_option("--beta", gen.synth.popularity_weight,
                       "popularity weight");
  generate->add_option("--noise", gen.synth.feature_noise, "feature noise");
  generate->add_option("--trend-noise", gen.synth.trend_noise,
                       "popularity-content decoupling");
  generate->add_option("--interactions-per-user",
                       gen.synth.interactions_per_user, "items per user");
  generate->add_option("--seed", gen.synth.seed, "rng seed");
  generate->add_option("--out", gen.out, "output directory")->required();

  SplitArgs split;
  CLI::App* split_cmd = app.add_subcommand("split", "two-stage dataset split");
  split_cmd->add_option("--interactions", split.interactions, "tsv file")
      ->required();
  split_cmd->add_option("--features", split.features, "feature file");
  split_cmd->add_option("--warm-frac", split.warm_frac, "warm item fraction");
  split_cmd->add_option("--train-frac", split.train_frac, "train fraction");
  split_cmd->add_option("--val-frac", split.val_frac, "val fraction");
  split_cmd->add_option("--seed", split.seed, "rng seed");
  split_cmd->add_option("--out", split.out, "output directory")->required();

  TrainWarmArgs tw;
  CLI::App* train_warm_cmd =
      app.add_subcommand("train-warm", "train the BPR warm model");
  train_warm_cmd->add_option("--train", tw.train, "warm_train.tsv")->required();
  train_warm_cmd->add_option("--warm-items", tw.warm_items,
                             "warm_items.csv (reindexes to warm-local)");
  train_warm_cmd->add_option("--num-users", tw.num_users, "user count");
  train_warm_cmd->add_option("--latent-dim", tw.bpr.latent_dim, "latent dim");
  train_warm_cmd->add_option("--lr", tw.bpr.learning_rate, "learning rate");
  train_warm_cmd->add_option("--l2", tw.bpr.l2_lambda, "l2 lambda");
  train_warm_cmd->add_option("--epochs", tw.bpr.epochs, "epochs");
  train_warm_cmd->add_option("--negatives", tw.bpr.negatives_per_positive,
                             "negatives per positive");
  train_warm_cmd->add_option("--init-scale", tw.bpr.init_scale, "init scale");
  train_warm_cmd->add_option("--seed", tw.bpr.seed, "rng seed");
  train_warm_cmd->add_flag("--early-stopping", tw.early_stopping,
                           "early stop on val Recall@20");
  train_warm_cmd->add_option("--val", tw.val, "warm_val.tsv");
  train_warm_cmd->add_option("--patience", tw.patience, "early stop patience");
  train_warm_cmd->add_option("--out", tw.out, "output directory")->required();

  TrainColdArgs tc;
  CLI::App* train_cold_cmd =
      app.add_subcommand("train-cold", "fit the content encoder");
  train_cold_cmd->add_option("--features", tc.features, "feature file")
      ->required();
  train_cold_cmd->add_option("--warm-items", tc.warm_items, "warm_items.csv");
  train_cold_cmd->add_option("--warm-emb", tc.warm_emb, "warm_items.emb")
      ->required();
  train_cold_cmd->add_option("--mode", tc.mode, "ridge or mlp");
  train_cold_cmd->add_option("--lambda", tc.lambda, "ridge lambda");
  train_cold_cmd->add_option("--hidden-dim", tc.mlp.hidden_dim, "mlp hidden");
  train_cold_cmd->add_option("--lr", tc.mlp.learning_rate, "mlp lr");
  train_cold_cmd->add_option("--epochs", tc.mlp.epochs, "mlp epochs");
  train_cold_cmd->add_option("--seed", tc.mlp.seed, "mlp seed");
  train_cold_cmd->add_option("--out", tc.out, "output directory")->required();

  InferColdArgs ic;
  CLI::App* infer_cmd =
      app.add_subcommand("infer-cold", "generate cold embeddings");
  infer_cmd->add_option("--encoder-dir", ic.encoder_dir, "train-cold output")
      ->required();
  infer_cmd->add_option("--features", ic.features, "feature file")->required();
  infer_cmd->add_option("--items", ic.items, "item subset csv");
  infer_cmd->add_option("--out", ic.out, "output .emb path")->required();

  RankArgs rank;
  CLI::App* rank_cmd = app.add_subcommand("rank", "batch top-k scoring");
  rank_cmd->add_option("--user-emb", rank.user_emb, "user EMB1")->required();
  rank_cmd->add_option("--item-emb", rank.item_emb, "item EMB1")->required();
  rank_cmd->add_option("--users", rank.users_file, "user subset csv");
  rank_cmd->add_option("--exclude", rank.exclude, "per-user exclusion tsv");
  rank_cmd->add_option("--k", rank.k, "cutoff");
  rank_cmd->add_option("--threads", rank.threads, "worker threads");
  rank_cmd->add_option("--out", rank.out, "output directory")->required();

  ScaleArgs scale;
  CLI::App* scale_cmd =
      app.add_subcommand("scale", "magnitude-scaling post-processor");
  scale_cmd->add_option("--in", scale.in, "cold EMB1")->required();
  scale_cmd->add_option("--warm-emb", scale.warm_emb, "warm EMB1 for mu_w");
  scale_cmd->add_option("--mu-w", scale.mu_w, "explicit mu_w");
  scale_cmd->add_option("--alpha", scale.alpha, "scaling strength")
      ->required();
  scale_cmd->add_option("--out", scale.out, "output .emb path")->required();

  EvaluateArgs ev;
  CLI::App* eval_cmd = app.add_subcommand("evaluate", "rank and score metrics");
  eval_cmd->add_option("--user-emb", ev.user_emb, "user EMB1")->required();
  eval_cmd->add_option("--item-emb", ev.item_emb, "pool item EMB1")->required();
  eval_cmd->add_option("--holdout", ev.holdout, "holdout tsv (pool-local)")
      ->required();
  eval_cmd->add_option("--k", ev.k_list, "cutoffs");
  eval_cmd->add_option("--threads", ev.threads, "worker threads");
  eval_cmd->add_option("--model", ev.model, "model tag for the report");
  eval_cmd->add_option("--alpha", ev.alpha, "alpha tag for the report");
  eval_cmd->add_option("--seed", ev.seed, "seed tag for the report");
  eval_cmd->add_option("--out", ev.out, "output directory")->required();

  AnalyzeArgs an;
  CLI::App* analyze_cmd =
      app.add_subcommand("analyze", "bias diagnostic tables");
  analyze_cmd->add_option("--counts", an.counts, "counts.csv")->required();
  analyze_cmd->add_option("--holdout", an.holdout, "holdout tsv (fig1)");
  analyze_cmd->add_option("--features", an.features, "feature file (fig2)");
  analyze_cmd->add_option("--warm-items", an.warm_items, "warm_items.csv");
  analyze_cmd->add_option("--warm-train", an.warm_train, "warm_train.tsv");
  analyze_cmd->add_option("--item-emb", an.item_emb, "cold EMB1 (fig3)");
  analyze_cmd->add_option("--top-n", an.top_n, "concentration top n");
  analyze_cmd->add_option("--k", an.k, "ranking cutoff used for the counts");
  analyze_cmd->add_option("--num-users", an.num_users, "evaluated user count");
  analyze_cmd->add_option("--neighbors", an.n_neighbors, "fig2 neighbors");
  analyze_cmd->add_option("--out", an.out, "output directory")->required();

  std::string pipeline_config, pipeline_out;
  std::optional<std::uint64_t> pipeline_seed;
  std::optional<int> pipeline_threads;
  std::optional<Index> pipeline_runs;
  std::vector<Index> pipeline_k;
  std::optional<double> pipeline_alpha;
  CLI::App* pipeline_cmd =
      app.add_subcommand("pipeline", "run the full experiment");
  pipeline_cmd->add_option("--config", pipeline_config, "config json");
  pipeline_cmd->add_option("--out", pipeline_out, "output directory");
  pipeline_cmd->add_option("--seed", pipeline_seed, "base seed override");
  pipeline_cmd->add_option("--threads", pipeline_threads, "threads override");
  pipeline_cmd->add_option("--runs", pipeline_runs, "num_runs override");
  pipeline_cmd->add_option("--k", pipeline_k, "k list override");
  pipeline_cmd->add_option("--alpha", pipeline_alpha,
                           "replace the sweep with a single alpha");

  CompareArgs cmp;
  CLI::App* compare_cmd =
      app.add_subcommand("compare", "significance between two alpha settings");
  compare_cmd->add_option("--metrics", cmp.metrics, "metrics.csv")->required();
  compare_cmd->add_option("--model", cmp.model, "model tag");
  compare_cmd->add_option("--pool", cmp.pool, "val or test");
  compare_cmd->add_option("--k", cmp.k, "cutoff");
  compare_cmd->add_option("--base-alpha", cmp.base_alpha, "baseline alpha");
  compare_cmd->add_option("--treated-alpha", cmp.treated_alpha,
                          "treated alpha")
      ->required();
  compare_cmd->add_option("--out", cmp.out, "comparison csv path");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*generate) {
      run_generate(gen);
    } else if (*split_cmd) {
      run_split(split);
    } else if (*train_warm_cmd) {
      run_train_warm(tw);
    } else if (*train_cold_cmd) {
      run_train_cold(tc);
    } else if (*infer_cmd) {
      run_infer_cold(ic);
    } else if (*rank_cmd) {
      run_rank(rank);
    } else if (*scale_cmd) {
      run_scale(scale);
    } else if (*eval_cmd) {
      run_evaluate(ev);
    } else if (*analyze_cmd) {
      run_analyze(an);
    } else if (*pipeline_cmd) {
      ExperimentConfig cfg;
      if (!pipeline_config.empty()) cfg = ExperimentConfig::load(pipeline_config);
      if (!pipeline_out.empty()) cfg.out_dir = pipeline_out;
      if (pipeline_seed) cfg.seed = *pipeline_seed;
      if (pipeline_threads) cfg.threads = *pipeline_threads;
      if (pipeline_runs) cfg.num_runs = *pipeline_runs;
      if (!pipeline_k.empty()) cfg.k_list = pipeline_k;
      if (pipeline_alpha) cfg.alpha_sweep = {*pipeline_alpha};
      const PipelineResult result = run_pipeline(cfg);
      for (const RunArtifacts& art : result.runs) {
        std::printf("run %u (seed %llu): selected alpha %g, warm spearman "
                    "%.3f, cold spearman %.3f\n",
                    art.run, static_cast<unsigned long long>(art.seed),
                    art.selected_alpha,
                    art.warm_magnitude_popularity_spearman,
                    art.cold_magnitude_count_spearman);
      }
      if (!cfg.out_dir.empty()) {
        std::printf("reports written to %s\n", cfg.out_dir.c_str());
      }
    } else if (*compare_cmd) {
      run_compare(cmp);
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 3;
  } catch (const NumericError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
