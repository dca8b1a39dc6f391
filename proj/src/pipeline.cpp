#include "coldrec/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numeric>
#include <sstream>

#include "json.hpp"

#include "coldrec/data.hpp"
#include "coldrec/errors.hpp"
#include "coldrec/io.hpp"
#include "coldrec/mitigate.hpp"
#include "coldrec/ranking.hpp"

namespace coldrec {

using nlohmann::json;

namespace {

std::string fmt(const char* spec, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), spec, v);
  return buf;
}

Mat select_rows(const Mat& m, std::span<const Index> rows) {
  Mat out(rows.size(), m.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    std::copy_n(m[rows[i]], m.cols(), out[i]);
  }
  return out;
}

json synthetic_to_json(const SyntheticConfig& s) {
  return json{{"num_users", s.num_users},
              {"num_items", s.num_items},
              {"latent_dim", s.latent_dim},
              {"feature_dim", s.feature_dim},
              {"zipf_exponent", s.zipf_exponent},
              {"popularity_weight", s.popularity_weight},
              {"feature_noise", s.feature_noise},
              {"trend_noise", s.trend_noise},
              {"interactions_per_user", s.interactions_per_user}};
}

SyntheticConfig synthetic_from_json(const json& j) {
  SyntheticConfig s;
  s.num_users = j.value("num_users", s.num_users);
  s.num_items = j.value("num_items", s.num_items);
  s.latent_dim = j.value("latent_dim", s.latent_dim);
  s.feature_dim = j.value("feature_dim", s.feature_dim);
  s.zipf_exponent = j.value("zipf_exponent", s.zipf_exponent);
  s.popularity_weight = j.value("popularity_weight", s.popularity_weight);
  s.feature_noise = j.value("feature_noise", s.feature_noise);
  s.trend_noise = j.value("trend_noise", s.trend_noise);
  s.interactions_per_user =
      j.value("interactions_per_user", s.interactions_per_user);
  return s;
}

}  // namespace

void ExperimentConfig::validate() const {
  const bool file_mode = !interactions_path.empty();
  if (file_mode && synthetic.has_value()) {
    throw ConfigError("choose either synthetic data or interaction files");
  }
  if (!file_mode && !synthetic.has_value()) {
    throw ConfigError("no data source configured");
  }
  if (file_mode && feature_mode_paths.empty()) {
    throw ConfigError("file data requires at least one feature mode");
  }
  if (!(warm_frac > 0.0 && warm_frac < 1.0)) {
    throw ConfigError("warm_frac must be in (0,1)");
  }
  if (!(train_frac > 0.0 && val_frac > 0.0 && train_frac + val_frac < 1.0)) {
    throw ConfigError("train/val fractions invalid");
  }
  if (num_runs == 0) throw ConfigError("num_runs must be >= 1");
  if (threads < 1) throw ConfigError("threads must be >= 1");
  if (cold_mode != "ridge" && cold_mode != "mlp") {
    throw ConfigError("cold mode must be ridge or mlp");
  }
  if (ridge_lambda < 0.0) throw ConfigError("ridge_lambda must be >= 0");
  if (mu_w_source != "pretrained" && mu_w_source != "generated") {
    throw ConfigError("mu_w_source must be pretrained or generated");
  }
  if (k_list.empty()) throw ConfigError("k list must be nonempty");
  for (Index k : k_list) {
    if (k == 0) throw ConfigError("k values must be >= 1");
  }
  for (double a : alpha_sweep) {
    if (!(a > 0.0)) throw ConfigError("alpha sweep values must be > 0");
  }
  if (alpha_budget < 0.0) throw ConfigError("alpha_budget must be >= 0");
}

std::string ExperimentConfig::to_json() const {
  json j;
  j["seed"] = seed;
  j["num_runs"] = num_runs;
  j["threads"] = threads;
  j["out"] = out_dir;
  json data;
  if (synthetic.has_value()) data["synthetic"] = synthetic_to_json(*synthetic);
  if (!interactions_path.empty()) data["interactions"] = interactions_path;
  if (!feature_mode_paths.empty()) data["feature_modes"] = feature_mode_paths;
  j["data"] = data;
  j["split"] = {{"warm_frac", warm_frac},
                {"train_frac", train_frac},
                {"val_frac", val_frac}};
  j["warm"] = {{"latent_dim", bpr.latent_dim},
               {"learning_rate", bpr.learning_rate},
               {"l2_lambda", bpr.l2_lambda},
               {"epochs", bpr.epochs},
               {"negatives_per_positive", bpr.negatives_per_positive},
               {"init_scale", bpr.init_scale},
               {"early_stopping", early_stopping},
               {"patience", patience}};
  j["cold"] = {{"mode", cold_mode},
               {"ridge_lambda", ridge_lambda},
               {"mlp",
                {{"hidden_dim", mlp.hidden_dim},
                 {"learning_rate", mlp.learning_rate},
                 {"epochs", mlp.epochs},
                 {"init_scale", mlp.init_scale}}}};
  if (knn.neighborhood == 0) {
    j["knn"] = {{"enabled", knn_baseline}, {"neighborhood", "all"}};
  } else {
    j["knn"] = {{"enabled", knn_baseline}, {"neighborhood", knn.neighborhood}};
  }
  j["eval"] = {{"k", k_list},
               {"alpha_sweep", alpha_sweep},
               {"alpha_budget", alpha_budget}};
  j["diagnostics"] = {{"pooled", pooled_diagnostics},
                      {"warm_as_cold", warm_as_cold_diagnostics},
                      {"mu_w_source", mu_w_source}};
  return j.dump(2) + "\n";
}

ExperimentConfig ExperimentConfig::from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config parse error: ") + e.what());
  }
  ExperimentConfig cfg;
  try {
    cfg.seed = j.value("seed", cfg.seed);
    cfg.num_runs = j.value("num_runs", cfg.num_runs);
    cfg.threads = j.value("threads", cfg.threads);
    cfg.out_dir = j.value("out", cfg.out_dir);
    if (j.contains("data")) {
      const json& d = j["data"];
      if (d.contains("interactions")) {
        cfg.interactions_path = d["interactions"].get<std::string>();
        cfg.synthetic.reset();
      }
      if (d.contains("feature_modes")) {
        cfg.feature_mode_paths =
            d["feature_modes"].get<std::vector<std::string>>();
      }
      if (d.contains("synthetic")) {
        cfg.synthetic = synthetic_from_json(d["synthetic"]);
      }
    }
    if (j.contains("split")) {
      const json& s = j["split"];
      cfg.warm_frac = s.value("warm_frac", cfg.warm_frac);
      cfg.train_frac = s.value("train_frac", cfg.train_frac);
      cfg.val_frac = s.value("val_frac", cfg.val_frac);
    }
    if (j.contains("warm")) {
      const json& w = j["warm"];
      cfg.bpr.latent_dim = w.value("latent_dim", cfg.bpr.latent_dim);
      cfg.bpr.learning_rate = w.value("learning_rate", cfg.bpr.learning_rate);
      cfg.bpr.l2_lambda = w.value("l2_lambda", cfg.bpr.l2_lambda);
      cfg.bpr.epochs = w.value("epochs", cfg.bpr.epochs);
      cfg.bpr.negatives_per_positive =
          w.value("negatives_per_positive", cfg.bpr.negatives_per_positive);
      cfg.bpr.init_scale = w.value("init_scale", cfg.bpr.init_scale);
      cfg.early_stopping = w.value("early_stopping", cfg.early_stopping);
      cfg.patience = w.value("patience", cfg.patience);
    }
    if (j.contains("cold")) {
      const json& c = j["cold"];
      cfg.cold_mode = c.value("mode", cfg.cold_mode);
      cfg.ridge_lambda = c.value("ridge_lambda", cfg.ridge_lambda);
      if (c.contains("mlp")) {
        const json& m = c["mlp"];
        cfg.mlp.hidden_dim = m.value("hidden_dim", cfg.mlp.hidden_dim);
        cfg.mlp.learning_rate = m.value("learning_rate", cfg.mlp.learning_rate);
        cfg.mlp.epochs = m.value("epochs", cfg.mlp.epochs);
        cfg.mlp.init_scale = m.value("init_scale", cfg.mlp.init_scale);
      }
    }
    if (j.contains("knn")) {
      const json& k = j["knn"];
      cfg.knn_baseline = k.value("enabled", cfg.knn_baseline);
      if (k.contains("neighborhood")) {
        if (k["neighborhood"].is_string()) {
          if (k["neighborhood"].get<std::string>() != "all") {
            throw ConfigError("knn.neighborhood must be \"all\" or a count");
          }
          cfg.knn.neighborhood = 0;
        } else {
          cfg.knn.neighborhood = k["neighborhood"].get<Index>();
          if (cfg.knn.neighborhood == 0) {
            throw ConfigError("knn.neighborhood count must be >= 1");
          }
        }
      }
    }
    if (j.contains("eval")) {
      const json& e = j["eval"];
      if (e.contains("k")) cfg.k_list = e["k"].get<std::vector<Index>>();
      if (e.contains("alpha_sweep")) {
        cfg.alpha_sweep = e["alpha_sweep"].get<std::vector<double>>();
      }
      cfg.alpha_budget = e.value("alpha_budget", cfg.alpha_budget);
    }
    if (j.contains("diagnostics")) {
      const json& d = j["diagnostics"];
      cfg.pooled_diagnostics = d.value("pooled", cfg.pooled_diagnostics);
      cfg.warm_as_cold_diagnostics =
          d.value("warm_as_cold", cfg.warm_as_cold_diagnostics);
      cfg.mu_w_source = d.value("mu_w_source", cfg.mu_w_source);
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config field error: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

ExperimentConfig ExperimentConfig::load(const std::string& path) {
  try {
    return from_json(read_text_file(path));
  } catch (const DataError& e) {
    throw ConfigError(e.what());
  }
}

double select_alpha(const std::vector<MetricReport>& val_reports,
                    double user_acc_budget) {
  const MetricReport* base = nullptr;
  for (const MetricReport& r : val_reports) {
    if (r.alpha == 0.0) base = &r;
  }
  if (base == nullptr) {
    throw ConfigError("select_alpha: missing alpha=0 report");
  }
  const double ndcg0 = base->values.at("ndcg");
  const double floor = (1.0 - user_acc_budget) * ndcg0;
  double best_alpha = 0.0, best_min80 = -1.0;
  bool any = false;
  std::vector<const MetricReport*> sorted;
  for (const MetricReport& r : val_reports) sorted.push_back(&r);
  std::sort(sorted.begin(), sorted.end(),
            [](const MetricReport* a, const MetricReport* b) {
              return a->alpha < b->alpha;
            });
  for (const MetricReport* r : sorted) {
    if (r->values.at("ndcg") < floor) continue;
    const double min80 = r->values.at("mdg_min80");
    if (!any || min80 > best_min80) {  // ties keep the smaller alpha
      best_alpha = r->alpha;
      best_min80 = min80;
      any = true;
    }
  }
  if (!any) {
    std::cerr << "warning: no alpha within the accuracy budget, keeping 0\n";
    return 0.0;
  }
  return best_alpha;
}

std::vector<ComparisonRow> compare_runs(const std::vector<MetricReport>& base,
                                        const std::vector<MetricReport>& treated,
                                        double p_threshold, double change_frac) {
  if (base.size() != treated.size()) {
    throw ConfigError("compare_runs: run counts differ");
  }
  if (base.size() < 2) {
    throw DataError("compare_runs: insufficient sample (need >= 2 runs)");
  }
  for (std::size_t i = 0; i < base.size(); ++i) {
    if (base[i].values.size() != treated[i].values.size()) {
      throw ConfigError("compare_runs: metric sets differ");
    }
  }
  std::vector<ComparisonRow> rows;
  for (const auto& [metric, unused] : base.front().values) {
    (void)unused;
    std::vector<double> a, b;
    for (const MetricReport& r : base) {
      const auto it = r.values.find(metric);
      if (it == r.values.end()) {
        throw ConfigError("compare_runs: metric sets differ");
      }
      a.push_back(it->second);
    }
    for (const MetricReport& r : treated) {
      const auto it = r.values.find(metric);
      if (it == r.values.end()) {
        throw ConfigError("compare_runs: metric sets differ");
      }
      b.push_back(it->second);
    }
    const WelchResult w = welch_t_test(b, a);  // treated vs base
    ComparisonRow row;
    row.metric = metric;
    row.mean_base = std::accumulate(a.begin(), a.end(), 0.0) / a.size();
    row.mean_treated = std::accumulate(b.begin(), b.end(), 0.0) / b.size();
    row.delta = row.mean_treated - row.mean_base;
    row.p_value = w.p;
    row.significant_gain = w.p < p_threshold && row.delta > 0.0;
    row.significant_loss = w.p < p_threshold && row.delta < 0.0;
    row.large_change = row.mean_base == 0.0
                           ? row.delta != 0.0
                           : std::fabs(row.delta) >=
                                 change_frac * std::fabs(row.mean_base);
    rows.push_back(row);
  }
  return rows;
}

namespace {

const char* kMetricNames[] = {"ndcg",     "recall",  "mdg_min80",
                              "mdg_max5", "mdg_all", "gini_div"};

}  // namespace

PoolEvaluation evaluate_ranking(const RankingLog& log,
                                const std::vector<std::vector<Index>>& relevant,
                                std::span<const Index> k_list,
                                Index pool_size) {
  PoolEvaluation eval;
  // 1-based rank of each listed item, per user.
  std::vector<std::vector<std::pair<Index, Index>>> positions(log.users.size());
  for (std::size_t u = 0; u < log.users.size(); ++u) {
    positions[u].reserve(log.topk[u].size());
    for (std::size_t r = 0; r < log.topk[u].size(); ++r) {
      positions[u].emplace_back(log.topk[u][r].item,
                                static_cast<Index>(r + 1));
    }
    std::sort(positions[u].begin(), positions[u].end());
  }
  auto rank_of = [&positions, &log](std::size_t u, Index item) -> Index {
    const auto& v = positions[u];
    const auto it = std::lower_bound(
        v.begin(), v.end(), std::make_pair(item, Index{0}),
        [](const auto& a, const auto& b) { return a.first < b.first; });
    if (it != v.end() && it->first == item) return it->second;
    return log.k + 1;  // beyond every cutoff
  };

  std::vector<std::vector<Index>> item_ranks(pool_size);
  for (std::size_t u = 0; u < log.users.size(); ++u) {
    for (Index item : relevant[u]) {
      item_ranks[item].push_back(rank_of(u, item));
    }
  }

  for (Index k : k_list) {
    MetricReport report;
    report.k = k;
    double ndcg_sum = 0.0, recall_sum = 0.0;
    for (std::size_t u = 0; u < log.users.size(); ++u) {
      std::vector<Index> ranked;
      const std::size_t take = std::min<std::size_t>(k, log.topk[u].size());
      ranked.reserve(take);
      for (std::size_t r = 0; r < take; ++r) {
        ranked.push_back(log.topk[u][r].item);
      }
      ndcg_sum += ndcg_at_k(ranked, relevant[u], k);
      recall_sum += recall_at_k(ranked, relevant[u], k);
    }
    report.evaluated_users = static_cast<Index>(log.users.size());
    report.values["ndcg"] = ndcg_sum / double(log.users.size());
    report.values["recall"] = recall_sum / double(log.users.size());

    ItemMdgTable mdg_table;
    for (Index item = 0; item < pool_size; ++item) {
      if (item_ranks[item].empty()) continue;
      mdg_table.push_back({item,
                           static_cast<Index>(item_ranks[item].size()),
                           mdg_at_k(item_ranks[item], k)});
    }
    report.evaluated_items = static_cast<Index>(mdg_table.size());
    const MdgAggregates agg = mdg_aggregates(mdg_table);
    report.values["mdg_min80"] = agg.min80;
    report.values["mdg_max5"] = agg.max5;
    report.values["mdg_all"] = agg.all;

    PredictionCounts counts = prediction_counts(log, k);
    report.values["gini_div"] = gini_diversity(counts.counts);

    eval.by_k.emplace(k, std::move(report));
    eval.counts_by_k.emplace(k, std::move(counts));
    eval.mdg_by_k.emplace(k, std::move(mdg_table));
  }
  return eval;
}

namespace {

std::uint64_t stage_seed(std::uint64_t run_seed, std::uint64_t stage) {
  return run_seed * 1000003ULL + stage;
}

// Diagnostics retained from the first run for figure emission.
struct DiagnosticsData {
  std::vector<Index> pool_items;  // global ids, cold test pool
  Mat generated;                  // alpha = 0 embeddings
  std::map<double, PredictionCounts> counts20;  // global ids, k=20
  std::map<double, ItemMdgTable> mdg20;         // pool-local ids
  std::vector<Index> warm_items;
  std::vector<Index> warm_popularity;  // aligned with warm_items
  Mat features;                        // full content matrix
  InteractionTable cold_test_holdout;  // global index space
  // Optional extra panels.
  std::optional<std::vector<Fig1Row>> warm_as_cold_fig1;
  std::optional<std::vector<Fig1Row>> pooled_fig1;
};

struct RunOutput {
  RunArtifacts artifacts;
  std::optional<DiagnosticsData> diagnostics;
};

PredictionCounts globalize(const PredictionCounts& local,
                           std::span<const Index> pool_items) {
  PredictionCounts out;
  out.pool.assign(pool_items.begin(), pool_items.end());
  out.counts = local.counts;
  return out;
}

double safe_spearman(std::span<const double> xs, std::span<const double> ys) {
  try {
    return spearman(xs, ys);
  } catch (const DataError&) {
    return 0.0;  // a constant series carries no ordering signal
  }
}

std::vector<double> evaluated_alphas(const ExperimentConfig& cfg) {
  std::vector<double> alphas = cfg.alpha_sweep;
  alphas.push_back(0.0);
  std::sort(alphas.begin(), alphas.end());
  alphas.erase(std::unique(alphas.begin(), alphas.end()), alphas.end());
  return alphas;
}

RunOutput execute_run(const ExperimentConfig& cfg, Index run,
                      const InteractionTable* file_table,
                      const Mat* file_features, const char** stage_name) {
  RunOutput out;
  RunArtifacts& art = out.artifacts;
  art.run = run;
  art.seed = cfg.seed + run;

  *stage_name = "data";
  InteractionTable table;
  Mat features;
  if (cfg.synthetic.has_value()) {
    SyntheticConfig synth = *cfg.synthetic;
    synth.seed = stage_seed(art.seed, 0);
    SyntheticData data = generate_synthetic(synth);
    table = std::move(data.interactions);
    features = std::move(data.features);
  } else {
    table = *file_table;
    features = *file_features;
  }

  *stage_name = "split";
  const DatasetSplits splits =
      split_dataset(table, features, cfg.warm_frac, cfg.train_frac,
                    cfg.val_frac, stage_seed(art.seed, 1));

  *stage_name = "train-warm";
  const InteractionTable warm_local =
      reindex_items(splits.warm_train, splits.warm_items);
  BprConfig bpr = cfg.bpr;
  bpr.seed = stage_seed(art.seed, 2);
  FactorModel model;
  if (cfg.early_stopping) {
    const InteractionTable val_local =
        reindex_items(splits.warm_val, splits.warm_items);
    model = train_warm_early_stopped(warm_local, val_local, bpr, cfg.patience);
  } else {
    model = train_warm(warm_local, bpr);
  }
  {
    std::vector<double> mags, pops;
    for (std::size_t r = 0; r < model.item_embeddings.rows(); ++r) {
      mags.push_back(l2_norm(model.item_embeddings.row(r)));
      pops.push_back(double(warm_local.popularity[r]));
    }
    art.warm_magnitude_popularity_spearman = safe_spearman(mags, pops);
  }

  *stage_name = "train-cold";
  const Mat warm_features = select_rows(features, splits.warm_items);
  ColdEncoder encoder;
  if (cfg.cold_mode == "mlp") {
    MlpConfig mlp = cfg.mlp;
    mlp.seed = stage_seed(art.seed, 3);
    encoder = fit_encoder_mlp(warm_features, model.item_embeddings, mlp);
  } else {
    encoder = fit_encoder(warm_features, model.item_embeddings,
                          cfg.ridge_lambda);
  }
  const double mu_w =
      cfg.mu_w_source == "generated"
          ? warm_mean_magnitude(generate_cold(encoder, warm_features))
          : warm_mean_magnitude(model.item_embeddings);

  const auto train_by_user = items_by_user(splits.warm_train);
  const Index k_max = *std::max_element(cfg.k_list.begin(), cfg.k_list.end());
  const std::vector<double> alphas = evaluated_alphas(cfg);

  // Row-normalized content matrix for the KNN baseline.
  Mat features_hat;
  if (cfg.knn_baseline) {
    features_hat = features;
    for (std::size_t r = 0; r < features_hat.rows(); ++r) {
      const double norm = l2_norm(features_hat.row(r));
      if (norm > 0.0) {
        for (double& v : features_hat.row(r)) v /= norm;
      }
    }
  }

  const bool keep_diagnostics = run == 0;
  if (keep_diagnostics) {
    DiagnosticsData diag;
    diag.warm_items = splits.warm_items;
    diag.warm_popularity.reserve(splits.warm_items.size());
    for (Index item : splits.warm_items) {
      diag.warm_popularity.push_back(splits.warm_train.popularity[item]);
    }
    diag.features = features;
    diag.cold_test_holdout = splits.cold_test;
    out.diagnostics = std::move(diag);
  }

  *stage_name = "rank-evaluate";
  struct PoolSpec {
    const char* name;
    const std::vector<Index>* items;
    const InteractionTable* holdout;
  };
  const PoolSpec pools[] = {
      {"val", &splits.cold_val_items, &splits.cold_val},
      {"test", &splits.cold_test_items, &splits.cold_test}};

  for (const PoolSpec& pool : pools) {
    const std::vector<Index>& pool_items = *pool.items;
    const Mat pool_features = select_rows(features, pool_items);
    const Mat generated = generate_cold(encoder, pool_features);
    const InteractionTable holdout_local =
        reindex_items(*pool.holdout, pool_items);

    const auto holdout_by_user = items_by_user(holdout_local);
    std::vector<Index> users;
    std::vector<std::vector<Index>> relevant;
    for (Index u = 0; u < holdout_local.num_users; ++u) {
      if (holdout_by_user[u].empty() || train_by_user[u].empty()) continue;
      users.push_back(u);
      relevant.push_back(holdout_by_user[u]);
    }
    if (users.empty()) {
      throw DataError(std::string("no evaluable users for cold pool ") +
                      pool.name);
    }
    std::vector<Index> local_pool(pool_items.size());
    std::iota(local_pool.begin(), local_pool.end(), 0u);

    const bool is_test = std::string(pool.name) == "test";
    for (const double alpha : alphas) {
      const Mat scaled = scale_embeddings(generated, mu_w, alpha);
      const RankingLog log =
          rank_topk(model.user_embeddings, scaled, local_pool, users, k_max,
                    {}, cfg.threads);
      PoolEvaluation eval = evaluate_ranking(log, relevant, cfg.k_list,
                                         static_cast<Index>(pool_items.size()));
      for (Index k : cfg.k_list) {
        MetricRow row;
        row.model = "coldgen";
        row.pool = pool.name;
        row.alpha = alpha;
        row.k = k;
        row.run = run;
        row.seed = art.seed;
        row.report = eval.by_k.at(k);
        row.report.model = "coldgen";
        row.report.alpha = alpha;
        row.report.seed = art.seed;
        art.rows.push_back(std::move(row));
      }
      const auto it20 = eval.counts_by_k.find(20);
      if (is_test && it20 != eval.counts_by_k.end()) {
        const PredictionCounts counts20 = globalize(it20->second, pool_items);
        const Index top_n =
            std::min<Index>(50, static_cast<Index>(counts20.pool.size()));
        art.test_concentration[alpha] = concentration(
            counts20, top_n, 20, static_cast<Index>(users.size()));
        if (alpha == 0.0) {
          std::vector<double> mags, cnts;
          for (std::size_t r = 0; r < generated.rows(); ++r) {
            mags.push_back(l2_norm(generated.row(r)));
            cnts.push_back(double(counts20.counts[r]));
          }
          art.cold_magnitude_count_spearman = safe_spearman(mags, cnts);
        }
        if (out.diagnostics.has_value()) {
          out.diagnostics->counts20.emplace(alpha, counts20);
          out.diagnostics->mdg20.emplace(alpha, eval.mdg_by_k.at(20));
        }
      }
      if (is_test && alpha == 0.0 && out.diagnostics.has_value()) {
        out.diagnostics->pool_items = pool_items;
        out.diagnostics->generated = generated;
      }
    }

    if (cfg.knn_baseline) {
      RankingLog log;
      log.k = k_max;
      log.pool = local_pool;
      log.users = users;
      log.topk.resize(users.size());
      std::vector<double> scores(pool_items.size());
      for (std::size_t ui = 0; ui < users.size(); ++ui) {
        const Index u = users[ui];
        if (cfg.knn.neighborhood == 0) {
          std::vector<double> profile(features_hat.cols(), 0.0);
          for (Index item : train_by_user[u]) {
            const auto f = features_hat.row(item);
            for (std::size_t c = 0; c < f.size(); ++c) profile[c] += f[c];
          }
          for (std::size_t p = 0; p < pool_items.size(); ++p) {
            scores[p] = dot(profile, features_hat.row(pool_items[p]));
          }
        } else {
          scores = knn_scores(train_by_user[u], features, pool_items, cfg.knn);
        }
        std::vector<RankedItem> cand;
        cand.reserve(pool_items.size());
        for (std::size_t p = 0; p < pool_items.size(); ++p) {
          cand.push_back({static_cast<Index>(p), scores[p]});
        }
        const std::size_t take = std::min<std::size_t>(k_max, cand.size());
        std::partial_sort(cand.begin(), cand.begin() + take, cand.end(),
                          [](const RankedItem& a, const RankedItem& b) {
                            if (a.score != b.score) return a.score > b.score;
                            return a.item < b.item;
                          });
        cand.resize(take);
        log.topk[ui] = std::move(cand);
      }
      PoolEvaluation eval = evaluate_ranking(log, relevant, cfg.k_list,
                                         static_cast<Index>(pool_items.size()));
      for (Index k : cfg.k_list) {
        MetricRow row;
        row.model = "knn";
        row.pool = pool.name;
        row.alpha = 0.0;
        row.k = k;
        row.run = run;
        row.seed = art.seed;
        row.report = eval.by_k.at(k);
        row.report.model = "knn";
        row.report.seed = art.seed;
        art.rows.push_back(std::move(row));
      }
    }
  }

  *stage_name = "select-alpha";
  // Selection happens at k=20 when evaluated, otherwise at the smallest k.
  Index select_k = *std::min_element(cfg.k_list.begin(), cfg.k_list.end());
  if (std::find(cfg.k_list.begin(), cfg.k_list.end(), Index{20}) !=
      cfg.k_list.end()) {
    select_k = 20;
  }
  std::vector<MetricReport> val_reports;
  for (const MetricRow& row : art.rows) {
    if (row.model == "coldgen" && row.pool == "val" && row.k == select_k) {
      val_reports.push_back(row.report);
    }
  }
  art.selected_alpha = select_alpha(val_reports, cfg.alpha_budget);

  // Optional extra diagnostics panels.
  if (out.diagnostics.has_value() && cfg.warm_as_cold_diagnostics) {
    *stage_name = "warm-as-cold";
    const Mat gen_warm = generate_cold(encoder, warm_features);
    const InteractionTable warm_test_local =
        reindex_items(splits.warm_test, splits.warm_items);
    const auto holdout_by_user = items_by_user(warm_test_local);
    std::vector<Index> users;
    for (Index u = 0; u < warm_test_local.num_users; ++u) {
      if (!holdout_by_user[u].empty() && !train_by_user[u].empty()) {
        users.push_back(u);
      }
    }
    if (!users.empty()) {
      std::vector<Index> local_pool(splits.warm_items.size());
      std::iota(local_pool.begin(), local_pool.end(), 0u);
      const RankingLog log =
          rank_topk(model.user_embeddings, gen_warm, local_pool, users, 20, {},
                    cfg.threads);
      out.diagnostics->warm_as_cold_fig1 = fig1_table(
          globalize(prediction_counts(log), splits.warm_items),
          splits.warm_test);
    }
  }
  if (out.diagnostics.has_value() && cfg.pooled_diagnostics) {
    *stage_name = "pooled-diagnostics";
    std::vector<Index> pooled = splits.cold_val_items;
    pooled.insert(pooled.end(), splits.cold_test_items.begin(),
                  splits.cold_test_items.end());
    std::sort(pooled.begin(), pooled.end());
    InteractionTable holdout = splits.cold_val;
    holdout.pairs.insert(holdout.pairs.end(), splits.cold_test.pairs.begin(),
                         splits.cold_test.pairs.end());
    holdout.recount_popularity();
    const Mat gen = generate_cold(encoder, select_rows(features, pooled));
    const InteractionTable holdout_local = reindex_items(holdout, pooled);
    const auto holdout_by_user = items_by_user(holdout_local);
    std::vector<Index> users;
    for (Index u = 0; u < holdout_local.num_users; ++u) {
      if (!holdout_by_user[u].empty() && !train_by_user[u].empty()) {
        users.push_back(u);
      }
    }
    if (!users.empty()) {
      std::vector<Index> local_pool(pooled.size());
      std::iota(local_pool.begin(), local_pool.end(), 0u);
      const RankingLog log = rank_topk(model.user_embeddings, gen, local_pool,
                                       users, 20, {}, cfg.threads);
      out.diagnostics->pooled_fig1 =
          fig1_table(globalize(prediction_counts(log), pooled), holdout);
    }
  }

  // Model files for this run.
  if (!cfg.out_dir.empty()) {
    *stage_name = "persist";
    namespace fs = std::filesystem;
    const fs::path run_dir =
        fs::path(cfg.out_dir) / "runs" / ("run" + std::to_string(run));
    fs::create_directories(run_dir);
    json sidecar;
    sidecar["config"] = json::parse(cfg.to_json());
    sidecar["run"] = run;
    sidecar["seed"] = art.seed;
    auto emit = [&](const std::string& name, const Mat& m, json extra) {
      write_emb1((run_dir / (name + ".emb")).string(), m);
      json j = sidecar;
      if (extra.is_object()) j.update(extra);
      write_text_file((run_dir / (name + ".json")).string(), j.dump(2) + "\n");
    };
    emit("warm_users", model.user_embeddings, {});
    emit("warm_items", model.item_embeddings, {});
    if (encoder.kind == ColdEncoder::Kind::linear) {
      emit("encoder_w", encoder.w,
           {{"kind", "ridge"}, {"ridge_lambda", encoder.ridge_lambda}});
    } else {
      emit("encoder_w1", encoder.w1, {{"kind", "mlp"}});
      emit("encoder_w2", encoder.w2, {{"kind", "mlp"}});
    }
    const Mat gen_val =
        generate_cold(encoder, select_rows(features, splits.cold_val_items));
    const Mat gen_test =
        generate_cold(encoder, select_rows(features, splits.cold_test_items));
    emit("cold_val", gen_val, {{"alpha", 0.0}, {"mu_w", mu_w}});
    emit("cold_test", gen_test, {{"alpha", 0.0}, {"mu_w", mu_w}});
    emit("cold_test_scaled",
         scale_embeddings(gen_test, mu_w, art.selected_alpha),
         {{"alpha", art.selected_alpha}, {"mu_w", mu_w}});
  }
  return out;
}

}  // namespace

std::vector<AggregateRow> aggregate_rows(const std::vector<MetricRow>& rows) {
  std::map<std::tuple<std::string, std::string, double, Index>,
           std::vector<const MetricRow*>>
      groups;
  for (const MetricRow& row : rows) {
    groups[{row.pool, row.model, row.alpha, row.k}].push_back(&row);
  }
  std::vector<AggregateRow> aggregates;
  for (const auto& [key, members] : groups) {
    AggregateRow agg;
    agg.pool = std::get<0>(key);
    agg.model = std::get<1>(key);
    agg.alpha = std::get<2>(key);
    agg.k = std::get<3>(key);
    for (const char* metric : kMetricNames) {
      std::vector<double> vals;
      for (const MetricRow* row : members) {
        const auto it = row->report.values.find(metric);
        if (it != row->report.values.end()) vals.push_back(it->second);
      }
      if (vals.empty()) continue;
      const double mean =
          std::accumulate(vals.begin(), vals.end(), 0.0) / vals.size();
      double sq = 0.0;
      for (double v : vals) sq += (v - mean) * (v - mean);
      const double stdev =
          vals.size() > 1 ? std::sqrt(sq / double(vals.size() - 1)) : 0.0;
      agg.mean[metric] = mean;
      agg.stddev[metric] = stdev;
    }
    aggregates.push_back(std::move(agg));
  }
  return aggregates;
}

void write_metrics_csv(const std::string& path,
                       const std::vector<MetricRow>& rows,
                       const std::vector<AggregateRow>& aggregates) {
  std::vector<const MetricRow*> sorted;
  for (const MetricRow& r : rows) sorted.push_back(&r);
  std::sort(sorted.begin(), sorted.end(),
            [](const MetricRow* a, const MetricRow* b) {
              return std::tie(a->pool, a->model, a->alpha, a->k, a->run) <
                     std::tie(b->pool, b->model, b->alpha, b->k, b->run);
            });
  std::ostringstream out;
  out << "model,pool,alpha,k,run,seed,evaluated_users,evaluated_items";
  for (const char* m : kMetricNames) out << ',' << m;
  for (const char* m : kMetricNames) out << ',' << m << "_std";
  out << '\n';
  for (const MetricRow* r : sorted) {
    out << r->model << ',' << r->pool << ',' << fmt("%g", r->alpha) << ','
        << r->k << ',' << r->run << ',' << r->seed << ','
        << r->report.evaluated_users << ',' << r->report.evaluated_items;
    for (const char* m : kMetricNames) {
      const auto it = r->report.values.find(m);
      out << ',';
      if (it != r->report.values.end()) out << fmt("%.6f", it->second);
    }
    for (std::size_t i = 0; i < std::size(kMetricNames); ++i) out << ',';
    out << '\n';
  }
  for (const AggregateRow& agg : aggregates) {
    out << agg.model << ',' << agg.pool << ',' << fmt("%g", agg.alpha) << ','
        << agg.k << ",mean,,,";
    for (const char* m : kMetricNames) {
      const auto it = agg.mean.find(m);
      out << ',';
      if (it != agg.mean.end()) out << fmt("%.6f", it->second);
    }
    for (const char* m : kMetricNames) {
      const auto it = agg.stddev.find(m);
      out << ',';
      if (it != agg.stddev.end()) out << fmt("%.6f", it->second);
    }
    out << '\n';
  }
  write_text_file(path, out.str());
}

std::vector<MetricRow> read_metrics_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError(path + ": cannot open");
  std::string line;
  if (!std::getline(in, line)) throw DataError(path + ": empty metrics file");
  std::vector<MetricRow> rows;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, ',')) fields.push_back(field);
    if (!line.empty() && line.back() == ',') fields.emplace_back();
    if (fields.size() < 8 + 2 * std::size(kMetricNames)) {
      throw DataError(path + ": malformed line " + std::to_string(line_no));
    }
    if (fields[4] == "mean") continue;  // aggregate row
    MetricRow row;
    try {
      row.model = fields[0];
      row.pool = fields[1];
      row.alpha = std::stod(fields[2]);
      row.k = static_cast<Index>(std::stoul(fields[3]));
      row.run = static_cast<Index>(std::stoul(fields[4]));
      row.seed = std::stoull(fields[5]);
      row.report.evaluated_users = static_cast<Index>(std::stoul(fields[6]));
      row.report.evaluated_items = static_cast<Index>(std::stoul(fields[7]));
      for (std::size_t m = 0; m < std::size(kMetricNames); ++m) {
        const std::string& v = fields[8 + m];
        if (!v.empty()) row.report.values[kMetricNames[m]] = std::stod(v);
      }
    } catch (const std::exception&) {
      throw DataError(path + ": malformed line " + std::to_string(line_no));
    }
    row.report.model = row.model;
    row.report.alpha = row.alpha;
    row.report.k = row.k;
    row.report.seed = row.seed;
    rows.push_back(std::move(row));
  }
  return rows;
}

void write_comparison_csv(const std::string& path,
                          const std::vector<ComparisonRow>& rows) {
  std::ostringstream out;
  out << "metric,mean_base,mean_treated,delta,p_value,significant_gain,"
         "significant_loss,large_change\n";
  for (const ComparisonRow& r : rows) {
    out << r.metric << ',' << fmt("%.6f", r.mean_base) << ','
        << fmt("%.6f", r.mean_treated) << ',' << fmt("%.6f", r.delta) << ','
        << fmt("%.6g", r.p_value) << ',' << (r.significant_gain ? 1 : 0) << ','
        << (r.significant_loss ? 1 : 0) << ',' << (r.large_change ? 1 : 0)
        << '\n';
  }
  write_text_file(path, out.str());
}

PipelineResult run_pipeline(const ExperimentConfig& cfg) {
  cfg.validate();
  namespace fs = std::filesystem;

  const bool emit = !cfg.out_dir.empty();
  fs::path out_dir(cfg.out_dir);
  fs::path lock_path;
  if (emit) {
    fs::create_directories(out_dir);
    lock_path = out_dir / ".lock";
    std::FILE* lock = std::fopen(lock_path.string().c_str(), "wx");
    if (lock == nullptr) {
      throw ConfigError(cfg.out_dir +
                        ": output directory is locked by another pipeline");
    }
    std::fclose(lock);
    fs::remove(out_dir / "STALE");
  }

  // Load file-based data once; every run re-splits it.
  InteractionTable file_table;
  Mat file_features;
  const char* stage = "setup";
  PipelineResult result;
  try {
    if (!cfg.synthetic.has_value()) {
      stage = "data";
      file_table = load_interactions(cfg.interactions_path);
      std::vector<Mat> modes;
      for (const std::string& p : cfg.feature_mode_paths) {
        modes.push_back(read_feature_file(p));
      }
      file_features = build_features(modes);
      if (file_features.rows() != file_table.num_items) {
        throw DataError("feature rows do not match item count");
      }
    }

    std::optional<DiagnosticsData> diagnostics;
    double selected_alpha_run0 = 0.0;
    for (Index run = 0; run < cfg.num_runs; ++run) {
      RunOutput out = execute_run(cfg, run, &file_table, &file_features,
                                  &stage);
      if (run == 0) {
        diagnostics = std::move(out.diagnostics);
        selected_alpha_run0 = out.artifacts.selected_alpha;
      }
      result.runs.push_back(std::move(out.artifacts));
    }

    stage = "report";
    std::vector<MetricRow> all_rows;
    for (const RunArtifacts& art : result.runs) {
      all_rows.insert(all_rows.end(), art.rows.begin(), art.rows.end());
    }
    result.aggregates = aggregate_rows(all_rows);

    if (emit) {
      write_text_file((out_dir / "config.json").string(), cfg.to_json());
      write_metrics_csv((out_dir / "metrics.csv").string(), all_rows,
                        result.aggregates);
      json reports = json::array();
      for (const MetricRow& row : all_rows) {
        json r = json::parse(report_json(row.report));
        r["pool"] = row.pool;
        r["run"] = row.run;
        r["k"] = row.k;
        reports.push_back(std::move(r));
      }
      write_text_file((out_dir / "metrics.json").string(),
                      reports.dump(2) + "\n");

      json summary;
      summary["runs"] = json::array();
      for (const RunArtifacts& art : result.runs) {
        json run_j;
        run_j["run"] = art.run;
        run_j["seed"] = art.seed;
        run_j["selected_alpha"] = art.selected_alpha;
        run_j["warm_magnitude_popularity_spearman"] =
            art.warm_magnitude_popularity_spearman;
        run_j["cold_magnitude_count_spearman"] =
            art.cold_magnitude_count_spearman;
        run_j["test_concentration"] = json::array();
        for (const auto& [alpha, stats] : art.test_concentration) {
          run_j["test_concentration"].push_back(
              {{"alpha", alpha},
               {"top_n", stats.top_n},
               {"top_n_share", stats.top_n_share},
               {"zero_pred_items", stats.zero_pred_items}});
        }
        summary["runs"].push_back(std::move(run_j));
      }
      write_text_file((out_dir / "summary.json").string(),
                      summary.dump(2) + "\n");

      if (diagnostics.has_value()) {
        stage = "diagnostics";
        const DiagnosticsData& diag = *diagnostics;
        const fs::path diag_dir = out_dir / "diagnostics";
        fs::create_directories(diag_dir);
        const auto it0 = diag.counts20.find(0.0);
        if (it0 != diag.counts20.end()) {
          const PredictionCounts& counts0 = it0->second;
          write_fig1_csv((diag_dir / "fig1.csv").string(),
                         fig1_table(counts0, diag.cold_test_holdout));
          const std::vector<Index> subset = top_decile_by_count(counts0);
          const Index n_neighbors = std::min<Index>(
              10, static_cast<Index>(diag.warm_items.size()));
          write_fig2_csv(
              (diag_dir / "fig2.csv").string(),
              neighbor_popularity(subset, diag.features, diag.warm_items,
                                  diag.warm_popularity, n_neighbors),
              counts0);
          PredictionCounts local0 = counts0;
          local0.pool.resize(local0.counts.size());
          std::iota(local0.pool.begin(), local0.pool.end(), 0u);
          std::vector<Fig3Row> fig3 = fig3_table(local0, diag.generated);
          for (std::size_t i = 0; i < fig3.size(); ++i) {
            fig3[i].item = counts0.pool[i];
          }
          write_fig3_csv((diag_dir / "fig3.csv").string(), fig3);
        }
        json conc = json::array();
        for (const auto& [alpha, counts] : diag.counts20) {
          write_fig4_csv(
              (diag_dir / ("fig4_alpha" + fmt("%g", alpha) + ".csv")).string(),
              percentile_curve(counts));
          const auto& stats = result.runs.front().test_concentration.at(alpha);
          conc.push_back({{"alpha", alpha},
                          {"top_n", stats.top_n},
                          {"top_n_share", stats.top_n_share},
                          {"zero_pred_items", stats.zero_pred_items}});
        }
        write_text_file((diag_dir / "concentration.json").string(),
                        conc.dump(2) + "\n");
        auto write_mdg_for = [&](double alpha, const std::string& name) {
          const auto it = diag.mdg20.find(alpha);
          if (it == diag.mdg20.end()) return;
          ItemMdgTable global = it->second;
          for (ItemMdg& row : global) row.item = diag.pool_items[row.item];
          write_mdg_csv((diag_dir / name).string(), global);
        };
        write_mdg_for(0.0, "item_mdg_alpha0.csv");
        write_mdg_for(selected_alpha_run0, "item_mdg_selected.csv");
        if (diag.warm_as_cold_fig1.has_value()) {
          write_fig1_csv((diag_dir / "fig1_warm_as_cold.csv").string(),
                         *diag.warm_as_cold_fig1);
        }
        if (diag.pooled_fig1.has_value()) {
          write_fig1_csv((diag_dir / "fig1_pooled.csv").string(),
                         *diag.pooled_fig1);
        }
      }
    }
  } catch (const std::exception& e) {
    if (emit) {
      std::ofstream stale(out_dir / "STALE");
      stale << "failed stage: " << stage << "\n" << e.what() << "\n";
      stale.close();
      fs::remove(lock_path);
    }
    const std::string msg = std::string("stage ") + stage + ": " + e.what();
    if (dynamic_cast<const ConfigError*>(&e)) throw ConfigError(msg);
    if (dynamic_cast<const DataError*>(&e)) throw DataError(msg);
    if (dynamic_cast<const NumericError*>(&e)) throw NumericError(msg);
    throw std::runtime_error(msg);
  }
  if (emit) fs::remove(lock_path);
  return result;
}

}  // namespace coldrec
