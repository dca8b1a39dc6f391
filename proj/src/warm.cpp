#include "coldrec/warm.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "coldrec/data.hpp"
#include "coldrec/errors.hpp"
#include "coldrec/metrics.hpp"
#include "coldrec/ranking.hpp"

namespace coldrec {

namespace {

// log(1 + exp(-x)) without overflow for large |x|.
double softplus_neg(double x) {
  if (x > 0.0) return std::log1p(std::exp(-x));
  return -x + std::log1p(std::exp(x));
}

double sigmoid_neg(double x) {  // sigma(-x)
  if (x > 0.0) {
    const double e = std::exp(-x);
    return e / (1.0 + e);
  }
  return 1.0 / (1.0 + std::exp(x));
}

void validate_bpr_config(const BprConfig& cfg) {
  if (cfg.latent_dim == 0) throw ConfigError("latent_dim must be positive");
  if (!(cfg.learning_rate > 0.0)) {
    throw ConfigError("learning_rate must be positive");
  }
  if (cfg.l2_lambda < 0.0) throw ConfigError("l2_lambda must be >= 0");
  if (cfg.negatives_per_positive == 0) {
    throw ConfigError("negatives_per_positive must be positive");
  }
  if (!(cfg.init_scale > 0.0)) throw ConfigError("init_scale must be positive");
}

// Mean Recall@k on a holdout table, candidates = all items minus each user's
// training items.
double holdout_recall(const Mat& user_emb, const Mat& item_emb,
                      const std::vector<std::vector<Index>>& train_items,
                      const InteractionTable& holdout, Index k) {
  std::vector<std::vector<Index>> relevant(holdout.num_users);
  for (const auto& [u, i] : holdout.pairs) relevant[u].push_back(i);
  std::vector<Index> users;
  std::vector<std::vector<Index>> exclusions;
  for (Index u = 0; u < holdout.num_users; ++u) {
    if (relevant[u].empty() || train_items[u].empty()) continue;
    users.push_back(u);
    exclusions.push_back(train_items[u]);
  }
  if (users.empty()) return 0.0;
  std::vector<Index> pool(item_emb.rows());
  std::iota(pool.begin(), pool.end(), 0u);
  const RankingLog log =
      rank_topk(user_emb, item_emb, pool, users, k, exclusions);
  double sum = 0.0;
  for (std::size_t i = 0; i < users.size(); ++i) {
    std::vector<Index> ranked;
    ranked.reserve(log.topk[i].size());
    for (const RankedItem& r : log.topk[i]) ranked.push_back(r.item);
    sum += recall_at_k(ranked, relevant[users[i]], k);
  }
  return sum / double(users.size());
}

FactorModel train_impl(const InteractionTable& train, const BprConfig& cfg,
                       const InteractionTable* val, Index patience,
                       Index recall_k) {
  validate_bpr_config(cfg);
  if (train.pairs.empty()) throw DataError("empty training table");
  if (train.num_items == 0) throw DataError("no items to train on");

  const std::size_t d = cfg.latent_dim;
  const Index n_items = train.num_items;
  std::mt19937_64 rng(cfg.seed);
  std::normal_distribution<double> init(0.0, cfg.init_scale);

  FactorModel model;
  model.latent_dim = d;
  model.user_embeddings = Mat(train.num_users, d);
  model.item_embeddings = Mat(n_items, d);
  for (double& v : model.user_embeddings.values()) v = init(rng);
  for (double& v : model.item_embeddings.values()) v = init(rng);

  const auto positives = items_by_user(train);
  std::vector<std::size_t> order(train.pairs.size());
  std::iota(order.begin(), order.end(), 0u);
  std::uniform_int_distribution<Index> item_dist(0, n_items - 1);
  const double lr = cfg.learning_rate;
  const double lambda = cfg.l2_lambda;

  FactorModel best;
  double best_recall = -1.0;
  Index best_age = 0;

  for (Index epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    std::size_t step = 0;
    for (const std::size_t idx : order) {
      ++step;
      const auto [user, pos] = train.pairs[idx];
      if (positives[user].size() >= n_items) continue;  // nothing to sample
      for (Index t = 0; t < cfg.negatives_per_positive; ++t) {
        Index neg = item_dist(rng);
        while (std::binary_search(positives[user].begin(),
                                  positives[user].end(), neg)) {
          neg = item_dist(rng);
        }
        double* u = model.user_embeddings[user];
        double* p = model.item_embeddings[pos];
        double* n = model.item_embeddings[neg];
        double gap = 0.0;
        for (std::size_t f = 0; f < d; ++f) gap += u[f] * (p[f] - n[f]);
        if (!std::isfinite(gap)) {
          throw NumericError("bpr training diverged at epoch " +
                             std::to_string(epoch) + ", step " +
                             std::to_string(step));
        }
        const double g = sigmoid_neg(gap);
        for (std::size_t f = 0; f < d; ++f) {
          const double uf = u[f], pf = p[f], nf = n[f];
          u[f] += lr * (g * (pf - nf) - 2.0 * lambda * uf);
          p[f] += lr * (g * uf - 2.0 * lambda * pf);
          n[f] += lr * (-g * uf - 2.0 * lambda * nf);
        }
      }
    }
    if (val != nullptr) {
      const double recall =
          holdout_recall(model.user_embeddings, model.item_embeddings,
                         positives, *val, recall_k);
      if (recall > best_recall) {
        best_recall = recall;
        best = model;
        best_age = 0;
      } else if (++best_age >= patience) {
        return best;
      }
    }
  }
  if (val != nullptr && best_recall >= 0.0) return best;
  return model;
}

}  // namespace

double bpr_loss(double score_pos, double score_neg, double l2_term,
                double l2_lambda) {
  return softplus_neg(score_pos - score_neg) + l2_lambda * l2_term;
}

BprTripleGrad bpr_triple_gradient(std::span<const double> user,
                                  std::span<const double> pos,
                                  std::span<const double> neg,
                                  double l2_lambda) {
  const std::size_t d = user.size();
  double gap = 0.0;
  for (std::size_t f = 0; f < d; ++f) gap += user[f] * (pos[f] - neg[f]);
  const double g = sigmoid_neg(gap);
  BprTripleGrad grad;
  grad.d_user.resize(d);
  grad.d_pos.resize(d);
  grad.d_neg.resize(d);
  for (std::size_t f = 0; f < d; ++f) {
    grad.d_user[f] = -g * (pos[f] - neg[f]) + 2.0 * l2_lambda * user[f];
    grad.d_pos[f] = -g * user[f] + 2.0 * l2_lambda * pos[f];
    grad.d_neg[f] = g * user[f] + 2.0 * l2_lambda * neg[f];
  }
  return grad;
}

FactorModel train_warm(const InteractionTable& train, const BprConfig& cfg) {
  return train_impl(train, cfg, nullptr, 0, 0);
}

FactorModel train_warm_early_stopped(const InteractionTable& train,
                                     const InteractionTable& val,
                                     const BprConfig& cfg, Index patience,
                                     Index recall_k) {
  if (patience == 0) throw ConfigError("patience must be positive");
  return train_impl(train, cfg, &val, patience, recall_k);
}

std::vector<double> score_warm(const FactorModel& model, Index user,
                               std::span<const Index> items) {
  if (user >= model.user_embeddings.rows()) {
    throw DataError("user index out of range");
  }
  std::vector<double> scores;
  scores.reserve(items.size());
  for (Index item : items) {
    if (item >= model.item_embeddings.rows()) {
      throw DataError("item index out of range");
    }
    scores.push_back(
        dot(model.user_embeddings.row(user), model.item_embeddings.row(item)));
  }
  return scores;
}

}  // namespace coldrec
