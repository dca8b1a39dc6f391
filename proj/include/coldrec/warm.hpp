#pragma once

#include <cstdint>
#include <vector>

#include "coldrec/types.hpp"

namespace coldrec {

// Matrix-factorization model scored by pure dot product; no bias terms, so
// any popularity signal has to flow through embedding magnitudes.
struct FactorModel {
  Mat user_embeddings;  // num_users x d
  Mat item_embeddings;  // num_items x d
  std::size_t latent_dim = 0;
};

struct BprConfig {
  std::size_t latent_dim = 16;
  double learning_rate = 0.05;
  double l2_lambda = 1e-4;
  Index epochs = 30;
  Index negatives_per_positive = 2;
  double init_scale = 0.1;
  std::uint64_t seed = 1;
};

// -log(sigmoid(score_pos - score_neg)) + l2_lambda * l2_term, with a
// saturation-safe softplus so large gaps never produce -inf.
double bpr_loss(double score_pos, double score_neg, double l2_term,
                double l2_lambda);

struct BprTripleGrad {
  std::vector<double> d_user, d_pos, d_neg;
};

// Analytic gradient of bpr_loss with l2_term = |u|^2 + |p|^2 + |n|^2.
BprTripleGrad bpr_triple_gradient(std::span<const double> user,
                                  std::span<const double> pos,
                                  std::span<const double> neg,
                                  double l2_lambda);

// SGD over training pairs, one pass per epoch in seeded shuffled order, with
// `negatives_per_positive` uniform non-interacted negatives per pair.
// Deterministic given (train, cfg). Throws NumericError with epoch/step on
// divergence.
FactorModel train_warm(const InteractionTable& train, const BprConfig& cfg);

// Same loop, evaluating Recall@`recall_k` on `val` after each epoch and
// returning the best snapshot once `patience` epochs pass without
// improvement.
FactorModel train_warm_early_stopped(const InteractionTable& train,
                                     const InteractionTable& val,
                                     const BprConfig& cfg, Index patience = 5,
                                     Index recall_k = 20);

std::vector<double> score_warm(const FactorModel& model, Index user,
                               std::span<const Index> items);

}  // namespace coldrec
