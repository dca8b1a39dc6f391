#pragma once

#include <cstdint>
#include <vector>

#include "coldrec/types.hpp"

namespace coldrec {

struct MlpConfig {
  std::size_t hidden_dim = 64;
  double learning_rate = 0.01;
  Index epochs = 50;
  double init_scale = 0.1;
  std::uint64_t seed = 7;
};

// Content-to-embedding encoder. Linear mode is a ridge regression solved in
// closed form; MLP mode is one tanh hidden layer trained by seeded SGD on the
// mean squared embedding distance.
struct ColdEncoder {
  enum class Kind { linear, mlp };
  Kind kind = Kind::linear;
  Mat w;        // linear: feature_dim x d
  Mat w1, w2;   // mlp: feature_dim x h, h x d
  double ridge_lambda = 0.0;
  MlpConfig mlp_cfg;
};

// W = (F^T F + lambda I)^-1 F^T E via Cholesky on the normal equations.
// Throws DataError when the system is singular (suggests lambda > 0).
ColdEncoder fit_encoder(const Mat& features_warm, const Mat& embeddings_warm,
                        double lambda);

ColdEncoder fit_encoder_mlp(const Mat& features_warm,
                            const Mat& embeddings_warm, const MlpConfig& cfg);

// One generated embedding row per feature row; pure function of inputs.
Mat generate_cold(const ColdEncoder& encoder, const Mat& features_cold);

// Full-batch loss and analytic gradient of the MLP objective
//   L = (1/n) sum_i |tanh(f_i W1) W2 - e_i|^2.
// Exposed for gradient checks.
double mlp_loss(const Mat& w1, const Mat& w2, const Mat& features,
                const Mat& embeddings);
void mlp_gradient(const Mat& w1, const Mat& w2, const Mat& features,
                  const Mat& embeddings, Mat& grad_w1, Mat& grad_w2);

struct KnnConfig {
  Index neighborhood = 0;  // 0 = all interacted items; similarity is cosine
};

// score(u, c) = sum of cosine(f_c, f_i) over the user's m most-similar
// training items (all of them when m = 0). Zero-norm rows contribute 0.
std::vector<double> knn_scores(std::span<const Index> user_items,
                               const Mat& features,
                               std::span<const Index> cold_pool,
                               const KnnConfig& cfg);

// Convenience overload deriving the user's items from a training table.
// Errors when the user has no training interactions.
std::vector<double> knn_scores(Index user, const InteractionTable& train,
                               const Mat& features,
                               std::span<const Index> cold_pool,
                               const KnnConfig& cfg);

}  // namespace coldrec
