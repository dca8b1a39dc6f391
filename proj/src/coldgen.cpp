#include "coldrec/coldgen.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "coldrec/data.hpp"
#include "coldrec/errors.hpp"

namespace coldrec {

namespace {

// Cholesky factorization in place; throws when the matrix is not positive
// definite (rank-deficient normal equations at lambda = 0).
void cholesky(Mat& g) {
  const std::size_t n = g.rows();
  double max_diag = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    max_diag = std::max(max_diag, std::fabs(g.at(i, i)));
  }
  const double tol = 1e-12 * std::max(1.0, max_diag);
  for (std::size_t j = 0; j < n; ++j) {
    double diag = g.at(j, j);
    for (std::size_t k = 0; k < j; ++k) diag -= g.at(j, k) * g.at(j, k);
    if (diag <= tol) {
      throw DataError(
          "normal equations are singular; refit with lambda > 0");
    }
    const double ljj = std::sqrt(diag);
    g.at(j, j) = ljj;
    for (std::size_t i = j + 1; i < n; ++i) {
      double v = g.at(i, j);
      for (std::size_t k = 0; k < j; ++k) v -= g.at(i, k) * g.at(j, k);
      g.at(i, j) = v / ljj;
    }
  }
}

// Solves L L^T x = b for each column of b, in place.
void cholesky_solve(const Mat& l, Mat& b) {
  const std::size_t n = l.rows();
  for (std::size_t c = 0; c < b.cols(); ++c) {
    for (std::size_t i = 0; i < n; ++i) {
      double v = b.at(i, c);
      for (std::size_t k = 0; k < i; ++k) v -= l.at(i, k) * b.at(k, c);
      b.at(i, c) = v / l.at(i, i);
    }
    for (std::size_t i = n; i-- > 0;) {
      double v = b.at(i, c);
      for (std::size_t k = i + 1; k < n; ++k) v -= l.at(k, i) * b.at(k, c);
      b.at(i, c) = v / l.at(i, i);
    }
  }
}

Mat matmul(const Mat& a, const Mat& b) {
  Mat out(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double aik = a.at(i, k);
      if (aik == 0.0) continue;
      for (std::size_t j = 0; j < b.cols(); ++j) {
        out.at(i, j) += aik * b.at(k, j);
      }
    }
  }
  return out;
}

void validate_fit_inputs(const Mat& features, const Mat& embeddings) {
  if (features.rows() != embeddings.rows()) {
    throw DataError("feature and embedding row counts differ");
  }
  if (features.rows() == 0) throw DataError("no rows to fit");
  if (!features.all_finite() || !embeddings.all_finite()) {
    throw DataError("non-finite fit input");
  }
}

}  // namespace

ColdEncoder fit_encoder(const Mat& features_warm, const Mat& embeddings_warm,
                        double lambda) {
  if (lambda < 0.0) throw ConfigError("lambda must be >= 0");
  validate_fit_inputs(features_warm, embeddings_warm);
  const std::size_t f_dim = features_warm.cols();

  Mat gram(f_dim, f_dim);
  for (std::size_t r = 0; r < features_warm.rows(); ++r) {
    const double* row = features_warm[r];
    for (std::size_t i = 0; i < f_dim; ++i) {
      const double fi = row[i];
      if (fi == 0.0) continue;
      for (std::size_t j = i; j < f_dim; ++j) {
        gram.at(i, j) += fi * row[j];
      }
    }
  }
  for (std::size_t i = 0; i < f_dim; ++i) {
    gram.at(i, i) += lambda;
    for (std::size_t j = 0; j < i; ++j) gram.at(i, j) = gram.at(j, i);
  }

  Mat rhs(f_dim, embeddings_warm.cols());
  for (std::size_t r = 0; r < features_warm.rows(); ++r) {
    const double* frow = features_warm[r];
    const double* erow = embeddings_warm[r];
    for (std::size_t i = 0; i < f_dim; ++i) {
      const double fi = frow[i];
      if (fi == 0.0) continue;
      for (std::size_t j = 0; j < embeddings_warm.cols(); ++j) {
        rhs.at(i, j) += fi * erow[j];
      }
    }
  }

  cholesky(gram);
  cholesky_solve(gram, rhs);

  ColdEncoder enc;
  enc.kind = ColdEncoder::Kind::linear;
  enc.w = std::move(rhs);
  enc.ridge_lambda = lambda;
  return enc;
}

double mlp_loss(const Mat& w1, const Mat& w2, const Mat& features,
                const Mat& embeddings) {
  const std::size_t n = features.rows();
  double loss = 0.0;
  std::vector<double> hidden(w1.cols());
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t h = 0; h < w1.cols(); ++h) {
      double s = 0.0;
      for (std::size_t f = 0; f < w1.rows(); ++f) {
        s += features.at(r, f) * w1.at(f, h);
      }
      hidden[h] = std::tanh(s);
    }
    for (std::size_t j = 0; j < w2.cols(); ++j) {
      double y = 0.0;
      for (std::size_t h = 0; h < w2.rows(); ++h) {
        y += hidden[h] * w2.at(h, j);
      }
      const double diff = y - embeddings.at(r, j);
      loss += diff * diff;
    }
  }
  return loss / double(n);
}

void mlp_gradient(const Mat& w1, const Mat& w2, const Mat& features,
                  const Mat& embeddings, Mat& grad_w1, Mat& grad_w2) {
  const std::size_t n = features.rows();
  grad_w1 = Mat(w1.rows(), w1.cols());
  grad_w2 = Mat(w2.rows(), w2.cols());
  std::vector<double> hidden(w1.cols()), delta_out(w2.cols()),
      delta_hidden(w1.cols());
  const double scale = 2.0 / double(n);
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t h = 0; h < w1.cols(); ++h) {
      double s = 0.0;
      for (std::size_t f = 0; f < w1.rows(); ++f) {
        s += features.at(r, f) * w1.at(f, h);
      }
      hidden[h] = std::tanh(s);
    }
    for (std::size_t j = 0; j < w2.cols(); ++j) {
      double y = 0.0;
      for (std::size_t h = 0; h < w2.rows(); ++h) {
        y += hidden[h] * w2.at(h, j);
      }
      delta_out[j] = scale * (y - embeddings.at(r, j));
    }
    for (std::size_t h = 0; h < w2.rows(); ++h) {
      double s = 0.0;
      for (std::size_t j = 0; j < w2.cols(); ++j) {
        grad_w2.at(h, j) += hidden[h] * delta_out[j];
        s += w2.at(h, j) * delta_out[j];
      }
      delta_hidden[h] = s * (1.0 - hidden[h] * hidden[h]);
    }
    for (std::size_t f = 0; f < w1.rows(); ++f) {
      const double x = features.at(r, f);
      if (x == 0.0) continue;
      for (std::size_t h = 0; h < w1.cols(); ++h) {
        grad_w1.at(f, h) += x * delta_hidden[h];
      }
    }
  }
}

ColdEncoder fit_encoder_mlp(const Mat& features_warm,
                            const Mat& embeddings_warm, const MlpConfig& cfg) {
  validate_fit_inputs(features_warm, embeddings_warm);
  if (cfg.hidden_dim == 0) throw ConfigError("hidden_dim must be positive");
  if (!(cfg.learning_rate > 0.0)) {
    throw ConfigError("learning_rate must be positive");
  }

  const std::size_t f_dim = features_warm.cols();
  const std::size_t d = embeddings_warm.cols();
  std::mt19937_64 rng(cfg.seed);
  std::normal_distribution<double> init(0.0, cfg.init_scale);

  ColdEncoder enc;
  enc.kind = ColdEncoder::Kind::mlp;
  enc.mlp_cfg = cfg;
  enc.w1 = Mat(f_dim, cfg.hidden_dim);
  enc.w2 = Mat(cfg.hidden_dim, d);
  for (double& v : enc.w1.values()) v = init(rng);
  for (double& v : enc.w2.values()) v = init(rng);

  std::vector<std::size_t> order(features_warm.rows());
  std::iota(order.begin(), order.end(), 0u);
  std::vector<double> hidden(cfg.hidden_dim), delta_out(d),
      delta_hidden(cfg.hidden_dim);
  for (Index epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (const std::size_t r : order) {
      for (std::size_t h = 0; h < cfg.hidden_dim; ++h) {
        double s = 0.0;
        for (std::size_t f = 0; f < f_dim; ++f) {
          s += features_warm.at(r, f) * enc.w1.at(f, h);
        }
        hidden[h] = std::tanh(s);
      }
      for (std::size_t j = 0; j < d; ++j) {
        double y = 0.0;
        for (std::size_t h = 0; h < cfg.hidden_dim; ++h) {
          y += hidden[h] * enc.w2.at(h, j);
        }
        delta_out[j] = 2.0 * (y - embeddings_warm.at(r, j));
        if (!std::isfinite(delta_out[j])) {
          throw NumericError("mlp training diverged at epoch " +
                             std::to_string(epoch));
        }
      }
      for (std::size_t h = 0; h < cfg.hidden_dim; ++h) {
        double s = 0.0;
        for (std::size_t j = 0; j < d; ++j) s += enc.w2.at(h, j) * delta_out[j];
        delta_hidden[h] = s * (1.0 - hidden[h] * hidden[h]);
        for (std::size_t j = 0; j < d; ++j) {
          enc.w2.at(h, j) -= cfg.learning_rate * hidden[h] * delta_out[j];
        }
      }
      for (std::size_t f = 0; f < f_dim; ++f) {
        const double x = features_warm.at(r, f);
        if (x == 0.0) continue;
        for (std::size_t h = 0; h < cfg.hidden_dim; ++h) {
          enc.w1.at(f, h) -= cfg.learning_rate * x * delta_hidden[h];
        }
      }
    }
  }
  return enc;
}

Mat generate_cold(const ColdEncoder& encoder, const Mat& features_cold) {
  const std::size_t in_dim = encoder.kind == ColdEncoder::Kind::linear
                                 ? encoder.w.rows()
                                 : encoder.w1.rows();
  if (features_cold.cols() != in_dim) {
    throw DataError("feature dimension does not match encoder input");
  }
  if (encoder.kind == ColdEncoder::Kind::linear) {
    return matmul(features_cold, encoder.w);
  }
  Mat hidden = matmul(features_cold, encoder.w1);
  for (double& v : hidden.values()) v = std::tanh(v);
  return matmul(hidden, encoder.w2);
}

std::vector<double> knn_scores(std::span<const Index> user_items,
                               const Mat& features,
                               std::span<const Index> cold_pool,
                               const KnnConfig& cfg) {
  if (user_items.empty()) {
    throw DataError("knn_scores: user has no training interactions");
  }
  std::vector<double> scores;
  scores.reserve(cold_pool.size());
  std::vector<double> sims;
  for (Index c : cold_pool) {
    sims.clear();
    for (Index i : user_items) {
      sims.push_back(cosine(features.row(c), features.row(i)));
    }
    double score = 0.0;
    if (cfg.neighborhood == 0 || cfg.neighborhood >= sims.size()) {
      for (double s : sims) score += s;
    } else {
      std::partial_sort(sims.begin(), sims.begin() + cfg.neighborhood,
                        sims.end(), std::greater<double>());
      for (Index m = 0; m < cfg.neighborhood; ++m) score += sims[m];
    }
    scores.push_back(score);
  }
  return scores;
}

std::vector<double> knn_scores(Index user, const InteractionTable& train,
                               const Mat& features,
                               std::span<const Index> cold_pool,
                               const KnnConfig& cfg) {
  std::vector<Index> user_items;
  for (const auto& [u, i] : train.pairs) {
    if (u == user) user_items.push_back(i);
  }
  std::sort(user_items.begin(), user_items.end());
  return knn_scores(user_items, features, cold_pool, cfg);
}

}  // namespace coldrec
