#include "coldrec/mitigate.hpp"

#include <cmath>

#include "coldrec/errors.hpp"

namespace coldrec {

double warm_mean_magnitude(const Mat& warm_embeddings) {
  if (warm_embeddings.rows() == 0) throw DataError("no warm embeddings");
  double sum = 0.0;
  for (std::size_t r = 0; r < warm_embeddings.rows(); ++r) {
    sum += l2_norm(warm_embeddings.row(r));
  }
  const double mean = sum / double(warm_embeddings.rows());
  if (mean <= 0.0) throw DataError("warm embeddings are all zero");
  return mean;
}

double scaling_factor(double magnitude, double mu_w, double alpha) {
  if (alpha < 0.0) throw ConfigError("alpha must be >= 0");
  if (mu_w <= 0.0) throw ConfigError("mu_w must be > 0");
  if (magnitude == 0.0) return 1.0;  // zero vectors cannot be rescaled
  return (magnitude + alpha * mu_w) / (magnitude * (1.0 + alpha));
}

Mat scale_embeddings(const Mat& cold, double mu_w, double alpha) {
  if (alpha < 0.0) throw ConfigError("alpha must be >= 0");
  if (!cold.all_finite()) throw NumericError("non-finite cold embedding");
  if (alpha == 0.0) return cold;
  Mat scaled = cold;
  for (std::size_t r = 0; r < scaled.rows(); ++r) {
    const double m = l2_norm(scaled.row(r));
    if (m == 0.0) continue;
    const double gamma = scaling_factor(m, mu_w, alpha);
    for (double& v : scaled.row(r)) v *= gamma;
  }
  return scaled;
}

MagnitudeStats magnitude_stats(const Mat& warm_embeddings,
                               const Mat& cold_embeddings) {
  MagnitudeStats stats;
  stats.mu_w = warm_mean_magnitude(warm_embeddings);
  stats.cold_magnitudes.reserve(cold_embeddings.rows());
  double sum = 0.0;
  for (std::size_t r = 0; r < cold_embeddings.rows(); ++r) {
    const double m = l2_norm(cold_embeddings.row(r));
    stats.cold_magnitudes.push_back(m);
    sum += m;
  }
  if (!stats.cold_magnitudes.empty()) {
    stats.mean = sum / double(stats.cold_magnitudes.size());
    double sq = 0.0;
    for (double m : stats.cold_magnitudes) {
      sq += (m - stats.mean) * (m - stats.mean);
    }
    stats.stddev = std::sqrt(sq / double(stats.cold_magnitudes.size()));
  }
  return stats;
}

}  // namespace coldrec
