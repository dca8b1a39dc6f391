#pragma once

#include <vector>

#include "coldrec/types.hpp"

namespace coldrec {

// Arithmetic mean of row L2 norms. Errors if the matrix is empty or all rows
// are zero.
double warm_mean_magnitude(const Mat& warm_embeddings);

// gamma = (m + alpha * mu_w) / (m * (1 + alpha)), so that the scaled
// magnitude satisfies  gamma*m - mu_w = (m - mu_w) / (1 + alpha).
// Zero-magnitude rows are left untouched (gamma = 1 by convention).
double scaling_factor(double magnitude, double mu_w, double alpha);

// Multiplies each nonzero row by its scaling factor; directions unchanged.
// alpha = 0 returns the input bit-identically.
Mat scale_embeddings(const Mat& cold, double mu_w, double alpha);

struct MagnitudeStats {
  double mu_w = 0.0;
  std::vector<double> cold_magnitudes;
  double mean = 0.0;
  double stddev = 0.0;  // population standard deviation
};

MagnitudeStats magnitude_stats(const Mat& warm_embeddings,
                               const Mat& cold_embeddings);

}  // namespace coldrec
