#pragma once

#include <vector>

#include "kronsketch/rng.hpp"
#include "kronsketch/types.hpp"

namespace kronsketch {

/// Median of |X| for X standard symmetric p-stable, p in [1,2]. The sampler
/// families below are pinned to this normalization: p=1 Cauchy (theta=1),
/// p=2 standard normal (theta=0.67448975...), 1<p<2 Chambers-Mallows-Stuck
/// with characteristic function exp(-|t|^p). Interpolated from a frozen
/// table of offline numeric quantiles accurate to 1e-4 relative.
double stable_abs_median(double p);

/// One draw from D_p. p=2 is N(0,1), p=1 is standard Cauchy, otherwise CMS.
double stable_draw(Rng& rng, double p);

/// i.i.d. vector of D_p draws; rejects p outside [1,2].
Vector pstable_sample(double p, Index count, Seed seed);

/// Configuration of the median-based norm estimator: tau repetitions,
/// each an independent p-stable contraction of the same vector.
struct MedianEstimatorConfig {
  Index repetitions = 1;  // tau = Theta(log n) in the calling pipelines
  double p = 2.0;

  MedianEstimatorConfig(Index tau, double p_in) : repetitions(tau), p(p_in) {
    require(tau >= 1, "median estimator needs at least one repetition");
    require(p_in >= 1.0 && p_in <= 2.0, "p must lie in [1,2]");
  }

  [[nodiscard]] double theta() const { return stable_abs_median(p); }
};

/// median_j |samples_j| / theta_p, the Indyk estimator of ||x||_p from tau
/// independent contractions Z^j x. Returns 0 for the all-zero input.
double pstable_norm_estimate(const MedianEstimatorConfig& cfg,
                             const std::vector<double>& samples);

/// In-place median of |v| (helper shared by the samplers).
double median_abs(std::vector<double> v);

}  // namespace kronsketch
