#pragma once

#include <vector>

#include "kronsketch/kron.hpp"
#include "kronsketch/types.hpp"

namespace kronsketch {

/// One selected row of a sparse diagonal row-sampling/rescaling matrix.
/// `weight` multiplies |r_i|^p in the sampled objective (so the row itself
/// is scaled by weight^{1/p}); `prob` is the recorded probability behind it.
struct SampleEntry {
  Index row = 0;
  double weight = 1.0;
  double prob = 1.0;
};

/// Sparse diagonal sampler with recorded per-row probabilities. In the l_2
/// path entries are independent draws (duplicates keep independent weights,
/// weight = 1/(m * prob)); in l_p paths rows are distinct with weight =
/// 1/alpha_i applied to |.|^p, i.e. a row scale of 1/alpha_i^{1/p}.
struct DiagonalSampler {
  std::vector<SampleEntry> entries;
  Index target_m = 0;
  double p = 2.0;
  bool exact_fit = false;  // residual was (numerically) zero; nothing to refine

  void validate() const {
    for (const auto& e : entries) {
      require(e.prob > 0.0 && e.prob <= 1.0, "recorded probability outside (0,1]");
      require(e.weight > 0.0, "sampler weight must be positive");
    }
  }
};

/// Assembles the sampled subproblem: rows scaled by weight^{1/p}.
struct SampledSystem {
  Matrix w;
  Vector c;
};

SampledSystem build_sampled_system(const KronDesign& design,
                                   const DiagonalSampler& sampler);

}  // namespace kronsketch
