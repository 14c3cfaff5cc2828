#pragma once

// Weighted fusion of per-model probability rows. Every fused entry is the
// sum of its per-model terms taken in ascending order of value, so the
// result does not depend on the order in which models are listed.

#include "vlme/types.hpp"

#include <algorithm>
#include <span>

namespace vlme {

/// Sorts `terms` in place and sums them in ascending order.
inline double ordered_sum(std::span<double> terms) {
  std::sort(terms.begin(), terms.end());
  double total = 0.0;
  for (double t : terms) total += t;
  return total;
}

/// Throws ValidationError unless all matrices share one shape; returns it.
std::pair<Index, Index> common_shape(const ProbRefs& models);

/// fused(s, k) = sum_i weights(s, i) * models[i](s, k), plus anchor(s, k) when given.
ScoreMatrix fuse(const ProbRefs& models, const PerSampleWeights& weights, const ProbMatrix* anchor = nullptr);

/// Same as `fuse` with one weight per model shared by every sample.
ScoreMatrix fuse_static(const ProbRefs& models, std::span<const double> weights, const ProbMatrix* anchor = nullptr);

/// Splits `all` into (weak models in ascending index order, anchor).
std::pair<ProbRefs, const ProbMatrix*> split_anchor(const ProbRefs& all, std::size_t anchor_index);

}  // namespace vlme
