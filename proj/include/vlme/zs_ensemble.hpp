#pragma once

// Zero-shot ensembles: confidence-aware weighting with a fixed-weight anchor,
// the plain mean baseline, and confidence weighting without the anchor
// exemption.

#include "vlme/types.hpp"

namespace vlme {

/// Row s is the softmax over models of each model's maximum class probability.
PerSampleWeights confidence_weights(const ProbRefs& weak);

/// fused(s) = sum over weak models of w_i(s) * P_i(s) + P_anchor(s).
/// Rows sum to 2; they are scores, not probabilities.
ScoreMatrix zs_ensemble_predict(const ProbRefs& all, std::size_t anchor_index);

/// Elementwise average of at least two models.
ScoreMatrix mean_ensemble_predict(const ProbRefs& models);

/// Confidence-weighted mixture over every listed model (no anchor).
ScoreMatrix caw_all_predict(const ProbRefs& models);

}  // namespace vlme
