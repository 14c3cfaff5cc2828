#include "vlme/zs_ensemble.hpp"

#include "vlme/error.hpp"
#include "vlme/fusion.hpp"

#include <cmath>
#include <vector>

namespace vlme {

PerSampleWeights confidence_weights(const ProbRefs& weak) {
  const auto [rows, cols] = common_shape(weak);
  (void)cols;
  const auto m = static_cast<Index>(weak.size());
  PerSampleWeights out(rows, m);
  std::vector<double> confidence(weak.size());
  std::vector<double> scratch(weak.size());
  for (Index s = 0; s < rows; ++s) {
    for (Index i = 0; i < m; ++i) confidence[static_cast<std::size_t>(i)] = weak[static_cast<std::size_t>(i)].get().row(s).maxCoeff();
    const double top = *std::max_element(confidence.begin(), confidence.end());
    for (Index i = 0; i < m; ++i) {
      const double e = std::exp(confidence[static_cast<std::size_t>(i)] - top);
      out(s, i) = e;
      scratch[static_cast<std::size_t>(i)] = e;
    }
    out.row(s) /= ordered_sum(scratch);
  }
  return out;
}

ScoreMatrix zs_ensemble_predict(const ProbRefs& all, std::size_t anchor_index) {
  if (all.size() < 2) throw ValidationError("zero-shot ensemble needs at least two models");
  const auto [weak, anchor] = split_anchor(all, anchor_index);
  return fuse(weak, confidence_weights(weak), anchor);
}

ScoreMatrix mean_ensemble_predict(const ProbRefs& models) {
  if (models.size() < 2) throw ValidationError("mean ensemble needs at least two models");
  const std::vector<double> uniform(models.size(), 1.0 / static_cast<double>(models.size()));
  return fuse_static(models, uniform);
}

ScoreMatrix caw_all_predict(const ProbRefs& models) {
  if (models.size() < 2) throw ValidationError("confidence-weighted ensemble needs at least two models");
  return fuse(models, confidence_weights(models));
}

}  // namespace vlme
