#include "vlme/fusion.hpp"

#include "vlme/error.hpp"

#include <string>
#include <vector>

namespace vlme {

std::pair<Index, Index> common_shape(const ProbRefs& models) {
  if (models.empty()) throw ValidationError("no models to fuse");
  const Index rows = models.front().get().rows();
  const Index cols = models.front().get().cols();
  for (std::size_t i = 1; i < models.size(); ++i) {
    const auto& m = models[i].get();
    if (m.rows() != rows || m.cols() != cols) {
      throw ValidationError("model " + std::to_string(i) + " is " + std::to_string(m.rows()) + "x" +
                            std::to_string(m.cols()) + ", expected " + std::to_string(rows) + "x" +
                            std::to_string(cols));
    }
  }
  return {rows, cols};
}

ScoreMatrix fuse(const ProbRefs& models, const PerSampleWeights& weights, const ProbMatrix* anchor) {
  const auto [rows, cols] = common_shape(models);
  const auto n = static_cast<Index>(models.size());
  if (weights.rows() != rows || weights.cols() != n) {
    throw ValidationError("weights are " + std::to_string(weights.rows()) + "x" + std::to_string(weights.cols()) +
                          ", expected " + std::to_string(rows) + "x" + std::to_string(n));
  }
  if (anchor && (anchor->rows() != rows || anchor->cols() != cols)) {
    throw ValidationError("anchor shape differs from the weak models");
  }
  ScoreMatrix out(rows, cols);
  std::vector<double> terms(models.size() + 1);
  for (Index s = 0; s < rows; ++s) {
    for (Index k = 0; k < cols; ++k) {
      std::size_t t = 0;
      for (Index i = 0; i < n; ++i) terms[t++] = weights(s, i) * models[static_cast<std::size_t>(i)].get()(s, k);
      if (anchor) terms[t++] = (*anchor)(s, k);
      out(s, k) = ordered_sum(std::span(terms.data(), t));
    }
  }
  return out;
}

ScoreMatrix fuse_static(const ProbRefs& models, std::span<const double> weights, const ProbMatrix* anchor) {
  const auto [rows, cols] = common_shape(models);
  if (weights.size() != models.size()) {
    throw ValidationError("got " + std::to_string(weights.size()) + " weights for " +
                          std::to_string(models.size()) + " models");
  }
  PerSampleWeights per_sample(rows, static_cast<Index>(weights.size()));
  for (Index s = 0; s < rows; ++s) {
    for (std::size_t i = 0; i < weights.size(); ++i) per_sample(s, static_cast<Index>(i)) = weights[i];
  }
  (void)cols;
  return fuse(models, per_sample, anchor);
}

std::pair<ProbRefs, const ProbMatrix*> split_anchor(const ProbRefs& all, std::size_t anchor_index) {
  if (anchor_index >= all.size()) {
    throw ValidationError("anchor index " + std::to_string(anchor_index) + " out of range for " +
                          std::to_string(all.size()) + " models");
  }
  ProbRefs weak;
  for (std::size_t i = 0; i < all.size(); ++i) {
    if (i != anchor_index) weak.push_back(all[i]);
  }
  return {weak, &all[anchor_index].get()};
}

}  // namespace vlme
