#pragma once

// Synthetic data for tests. Generators here use std::mt19937_64 so fixtures
// never share code paths with the library's own Philox streams.

#include "vlme/manifest.hpp"
#include "vlme/types.hpp"

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

namespace fixtures {

using vlme::Index;
using vlme::ProbMatrix;

/// Fresh empty directory under the system temp dir.
std::filesystem::path temp_dir(const std::string& tag);

/// Labels uniform over [0, K).
vlme::LabelVector random_labels(std::size_t n, int k, std::mt19937_64& rng);

/// Rows softmax(signal * onehot(label) + N(0, noise)).
ProbMatrix noisy_probs(const vlme::LabelVector& labels, double signal, double noise, std::mt19937_64& rng);

/// Arbitrary strictly positive row-stochastic matrix.
ProbMatrix random_probs(Index n, Index k, std::mt19937_64& rng, double spread = 2.0);

vlme::RowMatrix<double> random_matrix(Index rows, Index cols, std::mt19937_64& rng, double scale = 1.0);

/// Search-set instance: `weak` models plus an anchor and labels.
struct SearchInstance {
  std::vector<ProbMatrix> weak;
  ProbMatrix anchor;
  vlme::LabelVector labels;
  vlme::ProbRefs weak_refs() const;
};

/// N samples, K classes, m weak models of mixed quality.
SearchInstance random_search_instance(std::size_t n, int k, int m, std::uint64_t seed);

/// Two classes, one weak model correct exactly where the anchor is wrong.
/// Search-set accuracy increases strictly with the weak weight on the
/// standard grid, so the best weight is 1.0.
SearchInstance monotone_instance();

/// Gating task: each sample belongs to a region; in region r only model r
/// is right and the other models agree on one wrong class. Features reveal
/// the region. Feature widths follow common CLIP encoders (1024, 512, 512, 512).
struct GatingInstance {
  std::vector<ProbMatrix> probs;
  std::vector<vlme::FeatureMatrix> features;
  vlme::LabelVector labels;
  std::vector<int> region;
  vlme::ProbRefs refs() const;
  vlme::RowMatrix<double> concatenated_features() const;
};

GatingInstance separable_gating(std::size_t n, int k, int models, std::uint64_t seed);

/// Manifest draft with feature-backed models (plus one probs-backed model
/// when `mixed`), anchor last. Feature dims are 8, 6, 6, 4 for 4 models.
vlme::ManifestDraft synthetic_draft(const std::string& name, std::size_t n, int k, int models, std::uint64_t seed,
                                    bool mixed = false);

}  // namespace fixtures
