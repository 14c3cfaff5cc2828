#pragma once

// Evaluation protocols: zero-shot, base-to-new (class split, k-shot
// sampling, harmonic mean), cross-dataset transfer, domain generalization,
// and averaging over seeds.

#include "vlme/ensemble.hpp"
#include "vlme/manifest.hpp"

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace vlme {

struct ClassSplit {
  std::vector<int> base_ids;
  std::vector<int> new_ids;
};

/// First ceil(K/2) classes are base, the rest new.
ClassSplit base_new_split(int num_classes);

struct ShotSample {
  std::vector<std::size_t> indices;  // ascending
  int shots_per_class = 0;
  std::uint64_t seed = 0;
  std::vector<int> skipped_classes;  // base classes with no samples
};

/// Per base class, a seeded uniform draw of min(k, count) sample indices
/// without replacement.
ShotSample sample_k_shot(const LabelVector& labels, std::span<const int> base_ids, int k, std::uint64_t seed);

/// 2ab / (a + b); the unit of the inputs is preserved.
double harmonic_mean(double a, double b);

struct MetricBlock {
  std::optional<double> base_acc;
  std::optional<double> new_acc;
  std::optional<double> hm;
  std::optional<double> acc;

  bool operator==(const MetricBlock&) const = default;
};

struct DatasetMetrics {
  std::string dataset;
  MetricBlock metrics;
};

struct SeedRun {
  std::uint64_t seed = 0;
  std::vector<DatasetMetrics> per_dataset;
  std::vector<double> loss_trace;  // tune only, first dataset
};

struct EvalReport {
  std::string protocol;
  std::string strategy;
  std::vector<std::uint64_t> seeds;
  std::vector<SeedRun> runs;
  /// Mean over seeds per dataset; hm is recomputed from the mean accuracies.
  std::vector<DatasetMetrics> per_dataset;
  /// Mean over datasets of the per-dataset block; hm recomputed likewise.
  MetricBlock averaged;
  std::vector<std::string> diagnostics;
};

/// Elementwise mean of blocks that share the same populated fields; hm is
/// the harmonic mean of the averaged base and new accuracies.
MetricBlock average_blocks(std::span<const MetricBlock> blocks);

EvalReport run_zero_shot(std::span<const DatasetManifest> datasets, Strategy strategy, const FitOptions& options);

struct BaseToNewSplit {
  DatasetManifest base_train;
  DatasetManifest base_test;
  DatasetManifest new_test;
};

/// Splits full train/test manifests by base_new_split.
BaseToNewSplit split_base_to_new(const DatasetManifest& train, const DatasetManifest& test);

/// Per seed: fit on a k-shot sample of each base-train split, score base and
/// new test sets, report base/new/hm; then average over seeds and datasets.
EvalReport run_base_to_new(std::span<const BaseToNewSplit> datasets, Strategy strategy,
                           std::span<const std::uint64_t> seeds, const FitOptions& options, int shots = 16);

/// One fitted ensemble per seed, applied to each target; seeds are taken
/// from `seeds` (same length as `fitted`).
EvalReport run_cross_dataset(std::span<const FittedEnsemble> fitted, std::span<const std::uint64_t> seeds,
                             std::span<const DatasetManifest> targets);

/// Like run_cross_dataset, but every variant must share the source label space.
EvalReport run_domain_generalization(std::span<const FittedEnsemble> fitted, std::span<const std::uint64_t> seeds,
                                     std::span<const DatasetManifest> variants);

}  // namespace vlme
