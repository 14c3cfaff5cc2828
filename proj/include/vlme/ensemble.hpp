#pragma once

// Strategy layer: fits any of the ensemble strategies on a loaded manifest
// and applies the fitted result to other manifests with the same models.

#include "vlme/manifest.hpp"
#include "vlme/swig.hpp"
#include "vlme/tf_ensemble.hpp"

#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace vlme {

enum class Strategy { zs, mean, caw_all, tf, tune };

std::string_view to_string(Strategy s);
Strategy parse_strategy(std::string_view text);

struct FitOptions {
  // tf
  WeightGrid grid = WeightGrid::standard();
  SearchMode mode = SearchMode::exhaustive;
  int sweeps = 10;
  std::uint64_t budget = 1'000'000;
  // tune
  Index downsample = 32;
  SwigInput input_type = SwigInput::features;
  bool anchor_fixed = false;
  TrainConfig train;
  // mean / caw_all: model names to combine; empty means all
  std::vector<std::string> subset;

  unsigned threads = 1;
};

struct FittedEnsemble {
  Strategy strategy = Strategy::zs;
  std::vector<std::string> model_names;
  std::vector<Index> feature_dims;
  std::size_t anchor_index = 0;
  std::vector<std::string> subset;
  std::vector<std::string> source_classes;

  std::optional<SearchResult> search;
  /// Search-set accuracy of the anchor alone (diagnostic for tf).
  std::optional<double> anchor_only_accuracy;
  std::optional<SavedSwig> swig;
  std::vector<double> loss_trace;
};

/// Generator input rows: concatenated raw features of every model, or
/// concatenated probability rows (width n*K) in logits mode.
RowMatrix<double> swig_inputs(const DatasetManifest& m, SwigInput input_type);

FittedEnsemble fit(Strategy strategy, const DatasetManifest& train, const FitOptions& options);

/// Wraps loaded generator parameters as a fitted ensemble.
FittedEnsemble fitted_from_swig(SavedSwig swig);
/// Wraps fixed tf weights as a fitted ensemble for `m`'s models.
FittedEnsemble fitted_from_weights(const DatasetManifest& m, StaticWeights weights);

/// Fused scores of `fitted` on `m`; `m` must carry the same models.
ScoreMatrix predict(const FittedEnsemble& fitted, const DatasetManifest& m);
double evaluate(const FittedEnsemble& fitted, const DatasetManifest& m);

}  // namespace vlme
