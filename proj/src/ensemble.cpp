#include "vlme/ensemble.hpp"

#include "vlme/error.hpp"
#include "vlme/scoring.hpp"
#include "vlme/zs_ensemble.hpp"

namespace vlme {
namespace {

ProbRefs subset_probs(const DatasetManifest& m, const std::vector<std::string>& names) {
  if (names.empty()) return m.probs();
  ProbRefs out;
  for (std::size_t i = 0; i < m.models.size(); ++i) {
    for (const auto& n : names) {
      if (m.models[i].name == n) out.push_back(std::cref(m.models[i].probs));
    }
  }
  if (out.size() != names.size()) throw ValidationError("model subset names a model missing from " + m.dataset_name);
  return out;
}

// Subset names in manifest order, so listing order never changes results.
std::vector<std::string> canonical_subset(const DatasetManifest& m, const std::vector<std::string>& names) {
  if (names.empty()) return {};
  std::vector<std::string> out;
  for (const auto& model : m.models) {
    if (std::find(names.begin(), names.end(), model.name) != names.end()) out.push_back(model.name);
  }
  for (const auto& n : names) {
    if (std::count(names.begin(), names.end(), n) > 1) throw ValidationError("model subset repeats '" + n + "'");
  }
  if (out.size() != names.size()) throw ValidationError("model subset names a model missing from " + m.dataset_name);
  return out;
}

void check_compatible(const FittedEnsemble& f, const DatasetManifest& m) {
  if (f.model_names.empty()) return;
  if (m.model_names() != f.model_names) {
    throw ValidationError(m.dataset_name + ": model list differs from the fitted ensemble");
  }
  if (m.anchor_index != f.anchor_index) throw ValidationError(m.dataset_name + ": anchor differs from the fitted ensemble");
  for (std::size_t i = 0; i < f.feature_dims.size() && i < m.models.size(); ++i) {
    if (m.models[i].feature_dim != f.feature_dims[i]) {
      throw ValidationError(m.dataset_name + ": feature dim of " + m.models[i].name + " differs from the fitted ensemble");
    }
  }
}

FittedEnsemble base_fit(Strategy s, const DatasetManifest& m) {
  FittedEnsemble f;
  f.strategy = s;
  f.model_names = m.model_names();
  for (const auto& model : m.models) f.feature_dims.push_back(model.feature_dim);
  f.anchor_index = m.anchor_index;
  f.source_classes = m.class_names;
  return f;
}

}  // namespace

std::string_view to_string(Strategy s) {
  switch (s) {
    case Strategy::zs: return "zs";
    case Strategy::mean: return "mean";
    case Strategy::caw_all: return "caw_all";
    case Strategy::tf: return "tf";
    case Strategy::tune: return "tune";
  }
  return "?";
}

Strategy parse_strategy(std::string_view text) {
  if (text == "zs") return Strategy::zs;
  if (text == "mean") return Strategy::mean;
  if (text == "caw_all" || text == "caw-all") return Strategy::caw_all;
  if (text == "tf") return Strategy::tf;
  if (text == "tune") return Strategy::tune;
  throw ValidationError("unknown strategy '" + std::string(text) + "' (zs|mean|caw_all|tf|tune)");
}

RowMatrix<double> swig_inputs(const DatasetManifest& m, SwigInput input_type) {
  const auto n = static_cast<Index>(m.num_samples());
  Index width = 0;
  for (const auto& model : m.models) {
    if (input_type == SwigInput::features) {
      if (!model.features) throw ValidationError(model.name + " has no features; use logits input or add features_file");
      width += model.features->cols();
    } else {
      width += model.probs.cols();
    }
  }
  RowMatrix<double> out(n, width);
  Index col = 0;
  for (const auto& model : m.models) {
    const auto& block = input_type == SwigInput::features ? *model.features : model.probs;
    out.middleCols(col, block.cols()) = block;
    col += block.cols();
  }
  return out;
}

FittedEnsemble fit(Strategy strategy, const DatasetManifest& train, const FitOptions& options) {
  FittedEnsemble f = base_fit(strategy, train);
  switch (strategy) {
    case Strategy::zs:
      if (train.models.size() < 2) throw ValidationError("zero-shot ensemble needs at least two models");
      break;
    case Strategy::mean:
    case Strategy::caw_all:
      f.subset = canonical_subset(train, options.subset);
      if (subset_probs(train, f.subset).size() < 2) throw ValidationError("ensemble needs at least two models");
      break;
    case Strategy::tf: {
      const auto all = train.probs();
      const auto [weak, anchor] = split_anchor(all, train.anchor_index);
      SearchOptions so{options.budget, options.threads};
      f.search = options.mode == SearchMode::exhaustive
                     ? exhaustive_search(weak, *anchor, train.labels, options.grid, so)
                     : coordinate_greedy(weak, *anchor, train.labels, options.grid, options.sweeps, so);
      f.anchor_only_accuracy = accuracy(*anchor, train.labels);
      break;
    }
    case Strategy::tune: {
      const RowMatrix<double> inputs = swig_inputs(train, options.input_type);
      SwigConfig config;
      config.input_dim = inputs.cols();
      config.downsample = options.downsample;
      config.input_type = options.input_type;
      config.anchor_fixed = options.anchor_fixed;
      config.num_weight = static_cast<Index>(train.models.size()) - (options.anchor_fixed ? 1 : 0);
      auto trained = swig_train(inputs, train.probs(), train.anchor_index, train.labels, config, options.train);
      SavedSwig saved{std::move(trained.params), config, {f.model_names, f.feature_dims, f.anchor_index, f.source_classes}};
      f.swig = std::move(saved);
      f.loss_trace = std::move(trained.epoch_losses);
      break;
    }
  }
  return f;
}

FittedEnsemble fitted_from_swig(SavedSwig swig) {
  FittedEnsemble f;
  f.strategy = Strategy::tune;
  f.model_names = swig.meta.model_names;
  f.feature_dims = swig.meta.feature_dims;
  f.anchor_index = swig.meta.anchor_index;
  f.source_classes = swig.meta.source_classes;
  f.swig = std::move(swig);
  return f;
}

FittedEnsemble fitted_from_weights(const DatasetManifest& m, StaticWeights weights) {
  FittedEnsemble f = base_fit(Strategy::tf, m);
  if (weights.values.size() + 1 != m.models.size()) {
    throw ValidationError("got " + std::to_string(weights.values.size()) + " weights for " +
                          std::to_string(m.models.size() - 1) + " weak models");
  }
  SearchResult r;
  r.weights = std::move(weights);
  f.search = std::move(r);
  return f;
}

ScoreMatrix predict(const FittedEnsemble& f, const DatasetManifest& m) {
  check_compatible(f, m);
  const auto all = m.probs();
  switch (f.strategy) {
    case Strategy::zs:
      return zs_ensemble_predict(all, m.anchor_index);
    case Strategy::mean:
      return mean_ensemble_predict(subset_probs(m, f.subset));
    case Strategy::caw_all:
      return caw_all_predict(subset_probs(m, f.subset));
    case Strategy::tf: {
      const auto [weak, anchor] = split_anchor(all, m.anchor_index);
      return tf_predict(f.search->weights, weak, *anchor);
    }
    case Strategy::tune: {
      const auto& swig = *f.swig;
      const RowMatrix<double> inputs = swig_inputs(m, swig.config.input_type);
      if (inputs.cols() != swig.config.input_dim) {
        throw ValidationError(m.dataset_name + ": generator input width " + std::to_string(inputs.cols()) +
                              " differs from the trained width " + std::to_string(swig.config.input_dim));
      }
      return t_predict(swig.params, swig.config, inputs, all, m.anchor_index);
    }
  }
  throw ValidationError("unknown strategy");
}

double evaluate(const FittedEnsemble& f, const DatasetManifest& m) { return accuracy(predict(f, m), m.labels); }

}  // namespace vlme
