#pragma once

// Dataset manifests: a JSON document naming the class list, a label tensor
// and an ordered list of models, each backed either by a probability tensor
// or by (features, class embeddings, temperature). Relative paths resolve
// against the manifest's directory.
//
//   {
//     "dataset_name": "imagenet",
//     "num_classes": 1000,
//     "class_names": ["tench", ...],
//     "labels_file": "labels.vet",
//     "anchor_index": 3,
//     "models": [
//       {"name": "RN50", "feature_dim": 1024, "probs_file": "rn50.probs.vet"},
//       {"name": "ViT-B/16", "feature_dim": 512, "features_file": "vitb16.feat.vet",
//        "class_embeddings_file": "vitb16.text.vet", "temperature": 0.01}
//     ]
//   }
//
// A probs-backed model may also list "features_file" for use as generator input.

#include "vlme/types.hpp"

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace vlme {

enum class ModelSource { probs, features };

struct ModelEntry {
  std::string name;
  Index feature_dim = 0;
  ModelSource source = ModelSource::probs;
  std::optional<double> temperature;

  /// Always populated; computed from features for feature-backed models.
  ProbMatrix probs;
  std::optional<FeatureMatrix> features;
  std::optional<ClassEmbeddings> class_embeddings;
};

struct DatasetManifest {
  std::string dataset_name;
  int num_classes = 0;
  std::vector<std::string> class_names;
  LabelVector labels;
  std::vector<ModelEntry> models;
  std::size_t anchor_index = 0;
  std::filesystem::path path;
  /// SHA-256 over the manifest and every file it references.
  std::string digest;

  std::size_t num_samples() const { return labels.size(); }
  ProbRefs probs() const;
  std::vector<std::string> model_names() const;
  const ModelEntry& model(std::string_view name) const;
};

/// Parses and fully validates a manifest, loading every referenced tensor.
/// Probability rows must sum to one within 1e-4 and are then renormalized.
DatasetManifest load_manifest(const std::filesystem::path& path);

/// In-memory description used to write manifests (fixtures, exporters).
struct ManifestDraft {
  struct Model {
    std::string name;
    Index feature_dim = 0;
    std::optional<ProbMatrix> probs;
    std::optional<FeatureMatrix> features;
    std::optional<ClassEmbeddings> class_embeddings;
    std::optional<double> temperature;
  };
  std::string dataset_name;
  std::vector<std::string> class_names;
  std::vector<int> labels;
  std::vector<Model> models;
  std::size_t anchor_index = 0;
};

/// Writes `<dir>/<stem>.json` plus its tensors into `dir`; returns the JSON path.
std::filesystem::path write_manifest(const std::filesystem::path& dir, const std::string& stem,
                                     const ManifestDraft& draft);

/// Keeps the listed samples, in the given order.
DatasetManifest select_samples(const DatasetManifest& m, std::span<const std::size_t> indices);

/// Keeps samples whose label is in `class_ids` and restricts every model to
/// those classes. Labels are remapped to positions in `class_ids`;
/// probabilities are recomputed from features where available, otherwise
/// renormalized over the kept columns.
DatasetManifest select_classes(const DatasetManifest& m, std::span<const int> class_ids);

/// Throws ValidationError unless both manifests list the same models in the
/// same order with the same feature dims and anchor.
void check_same_models(const DatasetManifest& a, const DatasetManifest& b);

}  // namespace vlme
