#include "vlme/manifest.hpp"

#include "vlme/error.hpp"
#include "vlme/scoring.hpp"
#include "vlme/tensor_io.hpp"

#include <json.hpp>
#include <openssl/evp.h>

#include <cmath>
#include <fstream>
#include <iterator>
#include <memory>
#include <set>

namespace vlme {
namespace {

constexpr double kLoadRowSumTolerance = 1e-4;

using Json = nlohmann::json;

class Sha256 {
 public:
  Sha256() : ctx_(EVP_MD_CTX_new(), &EVP_MD_CTX_free) {
    if (!ctx_ || EVP_DigestInit_ex(ctx_.get(), EVP_sha256(), nullptr) != 1) throw IoError("SHA-256 unavailable");
  }
  void update(const std::string& bytes) { EVP_DigestUpdate(ctx_.get(), bytes.data(), bytes.size()); }
  std::string hex() {
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    EVP_DigestFinal_ex(ctx_.get(), md, &len);
    static constexpr char kHex[] = "0123456789abcdef";
    std::string out;
    for (unsigned i = 0; i < len; ++i) {
      out += kHex[md[i] >> 4];
      out += kHex[md[i] & 15];
    }
    return out;
  }

 private:
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx_;
};

std::string slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

template <typename T>
T field(const Json& j, const char* key, const std::string& where) {
  if (!j.contains(key)) throw ValidationError(where + ": missing key '" + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const Json::exception&) {
    throw ValidationError(where + ": key '" + key + "' has the wrong type");
  }
}

void expect_shape(const RowMatrix<double>& m, Index rows, Index cols, const std::string& what) {
  if (m.rows() != rows || m.cols() != cols) {
    throw ValidationError("shape mismatch: " + what + " is " + std::to_string(m.rows()) + "x" +
                          std::to_string(m.cols()) + ", expected " + std::to_string(rows) + "x" +
                          std::to_string(cols));
  }
}

LabelVector read_labels(const std::filesystem::path& path, int num_classes) {
  const Vector<double> raw = read_vector(path);
  LabelVector labels;
  labels.num_classes = num_classes;
  labels.values.reserve(static_cast<std::size_t>(raw.size()));
  for (Index i = 0; i < raw.size(); ++i) {
    const double v = raw[i];
    if (v != std::floor(v)) {
      throw ValidationError(path.string() + ": label " + std::to_string(i) + " is not an integer");
    }
    labels.values.push_back(static_cast<int>(v));
  }
  validate_labels(labels);
  return labels;
}

void renormalize(ProbMatrix& probs) {
  for (Index r = 0; r < probs.rows(); ++r) probs.row(r) /= probs.row(r).sum();
}

}  // namespace

ProbRefs DatasetManifest::probs() const {
  ProbRefs out;
  for (const auto& m : models) out.push_back(std::cref(m.probs));
  return out;
}

std::vector<std::string> DatasetManifest::model_names() const {
  std::vector<std::string> out;
  for (const auto& m : models) out.push_back(m.name);
  return out;
}

const ModelEntry& DatasetManifest::model(std::string_view name) const {
  for (const auto& m : models) {
    if (m.name == name) return m;
  }
  throw ValidationError("manifest " + dataset_name + " has no model named '" + std::string(name) + "'");
}

DatasetManifest load_manifest(const std::filesystem::path& path) {
  const std::string text = slurp(path);
  Sha256 digest;
  digest.update(text);

  Json j;
  try {
    j = Json::parse(text);
  } catch (const Json::exception& e) {
    throw ValidationError(path.string() + ": not valid JSON: " + e.what());
  }
  if (!j.is_object()) throw ValidationError(path.string() + ": manifest must be an object");
  const std::string where = path.string();
  const auto base = path.parent_path();
  auto resolve = [&](const std::string& rel) {
    const std::filesystem::path p(rel);
    return p.is_absolute() ? p : base / p;
  };
  auto load = [&](const std::string& rel) {
    const auto full = resolve(rel);
    digest.update(slurp(full));
    return full;
  };

  DatasetManifest m;
  m.path = path;
  m.dataset_name = field<std::string>(j, "dataset_name", where);
  m.num_classes = field<int>(j, "num_classes", where);
  if (m.num_classes < 2) throw ValidationError(where + ": num_classes must be at least 2");
  m.class_names = field<std::vector<std::string>>(j, "class_names", where);
  if (static_cast<int>(m.class_names.size()) != m.num_classes) {
    throw ValidationError(where + ": class_names has " + std::to_string(m.class_names.size()) +
                          " entries for num_classes " + std::to_string(m.num_classes));
  }
  m.labels = read_labels(load(field<std::string>(j, "labels_file", where)), m.num_classes);
  const auto n = static_cast<Index>(m.labels.size());
  const auto k = static_cast<Index>(m.num_classes);

  const Json models = j.contains("models") ? j.at("models") : Json();
  if (!models.is_array() || models.empty()) throw ValidationError(where + ": models must be a non-empty list");
  std::set<std::string> seen;
  for (std::size_t i = 0; i < models.size(); ++i) {
    const Json& mj = models[i];
    const std::string mwhere = where + ": models[" + std::to_string(i) + "]";
    if (!mj.is_object()) throw ValidationError(mwhere + " must be an object");
    ModelEntry e;
    e.name = field<std::string>(mj, "name", mwhere);
    if (e.name.empty() || !seen.insert(e.name).second) {
      throw ValidationError(mwhere + ": model names must be non-empty and unique");
    }
    e.feature_dim = field<Index>(mj, "feature_dim", mwhere);
    if (e.feature_dim < 1) throw ValidationError(mwhere + ": feature_dim must be positive");

    const bool has_probs = mj.contains("probs_file");
    const bool has_emb = mj.contains("class_embeddings_file");
    const bool has_temp = mj.contains("temperature");
    if (has_probs && (has_emb || has_temp)) {
      throw ValidationError(mwhere + ": give either probs_file or class_embeddings_file + temperature, not both");
    }
    if (!has_probs && !(mj.contains("features_file") && has_emb && has_temp)) {
      throw ValidationError(mwhere + ": needs probs_file, or features_file + class_embeddings_file + temperature");
    }
    if (mj.contains("features_file")) {
      e.features = read_matrix(load(field<std::string>(mj, "features_file", mwhere)));
      expect_shape(*e.features, n, e.feature_dim, e.name + " features");
      if (!e.features->allFinite()) throw ValidationError(mwhere + ": features contain NaN or infinity");
    }
    if (has_probs) {
      e.source = ModelSource::probs;
      e.probs = read_matrix(load(field<std::string>(mj, "probs_file", mwhere)));
      expect_shape(e.probs, n, k, e.name + " probabilities");
      try {
        validate_prob_matrix(e.probs, kLoadRowSumTolerance);
      } catch (const ValidationError& err) {
        throw ValidationError(mwhere + " (" + e.name + "): " + err.what());
      }
      e.probs = e.probs.cwiseMin(1.0);
      renormalize(e.probs);
    } else {
      e.source = ModelSource::features;
      e.temperature = field<double>(mj, "temperature", mwhere);
      if (!(*e.temperature > 0) || !std::isfinite(*e.temperature)) {
        throw ValidationError(mwhere + ": temperature must be positive");
      }
      e.class_embeddings = read_matrix(load(field<std::string>(mj, "class_embeddings_file", mwhere)));
      expect_shape(*e.class_embeddings, k, e.feature_dim, e.name + " class embeddings");
      e.probs = probs_from_features(*e.features, *e.class_embeddings, *e.temperature);
    }
    m.models.push_back(std::move(e));
  }

  const auto anchor = field<long long>(j, "anchor_index", where);
  if (anchor < 0 || anchor >= static_cast<long long>(m.models.size())) {
    throw ValidationError(where + ": anchor_index " + std::to_string(anchor) + " out of range");
  }
  m.anchor_index = static_cast<std::size_t>(anchor);
  m.digest = digest.hex();
  return m;
}

std::filesystem::path write_manifest(const std::filesystem::path& dir, const std::string& stem,
                                     const ManifestDraft& draft) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());

  nlohmann::ordered_json j;
  j["dataset_name"] = draft.dataset_name;
  j["num_classes"] = draft.class_names.size();
  j["class_names"] = draft.class_names;
  Vector<double> labels(static_cast<Index>(draft.labels.size()));
  for (std::size_t i = 0; i < draft.labels.size(); ++i) labels[static_cast<Index>(i)] = draft.labels[i];
  write_vector(dir / (stem + ".labels.vet"), labels);
  j["labels_file"] = stem + ".labels.vet";
  j["anchor_index"] = draft.anchor_index;
  j["models"] = nlohmann::ordered_json::array();
  for (std::size_t i = 0; i < draft.models.size(); ++i) {
    const auto& model = draft.models[i];
    const std::string prefix = stem + ".m" + std::to_string(i);
    nlohmann::ordered_json mj;
    mj["name"] = model.name;
    mj["feature_dim"] = model.feature_dim;
    if (model.probs) {
      write_matrix(dir / (prefix + ".probs.vet"), *model.probs);
      mj["probs_file"] = prefix + ".probs.vet";
    }
    if (model.features) {
      write_matrix(dir / (prefix + ".features.vet"), *model.features);
      mj["features_file"] = prefix + ".features.vet";
    }
    if (model.class_embeddings) {
      write_matrix(dir / (prefix + ".text.vet"), *model.class_embeddings);
      mj["class_embeddings_file"] = prefix + ".text.vet";
    }
    if (model.temperature) mj["temperature"] = *model.temperature;
    j["models"].push_back(mj);
  }
  const auto path = dir / (stem + ".json");
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << j.dump(2) << '\n';
  return path;
}

DatasetManifest select_samples(const DatasetManifest& m, std::span<const std::size_t> indices) {
  if (indices.empty()) throw ValidationError("sample selection is empty");
  DatasetManifest out = m;
  const auto rows = static_cast<Index>(indices.size());
  out.labels.values.clear();
  for (auto i : indices) {
    if (i >= m.num_samples()) throw ValidationError("sample index " + std::to_string(i) + " out of range");
    out.labels.values.push_back(m.labels[i]);
  }
  auto take = [&](const RowMatrix<double>& src) {
    RowMatrix<double> dst(rows, src.cols());
    for (Index r = 0; r < rows; ++r) dst.row(r) = src.row(static_cast<Index>(indices[static_cast<std::size_t>(r)]));
    return dst;
  };
  for (std::size_t mi = 0; mi < m.models.size(); ++mi) {
    out.models[mi].probs = take(m.models[mi].probs);
    if (m.models[mi].features) out.models[mi].features = take(*m.models[mi].features);
  }
  return out;
}

DatasetManifest select_classes(const DatasetManifest& m, std::span<const int> class_ids) {
  if (class_ids.size() < 2) throw ValidationError("class selection needs at least two classes");
  std::vector<int> position(static_cast<std::size_t>(m.num_classes), -1);
  for (std::size_t p = 0; p < class_ids.size(); ++p) {
    const int c = class_ids[p];
    if (c < 0 || c >= m.num_classes || position[static_cast<std::size_t>(c)] != -1) {
      throw ValidationError("class selection has an invalid or repeated class " + std::to_string(c));
    }
    position[static_cast<std::size_t>(c)] = static_cast<int>(p);
  }
  std::vector<std::size_t> keep;
  for (std::size_t i = 0; i < m.num_samples(); ++i) {
    if (position[static_cast<std::size_t>(m.labels[i])] != -1) keep.push_back(i);
  }
  if (keep.empty()) throw ValidationError("no samples belong to the selected classes");

  DatasetManifest out = select_samples(m, keep);
  out.num_classes = static_cast<int>(class_ids.size());
  out.class_names.clear();
  for (int c : class_ids) out.class_names.push_back(m.class_names[static_cast<std::size_t>(c)]);
  out.labels.num_classes = out.num_classes;
  for (auto& y : out.labels.values) y = position[static_cast<std::size_t>(y)];

  for (auto& model : out.models) {
    if (model.source == ModelSource::features) {
      ClassEmbeddings sub(static_cast<Index>(class_ids.size()), model.class_embeddings->cols());
      for (std::size_t p = 0; p < class_ids.size(); ++p) sub.row(static_cast<Index>(p)) = model.class_embeddings->row(class_ids[p]);
      model.class_embeddings = sub;
      model.probs = probs_from_features(*model.features, sub, *model.temperature);
    } else {
      ProbMatrix sub(model.probs.rows(), static_cast<Index>(class_ids.size()));
      for (std::size_t p = 0; p < class_ids.size(); ++p) sub.col(static_cast<Index>(p)) = model.probs.col(class_ids[p]);
      for (Index r = 0; r < sub.rows(); ++r) {
        const double s = sub.row(r).sum();
        if (!(s > 0)) throw ValidationError(model.name + ": sample " + std::to_string(r) + " has no mass on the selected classes");
        sub.row(r) /= s;
      }
      model.probs = std::move(sub);
    }
  }
  return out;
}

void check_same_models(const DatasetManifest& a, const DatasetManifest& b) {
  if (a.models.size() != b.models.size()) {
    throw ValidationError(a.dataset_name + " and " + b.dataset_name + " list different numbers of models");
  }
  for (std::size_t i = 0; i < a.models.size(); ++i) {
    if (a.models[i].name != b.models[i].name || a.models[i].feature_dim != b.models[i].feature_dim) {
      throw ValidationError(a.dataset_name + " and " + b.dataset_name + " disagree on model " + std::to_string(i));
    }
  }
  if (a.anchor_index != b.anchor_index) {
    throw ValidationError(a.dataset_name + " and " + b.dataset_name + " use different anchors");
  }
}

}  // namespace vlme
