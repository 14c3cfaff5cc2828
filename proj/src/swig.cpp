#include "vlme/swig.hpp"

#include "vlme/tensor_io.hpp"

#include <json.hpp>

#include <fstream>
#include <numbers>

namespace vlme {

std::string_view to_string(SwigInput input) { return input == SwigInput::features ? "features" : "logits"; }

SwigInput parse_swig_input(std::string_view text) {
  if (text == "features") return SwigInput::features;
  if (text == "logits") return SwigInput::logits;
  throw ValidationError("unknown SWIG input type '" + std::string(text) + "' (features|logits)");
}

Index SwigConfig::hidden_dim() const {
  return downsample > 0 ? std::max<Index>(1, input_dim / downsample) : 0;
}

void SwigConfig::validate() const {
  if (input_dim < 1) throw ValidationError("SWIG input dim must be positive");
  if (num_weight < 1) throw ValidationError("SWIG must emit at least one weight");
  if (downsample < 1 || downsample > input_dim) {
    throw ValidationError("downsampling scale " + std::to_string(downsample) + " leaves no hidden units for input dim " +
                          std::to_string(input_dim));
  }
}

void TrainConfig::validate() const {
  if (epochs < 1) throw ValidationError("epochs must be at least 1");
  if (batch_size < 1) throw ValidationError("batch size must be at least 1");
  if (!(initial_lr > 0)) throw ValidationError("learning rate must be positive");
  if (!(momentum >= 0 && momentum < 1)) throw ValidationError("momentum must lie in [0, 1)");
  if (warmup_epochs < 0) throw ValidationError("warmup epochs must be non-negative");
  if (!(warmup_lr > 0)) throw ValidationError("warmup learning rate must be positive");
}

double TrainConfig::learning_rate(int epoch) const {
  if (epoch < warmup_epochs) return warmup_lr;
  const double t = epoch - warmup_epochs;
  const double span = std::max(1, epochs - warmup_epochs);
  return 0.5 * initial_lr * (1.0 + std::cos(std::numbers::pi * t / span));
}

void save_swig(const std::filesystem::path& dir, const SavedSwig& swig) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
  write_matrix(dir / "w1.vet", swig.params.w1);
  write_vector(dir / "b1.vet", swig.params.b1);
  write_matrix(dir / "w2.vet", swig.params.w2);
  write_vector(dir / "b2.vet", swig.params.b2);

  nlohmann::ordered_json j;
  j["input_dim"] = swig.config.input_dim;
  j["hidden_dim"] = swig.config.hidden_dim();
  j["downsample"] = swig.config.downsample;
  j["num_weight"] = swig.config.num_weight;
  j["input_type"] = to_string(swig.config.input_type);
  j["anchor_fixed"] = swig.config.anchor_fixed;
  j["activation"] = "relu";
  j["output"] = "softmax";
  j["model_names"] = swig.meta.model_names;
  j["feature_dims"] = swig.meta.feature_dims;
  j["anchor_index"] = swig.meta.anchor_index;
  j["source_classes"] = swig.meta.source_classes;
  j["files"] = {{"w1", "w1.vet"}, {"b1", "b1.vet"}, {"w2", "w2.vet"}, {"b2", "b2.vet"}};
  std::ofstream out(dir / "swig.json");
  if (!out) throw IoError("cannot write " + (dir / "swig.json").string());
  out << j.dump(2) << '\n';
}

SavedSwig load_swig(const std::filesystem::path& dir) {
  std::ifstream in(dir / "swig.json");
  if (!in) throw IoError("cannot open " + (dir / "swig.json").string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError((dir / "swig.json").string() + ": " + e.what());
  }
  SavedSwig s;
  try {
    s.config.input_dim = j.at("input_dim").get<Index>();
    s.config.downsample = j.at("downsample").get<Index>();
    s.config.num_weight = j.at("num_weight").get<Index>();
    s.config.input_type = parse_swig_input(j.at("input_type").get<std::string>());
    s.config.anchor_fixed = j.at("anchor_fixed").get<bool>();
    s.meta.model_names = j.value("model_names", std::vector<std::string>{});
    s.meta.feature_dims = j.value("feature_dims", std::vector<Index>{});
    s.meta.anchor_index = j.value("anchor_index", std::size_t{0});
    s.meta.source_classes = j.value("source_classes", std::vector<std::string>{});
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError((dir / "swig.json").string() + ": " + e.what());
  }
  s.config.validate();
  s.params.w1 = read_matrix(dir / "w1.vet");
  s.params.b1 = read_vector(dir / "b1.vet");
  s.params.w2 = read_matrix(dir / "w2.vet");
  s.params.b2 = read_vector(dir / "b2.vet");
  const Index h = s.config.hidden_dim();
  if (s.params.w1.rows() != h || s.params.w1.cols() != s.config.input_dim || s.params.b1.size() != h ||
      s.params.w2.rows() != s.config.num_weight || s.params.w2.cols() != h || s.params.b2.size() != s.config.num_weight) {
    throw ValidationError(dir.string() + ": parameter shapes disagree with swig.json");
  }
  return s;
}

}  // namespace vlme
