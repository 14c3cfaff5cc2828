#include "fixtures.hpp"

#include <chrono>
#include <cmath>

namespace fixtures {

std::filesystem::path temp_dir(const std::string& tag) {
  static int counter = 0;
  const auto stamp = std::chrono::steady_clock::now().time_since_epoch().count();
  auto dir = std::filesystem::temp_directory_path() /
             ("vlme_" + tag + "_" + std::to_string(stamp) + "_" + std::to_string(counter++));
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

vlme::LabelVector random_labels(std::size_t n, int k, std::mt19937_64& rng) {
  std::uniform_int_distribution<int> pick(0, k - 1);
  vlme::LabelVector labels;
  labels.num_classes = k;
  for (std::size_t i = 0; i < n; ++i) labels.values.push_back(pick(rng));
  return labels;
}

namespace {
void softmax_in_place(ProbMatrix& m) {
  for (Index r = 0; r < m.rows(); ++r) {
    const double top = m.row(r).maxCoeff();
    double sum = 0.0;
    for (Index c = 0; c < m.cols(); ++c) {
      m(r, c) = std::exp(m(r, c) - top);
      sum += m(r, c);
    }
    m.row(r) /= sum;
  }
}
}  // namespace

ProbMatrix noisy_probs(const vlme::LabelVector& labels, double signal, double noise, std::mt19937_64& rng) {
  std::normal_distribution<double> gauss(0.0, noise);
  ProbMatrix m(static_cast<Index>(labels.size()), labels.num_classes);
  for (Index r = 0; r < m.rows(); ++r) {
    for (Index c = 0; c < m.cols(); ++c) m(r, c) = gauss(rng) + (c == labels[static_cast<std::size_t>(r)] ? signal : 0.0);
  }
  softmax_in_place(m);
  return m;
}

ProbMatrix random_probs(Index n, Index k, std::mt19937_64& rng, double spread) {
  std::normal_distribution<double> gauss(0.0, spread);
  ProbMatrix m(n, k);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = gauss(rng);
  softmax_in_place(m);
  return m;
}

vlme::RowMatrix<double> random_matrix(Index rows, Index cols, std::mt19937_64& rng, double scale) {
  std::normal_distribution<double> gauss(0.0, scale);
  vlme::RowMatrix<double> m(rows, cols);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = gauss(rng);
  return m;
}

vlme::ProbRefs SearchInstance::weak_refs() const {
  vlme::ProbRefs out;
  for (const auto& w : weak) out.push_back(std::cref(w));
  return out;
}

SearchInstance random_search_instance(std::size_t n, int k, int m, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  SearchInstance inst;
  inst.labels = random_labels(n, k, rng);
  inst.anchor = noisy_probs(inst.labels, 1.6, 1.0, rng);
  for (int i = 0; i < m; ++i) inst.weak.push_back(noisy_probs(inst.labels, 0.8 + 0.3 * i, 1.0, rng));
  return inst;
}

SearchInstance monotone_instance() {
  // Samples 0..8: anchor wrong by margin 0.9 * t, weak right with 0.95, so
  // the sample flips to correct once w > t; t = 0.15, 0.25, ..., 0.95.
  // Samples 9..11: anchor right by 0.98, weak wrong with 0.95; they stay
  // correct for every w <= 1.0 since 0.9 w < 0.98.
  SearchInstance inst;
  inst.labels.num_classes = 2;
  const int flips = 9, steady = 3;
  ProbMatrix weak(flips + steady, 2), anchor(flips + steady, 2);
  for (int s = 0; s < flips; ++s) {
    const double t = 0.15 + 0.1 * s;
    const double margin = 0.9 * t;
    inst.labels.values.push_back(0);
    anchor.row(s) << (1.0 - margin) / 2.0, (1.0 + margin) / 2.0;
    weak.row(s) << 0.95, 0.05;
  }
  for (int s = flips; s < flips + steady; ++s) {
    inst.labels.values.push_back(1);
    anchor.row(s) << 0.01, 0.99;
    weak.row(s) << 0.95, 0.05;
  }
  inst.weak.push_back(weak);
  inst.anchor = anchor;
  return inst;
}

vlme::ProbRefs GatingInstance::refs() const {
  vlme::ProbRefs out;
  for (const auto& p : probs) out.push_back(std::cref(p));
  return out;
}

vlme::RowMatrix<double> GatingInstance::concatenated_features() const {
  Index width = 0;
  for (const auto& f : features) width += f.cols();
  vlme::RowMatrix<double> out(features.front().rows(), width);
  Index col = 0;
  for (const auto& f : features) {
    out.middleCols(col, f.cols()) = f;
    col += f.cols();
  }
  return out;
}

GatingInstance separable_gating(std::size_t n, int k, int models, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  GatingInstance g;
  g.labels = random_labels(n, k, rng);
  std::uniform_int_distribution<int> pick_region(0, models - 1);
  std::uniform_int_distribution<int> pick_offset(1, k - 1);
  std::normal_distribution<double> gauss(0.0, 1.0);

  // Per-model feature dims and region centroids.
  const int dims[] = {1024, 512, 512, 512};
  constexpr double kCentroidNorm = 10.0;
  constexpr double kNoise = 1.0;
  std::vector<std::vector<Eigen::VectorXd>> centroid(static_cast<std::size_t>(models));
  for (int m = 0; m < models; ++m) {
    const int d = dims[m % 4];
    for (int r = 0; r < models; ++r) {
      Eigen::VectorXd c(d);
      for (int i = 0; i < d; ++i) c[i] = gauss(rng);
      centroid[static_cast<std::size_t>(m)].push_back(kCentroidNorm * c.normalized());
    }
    g.features.emplace_back(static_cast<Index>(n), d);
    g.probs.emplace_back(static_cast<Index>(n), k);
  }

  constexpr double kPeak = 0.7;
  for (std::size_t s = 0; s < n; ++s) {
    const int region = pick_region(rng);
    g.region.push_back(region);
    const int y = g.labels[s];
    const int wrong = (y + pick_offset(rng)) % k;
    for (int m = 0; m < models; ++m) {
      const int target = m == region ? y : wrong;
      auto row = g.probs[static_cast<std::size_t>(m)].row(static_cast<Index>(s));
      row.setConstant((1.0 - kPeak) / (k - 1));
      row(target) = kPeak;
      auto f = g.features[static_cast<std::size_t>(m)].row(static_cast<Index>(s));
      const auto& c = centroid[static_cast<std::size_t>(m)][static_cast<std::size_t>(region)];
      for (Index i = 0; i < f.size(); ++i) f(i) = c[i] + kNoise * gauss(rng);
    }
  }
  return g;
}

vlme::ManifestDraft synthetic_draft(const std::string& name, std::size_t n, int k, int models, std::uint64_t seed,
                                    bool mixed) {
  std::mt19937_64 rng(seed);
  vlme::ManifestDraft d;
  d.dataset_name = name;
  for (int c = 0; c < k; ++c) d.class_names.push_back("class_" + std::to_string(c));
  const auto labels = random_labels(n, k, rng);
  d.labels = labels.values;
  const Index dims[] = {8, 6, 6, 4};
  for (int m = 0; m < models; ++m) {
    vlme::ManifestDraft::Model model;
    model.name = "model_" + std::to_string(m);
    model.feature_dim = dims[m % 4];
    // Class embeddings are random directions; features lean toward their
    // label's embedding, more strongly for later (stronger) models.
    const auto text = random_matrix(k, model.feature_dim, rng);
    vlme::FeatureMatrix feats = random_matrix(static_cast<Index>(n), model.feature_dim, rng, 1.0);
    for (std::size_t s = 0; s < n; ++s) feats.row(static_cast<Index>(s)) += (0.6 + 0.3 * m) * text.row(labels[s]);
    model.features = feats;
    if (mixed && m == 0) {
      model.probs = noisy_probs(labels, 1.0, 1.0, rng);
    } else {
      model.class_embeddings = text;
      model.temperature = 0.05 + 0.02 * m;
    }
    d.models.push_back(std::move(model));
  }
  d.anchor_index = static_cast<std::size_t>(models - 1);
  return d;
}

}  // namespace fixtures
