#include <doctest.h>

#include "fixtures.hpp"
#include "vlme/error.hpp"
#include "vlme/manifest.hpp"
#include "vlme/scoring.hpp"
#include "vlme/tensor_io.hpp"

#include <json.hpp>

#include <fstream>

using namespace vlme;
using nlohmann::json;

namespace {

json read_json(const std::filesystem::path& p) {
  std::ifstream in(p);
  return json::parse(in);
}

void write_json(const std::filesystem::path& p, const json& j) {
  std::ofstream out(p);
  out << j.dump(2);
}

// A small probs-only manifest on disk; returns its path.
std::filesystem::path tiny_manifest(const std::filesystem::path& dir, const ProbMatrix& probs,
                                    const std::vector<int>& labels) {
  ManifestDraft d;
  d.dataset_name = "tiny";
  for (Index c = 0; c < probs.cols(); ++c) d.class_names.push_back("c" + std::to_string(c));
  d.labels = labels;
  ManifestDraft::Model a;
  a.name = "a";
  a.feature_dim = 4;
  a.probs = probs;
  ManifestDraft::Model b = a;
  b.name = "b";
  d.models = {a, b};
  d.anchor_index = 1;
  return write_manifest(dir, "tiny", d);
}

}  // namespace

TEST_CASE("write then load a feature-backed manifest") {
  const auto dir = fixtures::temp_dir("manifest_features");
  const auto draft = fixtures::synthetic_draft("synth", 40, 5, 4, 3);
  const auto path = write_manifest(dir, "synth", draft);
  const auto m = load_manifest(path);
  CHECK(m.dataset_name == "synth");
  CHECK(m.num_classes == 5);
  CHECK(m.num_samples() == 40);
  CHECK(m.labels.values == draft.labels);
  CHECK(m.anchor_index == 3);
  CHECK(m.model_names() == std::vector<std::string>{"model_0", "model_1", "model_2", "model_3"});
  CHECK(m.digest.size() == 64);
  for (std::size_t i = 0; i < 4; ++i) {
    const auto& e = m.models[i];
    CHECK(e.source == ModelSource::features);
    REQUIRE(e.features);
    REQUIRE(e.class_embeddings);
    CHECK(e.features->cols() == e.feature_dim);
    const auto expect = probs_from_features(*e.features, *e.class_embeddings, *e.temperature);
    CHECK(e.probs == expect);
    CHECK_NOTHROW(validate_prob_matrix(e.probs));
  }
  CHECK(&m.model("model_2") == &m.models[2]);
  CHECK_THROWS_AS(m.model("nope"), ValidationError);

  // Same content, same digest; touching any referenced file changes it.
  CHECK(load_manifest(path).digest == m.digest);
  write_vector(dir / "synth.m1.features.vet", Vector<double>::Ones(3));
  CHECK_THROWS_AS(load_manifest(path), ValidationError);
}

TEST_CASE("mixed sources: a probs-backed model may carry features") {
  const auto dir = fixtures::temp_dir("manifest_mixed");
  const auto draft = fixtures::synthetic_draft("mix", 30, 4, 3, 8, true);
  const auto m = load_manifest(write_manifest(dir, "mix", draft));
  CHECK(m.models[0].source == ModelSource::probs);
  CHECK(m.models[0].features.has_value());
  CHECK_FALSE(m.models[0].temperature.has_value());
  CHECK(m.models[1].source == ModelSource::features);
  CHECK((m.models[0].probs - *draft.models[0].probs).cwiseAbs().maxCoeff() < 1e-6);
}

TEST_CASE("digest changes when a tensor changes") {
  const auto dir = fixtures::temp_dir("manifest_digest");
  ProbMatrix p(2, 2);
  p << 0.6, 0.4, 0.3, 0.7;
  const auto path = tiny_manifest(dir, p, {0, 1});
  const auto before = load_manifest(path).digest;
  p << 0.5, 0.5, 0.3, 0.7;
  write_matrix(dir / "tiny.m0.probs.vet", p);
  CHECK(load_manifest(path).digest != before);
}

TEST_CASE("validation errors") {
  const auto dir = fixtures::temp_dir("manifest_errors");
  ProbMatrix good(3, 5);
  good.setConstant(0.2);

  SUBCASE("row sum 0.8") {
    ProbMatrix bad = good;
    bad.row(1) << 0.2, 0.2, 0.2, 0.1, 0.1;
    const auto path = tiny_manifest(dir, bad, {0, 1, 2});
    try {
      load_manifest(path);
      FAIL("expected row-sum error");
    } catch (const ValidationError& e) {
      CHECK(std::string(e.what()).find("row 1") != std::string::npos);
    }
  }
  SUBCASE("label equal to K") {
    CHECK_THROWS_AS(load_manifest(tiny_manifest(dir, good, {0, 5, 1})), ValidationError);
  }
  SUBCASE("negative label") {
    CHECK_THROWS_AS(load_manifest(tiny_manifest(dir, good, {0, -1, 1})), ValidationError);
  }
  SUBCASE("non-integral label") {
    const auto path = tiny_manifest(dir, good, {0, 1, 2});
    Vector<double> labels(3);
    labels << 0, 1.5, 2;
    write_vector(dir / "tiny.labels.vet", labels);
    CHECK_THROWS_AS(load_manifest(path), ValidationError);
  }
  SUBCASE("probability shape mismatch") {
    const auto path = tiny_manifest(dir, good, {0, 1, 2});
    write_matrix(dir / "tiny.m0.probs.vet", ProbMatrix::Constant(4, 5, 0.2));
    try {
      load_manifest(path);
      FAIL("expected shape error");
    } catch (const ValidationError& e) {
      CHECK(std::string(e.what()).find("shape mismatch") != std::string::npos);
    }
  }
  SUBCASE("missing referenced file is an I/O error") {
    const auto path = tiny_manifest(dir, good, {0, 1, 2});
    std::filesystem::remove(dir / "tiny.m1.probs.vet");
    CHECK_THROWS_AS(load_manifest(path), IoError);
  }
  SUBCASE("missing manifest is an I/O error") {
    CHECK_THROWS_AS(load_manifest(dir / "absent.json"), IoError);
  }
  SUBCASE("corrupt tensor is an I/O error") {
    const auto path = tiny_manifest(dir, good, {0, 1, 2});
    std::ofstream(dir / "tiny.m0.probs.vet", std::ios::binary) << "VET2garbage";
    try {
      load_manifest(path);
      FAIL("expected format error");
    } catch (const TensorFormatError& e) {
      CHECK(e.kind() == ErrorKind::io);
      CHECK(e.code() == TensorErrorCode::bad_magic);
    }
  }
  SUBCASE("malformed JSON and schema problems") {
    const auto path = tiny_manifest(dir, good, {0, 1, 2});
    const json original = read_json(path);
    std::ofstream(path) << "{ not json";
    CHECK_THROWS_AS(load_manifest(path), ValidationError);

    auto edit = [&](auto change) {
      json j = original;
      change(j);
      write_json(path, j);
      return path;
    };
    CHECK_THROWS_AS(load_manifest(edit([](json& j) { j.erase("labels_file"); })), ValidationError);
    CHECK_THROWS_AS(load_manifest(edit([](json& j) { j["num_classes"] = 4; })), ValidationError);
    CHECK_THROWS_AS(load_manifest(edit([](json& j) { j["anchor_index"] = 2; })), ValidationError);
    CHECK_THROWS_AS(load_manifest(edit([](json& j) { j["models"] = json::array(); })), ValidationError);
    CHECK_THROWS_AS(load_manifest(edit([](json& j) { j["models"][1]["name"] = "a"; })), ValidationError);
    CHECK_THROWS_AS(load_manifest(edit([](json& j) { j["models"][0]["feature_dim"] = 0; })), ValidationError);
    CHECK_THROWS_AS(load_manifest(edit([](json& j) { j["models"][0]["temperature"] = 0.01; })), ValidationError);
    CHECK_THROWS_AS(load_manifest(edit([](json& j) { j["models"][0].erase("probs_file"); })), ValidationError);
    CHECK_THROWS_AS(load_manifest(edit([](json& j) { j["dataset_name"] = 3; })), ValidationError);
    CHECK_NOTHROW(load_manifest(edit([](json&) {})));
  }
  SUBCASE("non-positive temperature") {
    const auto draft = fixtures::synthetic_draft("t", 10, 3, 2, 1);
    const auto path = write_manifest(dir, "t", draft);
    json j = read_json(path);
    j["models"][0]["temperature"] = -0.1;
    write_json(path, j);
    CHECK_THROWS_AS(load_manifest(path), ValidationError);
  }
}

TEST_CASE("rows within tolerance are renormalized") {
  const auto dir = fixtures::temp_dir("manifest_renorm");
  ProbMatrix p(2, 2);
  p << 0.60004, 0.4, 0.3, 0.69995;
  const auto m = load_manifest(tiny_manifest(dir, p, {0, 1}));
  for (Index r = 0; r < 2; ++r) CHECK(std::abs(m.models[0].probs.row(r).sum() - 1.0) < 1e-12);
}

TEST_CASE("sample and class selection") {
  const auto dir = fixtures::temp_dir("manifest_select");
  const auto m = load_manifest(write_manifest(dir, "s", fixtures::synthetic_draft("s", 60, 6, 3, 4, true)));

  const std::size_t pick[] = {5, 0, 7};
  const auto sub = select_samples(m, pick);
  CHECK(sub.num_samples() == 3);
  CHECK(sub.labels[0] == m.labels[5]);
  CHECK(sub.models[1].probs.row(2) == m.models[1].probs.row(7));
  REQUIRE(sub.models[0].features);
  CHECK(sub.models[0].features->row(0) == m.models[0].features->row(5));
  const std::size_t out_of_range[] = {60};
  CHECK_THROWS_AS(select_samples(m, out_of_range), ValidationError);

  const int keep[] = {3, 4, 5};
  const auto cls = select_classes(m, keep);
  CHECK(cls.num_classes == 3);
  CHECK(cls.class_names == std::vector<std::string>{"class_3", "class_4", "class_5"});
  std::size_t expected = 0;
  for (int y : m.labels.values) expected += y >= 3;
  CHECK(cls.num_samples() == expected);
  for (int y : cls.labels.values) CHECK((y >= 0 && y < 3));
  for (const auto& e : cls.models) {
    CHECK(e.probs.cols() == 3);
    CHECK_NOTHROW(validate_prob_matrix(e.probs, 1e-12));
  }
  // Feature-backed models are re-scored against the kept class embeddings.
  const auto& f = cls.models[1];
  CHECK(f.probs == probs_from_features(*f.features, *f.class_embeddings, *f.temperature));
  CHECK(f.class_embeddings->rows() == 3);

  const int dup[] = {1, 1};
  CHECK_THROWS_AS(select_classes(m, dup), ValidationError);
  const int one[] = {2};
  CHECK_THROWS_AS(select_classes(m, one), ValidationError);
}

TEST_CASE("model compatibility") {
  const auto dir = fixtures::temp_dir("manifest_compat");
  const auto a = load_manifest(write_manifest(dir, "a", fixtures::synthetic_draft("a", 20, 4, 3, 1)));
  const auto b = load_manifest(write_manifest(dir, "b", fixtures::synthetic_draft("b", 25, 7, 3, 2)));
  CHECK_NOTHROW(check_same_models(a, b));
  const auto c = load_manifest(write_manifest(dir, "c", fixtures::synthetic_draft("c", 20, 4, 4, 1)));
  CHECK_THROWS_AS(check_same_models(a, c), ValidationError);
  auto d = b;
  d.anchor_index = 0;
  CHECK_THROWS_AS(check_same_models(a, d), ValidationError);
}
