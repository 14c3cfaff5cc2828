#include <doctest.h>

#include "fixtures.hpp"
#include "swig_oracles.hpp"
#include "vlme/ensemble.hpp"
#include "vlme/error.hpp"
#include "vlme/scoring.hpp"
#include "vlme/swig.hpp"
#include "vlme/zs_ensemble.hpp"

#include <cmath>
#include <numeric>

using namespace vlme;

namespace {

SwigConfig config_for(Index input_dim, Index num_weight, Index ds = 32, bool anchor_fixed = false) {
  SwigConfig c;
  c.input_dim = input_dim;
  c.downsample = ds;
  c.num_weight = num_weight;
  c.anchor_fixed = anchor_fixed;
  return c;
}

// Nudges every hidden pre-activation away from the ReLU kink so that
// central differences with eps = 1e-4 stay on one linear piece.
void clear_kinks(SwigParams<double>& p, const RowMatrix<double>& inputs, const std::vector<std::size_t>& batch) {
  for (int round = 0; round < 50; ++round) {
    bool moved = false;
    for (std::size_t s : batch) {
      const Eigen::VectorXd pre = p.w1 * inputs.row(static_cast<Index>(s)).transpose() + p.b1;
      for (Index j = 0; j < pre.size(); ++j) {
        if (std::abs(pre(j)) < 1e-3) {
          p.b1(j) += 5e-3;
          moved = true;
        }
      }
    }
    if (!moved) return;
  }
}

}  // namespace

TEST_CASE("config validation and hidden width") {
  CHECK(config_for(64, 4).hidden_dim() == 2);
  CHECK(config_for(2560, 4).hidden_dim() == 80);
  CHECK(config_for(31, 2, 31).hidden_dim() == 1);
  CHECK(config_for(40, 2, 32).hidden_dim() == 1);
  CHECK_THROWS_AS(config_for(16, 2, 32).validate(), ValidationError);
  CHECK_THROWS_AS(config_for(16, 2, 0).validate(), ValidationError);
  CHECK_THROWS_AS(config_for(0, 2, 1).validate(), ValidationError);
  CHECK_THROWS_AS(config_for(16, 0, 1).validate(), ValidationError);
  CHECK(parse_swig_input("features") == SwigInput::features);
  CHECK(parse_swig_input("logits") == SwigInput::logits);
  CHECK_THROWS_AS(parse_swig_input("pixels"), ValidationError);
}

TEST_CASE("init is deterministic, bounded and seed dependent") {
  const auto c = config_for(64, 3);
  const auto a = swig_init(c, 5);
  const auto b = swig_init(c, 5);
  CHECK(a == b);
  CHECK_FALSE(a == swig_init(c, 6));
  CHECK(a.w1.rows() == 2);
  CHECK(a.w1.cols() == 64);
  CHECK(a.w2.rows() == 3);
  CHECK(a.w2.cols() == 2);
  CHECK(a.b1.isZero());
  CHECK(a.b2.isZero());
  CHECK(a.w1.cwiseAbs().maxCoeff() <= 1.0 / 8.0);
  CHECK(a.w2.cwiseAbs().maxCoeff() <= 1.0 / std::sqrt(2.0));
  CHECK(a.w1.cwiseAbs().maxCoeff() > 0.0);
  const auto f = swig_init<float>(c, 5);
  CHECK((f.w1.cast<double>() - a.w1).cwiseAbs().maxCoeff() < 1e-7);
}

TEST_CASE("forward matches the element-wise reference") {
  std::mt19937_64 rng(21);
  for (int trial = 0; trial < 50; ++trial) {
    const auto c = config_for(40, 3, 8);
    auto p = swig_init(c, static_cast<std::uint64_t>(trial));
    p.b1 = fixtures::random_matrix(p.b1.size(), 1, rng).col(0);
    p.b2 = fixtures::random_matrix(p.b2.size(), 1, rng).col(0);
    const auto inputs = fixtures::random_matrix(7, 40, rng, 3.0);
    const auto batch = swig_forward_batch(p, inputs);
    for (Index s = 0; s < inputs.rows(); ++s) {
      const auto ref = fixtures::reference_forward(p, inputs.row(s).transpose());
      const auto one = swig_forward(p, inputs.row(s).transpose());
      CHECK(std::abs(one.sum() - 1.0) < 1e-12);
      for (Index i = 0; i < 3; ++i) {
        CHECK(std::abs(one(i) - ref[static_cast<std::size_t>(i)]) < 1e-12);
        CHECK(std::abs(batch(s, i) - ref[static_cast<std::size_t>(i)]) < 1e-12);
      }
    }
  }
  const auto p = swig_init(config_for(8, 2, 4), 1);
  CHECK_THROWS_AS(swig_forward(p, Eigen::VectorXd::Ones(7)), ValidationError);
}

TEST_CASE("t_predict worked examples") {
  ProbMatrix a(1, 2), b(1, 2);
  a << 0.9, 0.1;
  b << 0.1, 0.9;
  // Zero first layer, bias picks softmax(b2) = (0.25, 0.75).
  const auto c = config_for(2, 2, 2);
  SwigParams<double> p{RowMatrix<double>::Zero(1, 2), Vector<double>::Zero(1), RowMatrix<double>::Zero(2, 1),
                       Vector<double>(2)};
  p.b2 << 0.0, std::log(3.0);
  const RowMatrix<double> x = RowMatrix<double>::Ones(1, 2);
  const auto fused = t_predict(p, c, x, {std::cref(a), std::cref(b)}, 1);
  CHECK(fused(0, 0) == doctest::Approx(0.3).epsilon(1e-14));
  CHECK(fused(0, 1) == doctest::Approx(0.7).epsilon(1e-14));

  // Anchor-fixed: a single weak weight of 1 plus the anchor at 1.
  auto cf = c;
  cf.anchor_fixed = true;
  cf.num_weight = 1;
  SwigParams<double> q{RowMatrix<double>::Zero(1, 2), Vector<double>::Zero(1), RowMatrix<double>::Zero(1, 1),
                       Vector<double>::Zero(1)};
  const auto fixed = t_predict(q, cf, x, {std::cref(a), std::cref(b)}, 1);
  CHECK(fixed(0, 0) == doctest::Approx(1.0));
  CHECK(fixed(0, 1) == doctest::Approx(1.0));
  CHECK_THROWS_AS(t_predict(p, cf, x, {std::cref(a), std::cref(b)}, 1), ValidationError);
}

TEST_CASE("loss values") {
  Eigen::RowVectorXd onehot(3);
  onehot << 0, 1, 0;
  CHECK(swig_loss(onehot, 1) == 0.0);
  CHECK(swig_loss(Eigen::RowVectorXd::Constant(4, 0.25), 2) == doctest::Approx(1.38629436111989).epsilon(1e-14));
  Eigen::RowVectorXd r(2);
  r << 0.3, 0.7;
  CHECK(swig_loss(r, 1) == doctest::Approx(0.356674943938732).epsilon(1e-14));
  CHECK(swig_loss(onehot, 0) == doctest::Approx(-std::log(1e-12)));
}

TEST_CASE("gradient is zero when all models agree") {
  std::mt19937_64 rng(2);
  const auto labels = fixtures::random_labels(20, 5, rng);
  const auto P = fixtures::random_probs(20, 5, rng);
  const auto inputs = fixtures::random_matrix(20, 12, rng);
  for (bool fixed : {false, true}) {
    const auto c = config_for(12, fixed ? 2 : 3, 4, fixed);
    const auto p = swig_init(c, 3);
    std::vector<std::size_t> batch(20);
    std::iota(batch.begin(), batch.end(), 0);
    const auto g = swig_backward(p, c, inputs, {std::cref(P), std::cref(P), std::cref(P)}, 2, labels, batch);
    CHECK(g.grads.w1.cwiseAbs().maxCoeff() < 1e-15);
    CHECK(g.grads.w2.cwiseAbs().maxCoeff() < 1e-15);
    CHECK(g.grads.b2.cwiseAbs().maxCoeff() < 1e-15);
  }
}

TEST_CASE("backward matches a hand-expanded chain rule (f=3, h=2, m=2)") {
  SwigParams<double> p{RowMatrix<double>(2, 3), Vector<double>(2), RowMatrix<double>(2, 2), Vector<double>(2)};
  p.w1 << 0.5, -0.2, 0.1, -0.3, 0.8, 0.4;
  p.b1 << 0.05, -0.1;
  p.w2 << 0.7, -0.4, -0.6, 0.9;
  p.b2 << 0.1, -0.2;
  RowMatrix<double> x(1, 3);
  x << 1.0, 2.0, -0.5;
  ProbMatrix P0(1, 3), P1(1, 3);
  P0 << 0.6, 0.3, 0.1;
  P1 << 0.2, 0.5, 0.3;
  const LabelVector labels{{1}, 3};
  const auto c = config_for(3, 2, 1);
  const std::size_t idx[] = {0};
  const auto g = swig_backward(p, c, x, {std::cref(P0), std::cref(P1)}, 1, labels, idx);

  // Scalar expansion.
  double pre[2], h[2];
  for (int j = 0; j < 2; ++j) {
    pre[j] = p.b1(j) + p.w1(j, 0) * 1.0 + p.w1(j, 1) * 2.0 + p.w1(j, 2) * -0.5;
    h[j] = pre[j] > 0 ? pre[j] : 0;
  }
  const double z0 = p.b2(0) + p.w2(0, 0) * h[0] + p.w2(0, 1) * h[1];
  const double z1 = p.b2(1) + p.w2(1, 0) * h[0] + p.w2(1, 1) * h[1];
  const double w0 = 1.0 / (1.0 + std::exp(z1 - z0));
  const double w1 = 1.0 - w0;
  const double q = w0 * 0.3 + w1 * 0.5;
  const double dz0 = -w0 * (0.3 - q) / q;
  const double dz1 = -w1 * (0.5 - q) / q;
  CHECK(g.mean_loss == doctest::Approx(-std::log(q)).epsilon(1e-14));
  CHECK(std::abs(g.grads.b2(0) - dz0) < 1e-12);
  CHECK(std::abs(g.grads.b2(1) - dz1) < 1e-12);
  for (int j = 0; j < 2; ++j) {
    CHECK(std::abs(g.grads.w2(0, j) - dz0 * h[j]) < 1e-12);
    CHECK(std::abs(g.grads.w2(1, j) - dz1 * h[j]) < 1e-12);
    const double dpre = pre[j] > 0 ? dz0 * p.w2(0, j) + dz1 * p.w2(1, j) : 0.0;
    CHECK(std::abs(g.grads.b1(j) - dpre) < 1e-12);
    for (int k = 0; k < 3; ++k) CHECK(std::abs(g.grads.w1(j, k) - dpre * x(0, k)) < 1e-12);
  }
}

TEST_CASE("backward matches central finite differences in every mode") {
  std::mt19937_64 rng(404);
  for (int trial = 0; trial < 8; ++trial) {
    const bool fixed = trial % 2 == 1;
    const bool logits = (trial / 2) % 2 == 1;
    const int models = 2 + trial % 3;
    const int k = 3 + trial;
    const std::size_t n = 12;
    const auto labels = fixtures::random_labels(n, k, rng);
    std::vector<ProbMatrix> probs;
    ProbRefs refs;
    for (int m = 0; m < models; ++m) probs.push_back(fixtures::noisy_probs(labels, 0.5 * m, 1.0, rng));
    for (const auto& P : probs) refs.push_back(std::cref(P));
    RowMatrix<double> inputs;
    if (logits) {
      inputs.resize(static_cast<Index>(n), models * k);
      for (int m = 0; m < models; ++m) inputs.middleCols(m * k, k) = probs[static_cast<std::size_t>(m)];
    } else {
      inputs = fixtures::random_matrix(static_cast<Index>(n), 24 + 8 * trial, rng, 2.0);
    }
    auto c = config_for(inputs.cols(), fixed ? models - 1 : models, 4, fixed);
    c.input_type = logits ? SwigInput::logits : SwigInput::features;
    auto p = swig_init(c, static_cast<std::uint64_t>(trial + 1));
    p.b2 = fixtures::random_matrix(c.num_weight, 1, rng).col(0);
    std::vector<std::size_t> batch(n);
    std::iota(batch.begin(), batch.end(), 0);
    clear_kinks(p, inputs, batch);
    const auto anchor = static_cast<std::size_t>(models - 1);

    const auto g = swig_backward(p, c, inputs, refs, anchor, labels, batch);
    CHECK(g.mean_loss == doctest::Approx(fixtures::reference_loss(p, c, inputs, refs, anchor, labels, batch)).epsilon(1e-12));

    const double eps = 1e-4;
    auto check_block = [&](auto member) {
      auto& analytic = g.grads.*member;
      for (Index i = 0; i < analytic.size(); ++i) {
        auto plus = p, minus = p;
        (plus.*member).data()[i] += eps;
        (minus.*member).data()[i] -= eps;
        const double numeric = (fixtures::reference_loss(plus, c, inputs, refs, anchor, labels, batch) -
                                fixtures::reference_loss(minus, c, inputs, refs, anchor, labels, batch)) /
                               (2 * eps);
        const double a = analytic.data()[i];
        const double rel = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1e-3});
        CHECK(rel < 1e-5);
      }
    };
    check_block(&SwigParams<double>::w1);
    check_block(&SwigParams<double>::b1);
    check_block(&SwigParams<double>::w2);
    check_block(&SwigParams<double>::b2);
  }
}

TEST_CASE("train config schedule and validation") {
  TrainConfig t;
  CHECK(t.learning_rate(0) == 1e-5);
  CHECK(t.learning_rate(1) == doctest::Approx(5e-3));
  CHECK(t.learning_rate(3) == doctest::Approx(2.5e-3));
  CHECK(t.learning_rate(4) < t.learning_rate(3));
  t.epochs = 0;
  CHECK_THROWS_AS(t.validate(), ValidationError);
  t = TrainConfig{};
  t.batch_size = 0;
  CHECK_THROWS_AS(t.validate(), ValidationError);
  t = TrainConfig{};
  t.initial_lr = -1;
  CHECK_THROWS_AS(t.validate(), ValidationError);
  t = TrainConfig{};
  t.momentum = 1.0;
  CHECK_THROWS_AS(t.validate(), ValidationError);
}

TEST_CASE("training on the separable gating task") {
  const auto g = fixtures::separable_gating(1024, 8, 4, 11);
  const auto inputs = g.concatenated_features();
  const auto c = config_for(inputs.cols(), 4);
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    TrainConfig t;
    t.seed = seed;
    const auto r = swig_train(inputs, g.refs(), 3, g.labels, c, t);
    REQUIRE(r.epoch_losses.size() == 5);
    CHECK(r.epoch_losses.back() < r.epoch_losses.front());
    CHECK(accuracy(t_predict(r.params, c, inputs, g.refs(), 3), g.labels) >= 0.99);
    // Same seed, same bits.
    CHECK(swig_train(inputs, g.refs(), 3, g.labels, c, t).params == r.params);
  }
}

TEST_CASE("training rejects bad inputs and reports divergence") {
  std::mt19937_64 rng(5);
  const auto labels = fixtures::random_labels(10, 3, rng);
  const auto P = fixtures::random_probs(10, 3, rng);
  const auto Q = fixtures::random_probs(10, 3, rng);
  const auto inputs = fixtures::random_matrix(10, 8, rng);
  const auto c = config_for(8, 2, 2);
  TrainConfig t;
  CHECK_THROWS_AS(swig_train(fixtures::random_matrix(9, 8, rng), {std::cref(P), std::cref(P)}, 1, labels, c, t),
                  ValidationError);
  CHECK_THROWS_AS(swig_train(fixtures::random_matrix(10, 7, rng), {std::cref(P), std::cref(P)}, 1, labels, c, t),
                  ValidationError);
  t.initial_lr = 1e300;
  t.warmup_epochs = 0;
  try {
    swig_train(RowMatrix<double>(inputs * 1e100), {std::cref(P), std::cref(Q)}, 1, labels, c, t);
    FAIL("expected divergence");
  } catch (const ValidationError& e) {
    INFO(std::string(e.what()));
    CHECK(std::string(e.what()).find("non-finite loss at epoch") != std::string::npos);
  }
}

TEST_CASE("zero head equals the mean ensemble (property)") {
  std::mt19937_64 rng(99);
  std::uniform_int_distribution<int> models(2, 5), classes(2, 12);
  for (int trial = 0; trial < 200; ++trial) {
    const int m = models(rng);
    const int k = classes(rng);
    std::vector<ProbMatrix> probs;
    ProbRefs refs;
    for (int i = 0; i < m; ++i) probs.push_back(fixtures::random_probs(15, k, rng));
    for (const auto& P : probs) refs.push_back(std::cref(P));
    const auto c = config_for(10, m, 5);
    auto p = swig_init(c, static_cast<std::uint64_t>(trial));
    p.w2.setZero();
    p.b2.setZero();
    const auto inputs = fixtures::random_matrix(15, 10, rng);
    const auto fused = t_predict(p, c, inputs, refs, 0);
    CHECK(fused == mean_ensemble_predict(refs));
  }
}

TEST_CASE("logits input width is n*K") {
  const auto g = fixtures::separable_gating(40, 5, 3, 1);
  DatasetManifest m;
  m.num_classes = 5;
  m.labels = g.labels;
  for (int i = 0; i < 3; ++i) {
    ModelEntry e;
    e.name = "m" + std::to_string(i);
    e.feature_dim = g.features[static_cast<std::size_t>(i)].cols();
    e.probs = g.probs[static_cast<std::size_t>(i)];
    e.features = g.features[static_cast<std::size_t>(i)];
    m.models.push_back(e);
  }
  const auto x = swig_inputs(m, SwigInput::logits);
  CHECK(x.cols() == 15);
  CHECK(x.block(0, 5, 40, 5) == g.probs[1]);
  CHECK(swig_inputs(m, SwigInput::features).cols() == 1024 + 512 + 512);
}

TEST_CASE("save and load round trip") {
  const auto dir = fixtures::temp_dir("swig_roundtrip");
  SavedSwig s;
  s.config = config_for(64, 3, 16, true);
  s.config.input_type = SwigInput::logits;
  s.params = swig_init(s.config, 9);
  // float32 storage: start from float-representable values.
  s.params.w1 = s.params.w1.cast<float>().cast<double>();
  s.params.w2 = s.params.w2.cast<float>().cast<double>();
  s.params.b1.setConstant(0.25);
  s.meta = {{"a", "b", "c", "d"}, {16, 16, 16, 16}, 2, {"x", "y"}};
  save_swig(dir, s);
  const auto back = load_swig(dir);
  CHECK(back.params == s.params);
  CHECK(back.config.input_dim == 64);
  CHECK(back.config.downsample == 16);
  CHECK(back.config.num_weight == 3);
  CHECK(back.config.anchor_fixed);
  CHECK(back.config.input_type == SwigInput::logits);
  CHECK(back.meta.model_names == s.meta.model_names);
  CHECK(back.meta.feature_dims == s.meta.feature_dims);
  CHECK(back.meta.anchor_index == 2);
  CHECK(back.meta.source_classes == s.meta.source_classes);
  CHECK_THROWS_AS(load_swig(dir / "missing"), IoError);
}
