#pragma once

// Sample-aware weight generator: a two-layer MLP that maps one sample's
// concatenated encoder features (or probability rows) to softmax-normalized
// fusion weights, trained by mini-batch gradient descent with momentum.

#include "vlme/error.hpp"
#include "vlme/fusion.hpp"
#include "vlme/random.hpp"
#include "vlme/scoring.hpp"
#include "vlme/types.hpp"

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <tuple>
#include <vector>

namespace vlme {

enum class SwigInput { features, logits };

std::string_view to_string(SwigInput input);
SwigInput parse_swig_input(std::string_view text);

struct SwigConfig {
  Index input_dim = 0;    // concatenated input width
  Index downsample = 32;  // hidden = input_dim / downsample
  Index num_weight = 0;   // number of models the head weights
  SwigInput input_type = SwigInput::features;
  bool anchor_fixed = false;  // head weights the weak models; anchor adds at 1.0

  Index hidden_dim() const;
  /// Throws ValidationError on a zero or oversized downsampling scale and on
  /// empty input or output widths.
  void validate() const;
};

template <typename Scalar = double>
struct SwigParams {
  RowMatrix<Scalar> w1;  // hidden x input
  Vector<Scalar> b1;     // hidden
  RowMatrix<Scalar> w2;  // num_weight x hidden
  Vector<Scalar> b2;     // num_weight

  bool all_finite() const { return w1.allFinite() && b1.allFinite() && w2.allFinite() && b2.allFinite(); }

  static SwigParams zeros_like(const SwigParams& p) {
    return {RowMatrix<Scalar>::Zero(p.w1.rows(), p.w1.cols()), Vector<Scalar>::Zero(p.b1.size()),
            RowMatrix<Scalar>::Zero(p.w2.rows(), p.w2.cols()), Vector<Scalar>::Zero(p.b2.size())};
  }

  bool operator==(const SwigParams& o) const {
    return w1 == o.w1 && b1 == o.b1 && w2 == o.w2 && b2 == o.b2;
  }
};

template <typename Scalar>
using SwigGradients = SwigParams<Scalar>;

/// Weights ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)) from Philox streams keyed by
/// `seed`; biases zero.
template <typename Scalar = double>
SwigParams<Scalar> swig_init(const SwigConfig& config, std::uint64_t seed) {
  config.validate();
  const Index hidden = config.hidden_dim();
  SwigParams<Scalar> p;
  p.w1.resize(hidden, config.input_dim);
  p.w2.resize(config.num_weight, hidden);
  p.b1 = Vector<Scalar>::Zero(hidden);
  p.b2 = Vector<Scalar>::Zero(config.num_weight);

  Philox4x32 rng1(seed, 1);
  const double bound1 = 1.0 / std::sqrt(static_cast<double>(config.input_dim));
  for (Index i = 0; i < p.w1.size(); ++i) p.w1.data()[i] = static_cast<Scalar>(rng1.uniform(-bound1, bound1));
  Philox4x32 rng2(seed, 2);
  const double bound2 = 1.0 / std::sqrt(static_cast<double>(hidden));
  for (Index i = 0; i < p.w2.size(); ++i) p.w2.data()[i] = static_cast<Scalar>(rng2.uniform(-bound2, bound2));
  return p;
}

/// Fusion weights for one input vector.
template <typename Scalar, typename Derived>
Vector<Scalar> swig_forward(const SwigParams<Scalar>& params, const Eigen::MatrixBase<Derived>& x) {
  if (x.size() != params.w1.cols()) {
    throw ValidationError("SWIG input has length " + std::to_string(x.size()) + ", expected " +
                          std::to_string(params.w1.cols()));
  }
  const Vector<Scalar> input = x.template cast<Scalar>();
  const Vector<Scalar> hidden = (params.w1 * input + params.b1).cwiseMax(Scalar(0));
  return stable_softmax(params.w2 * hidden + params.b2);
}

/// Fusion weights for every row of `inputs` (N x input_dim -> N x num_weight).
template <typename Scalar, typename Derived>
RowMatrix<Scalar> swig_forward_batch(const SwigParams<Scalar>& params, const Eigen::MatrixBase<Derived>& inputs) {
  if (inputs.cols() != params.w1.cols()) {
    throw ValidationError("SWIG inputs have width " + std::to_string(inputs.cols()) + ", expected " +
                          std::to_string(params.w1.cols()));
  }
  RowMatrix<Scalar> hidden = inputs.template cast<Scalar>() * params.w1.transpose();
  hidden.rowwise() += params.b1.transpose();
  hidden = hidden.cwiseMax(Scalar(0));
  RowMatrix<Scalar> logits = hidden * params.w2.transpose();
  logits.rowwise() += params.b2.transpose();
  return softmax_rows(logits);
}

/// Weighted fusion driven by the generator. With anchor_fixed the head
/// weights the non-anchor models (ascending index) and the anchor adds at
/// 1.0; otherwise it weights all models and rows form a convex mixture.
template <typename Scalar>
ScoreMatrix t_predict(const SwigParams<Scalar>& params, const SwigConfig& config, const RowMatrix<double>& inputs,
                      const ProbRefs& probs, std::size_t anchor_index) {
  const RowMatrix<double> weights = swig_forward_batch(params, inputs).template cast<double>();
  if (config.anchor_fixed) {
    const auto [weak, anchor] = split_anchor(probs, anchor_index);
    if (static_cast<Index>(weak.size()) != config.num_weight) {
      throw ValidationError("generator emits " + std::to_string(config.num_weight) + " weights for " +
                            std::to_string(weak.size()) + " weak models");
    }
    return fuse(weak, weights, anchor);
  }
  if (static_cast<Index>(probs.size()) != config.num_weight) {
    throw ValidationError("generator emits " + std::to_string(config.num_weight) + " weights for " +
                          std::to_string(probs.size()) + " models");
  }
  return fuse(probs, weights);
}

inline constexpr double kLossFloor = 1e-12;

/// -ln(row[label]) with the probability clamped at 1e-12. `row` must be a
/// probability vector; anchor-fixed scores are divided by their sum first.
template <typename Derived>
double swig_loss(const Eigen::MatrixBase<Derived>& row, int label) {
  return -std::log(std::max(static_cast<double>(row(label)), kLossFloor));
}

template <typename Scalar>
struct BatchGradient {
  SwigGradients<Scalar> grads;
  double mean_loss = 0.0;
};

/// Mean loss and mean gradients over the samples listed in `batch`.
/// Probability rows are treated as constants.
template <typename Scalar>
BatchGradient<Scalar> swig_backward(const SwigParams<Scalar>& params, const SwigConfig& config,
                                    const RowMatrix<double>& inputs, const ProbRefs& probs,
                                    std::size_t anchor_index, const LabelVector& labels,
                                    std::span<const std::size_t> batch) {
  if (batch.empty()) throw ValidationError("empty batch");
  const auto B = static_cast<Index>(batch.size());
  const Index m = config.num_weight;

  // Models the head weights, and the fixed anchor (anchor-fixed mode only).
  ProbRefs weighted = probs;
  const ProbMatrix* anchor = nullptr;
  if (config.anchor_fixed) std::tie(weighted, anchor) = split_anchor(probs, anchor_index);
  if (static_cast<Index>(weighted.size()) != m) {
    throw ValidationError("generator emits " + std::to_string(m) + " weights for " +
                          std::to_string(weighted.size()) + " models");
  }

  RowMatrix<Scalar> x(B, inputs.cols());
  for (Index b = 0; b < B; ++b) x.row(b) = inputs.row(static_cast<Index>(batch[static_cast<std::size_t>(b)])).template cast<Scalar>();

  RowMatrix<Scalar> pre = x * params.w1.transpose();
  pre.rowwise() += params.b1.transpose();
  const RowMatrix<Scalar> hidden = pre.cwiseMax(Scalar(0));
  RowMatrix<Scalar> logits = hidden * params.w2.transpose();
  logits.rowwise() += params.b2.transpose();
  const RowMatrix<Scalar> omega = softmax_rows(logits);

  // d loss / d logits, one row per sample, already divided by B.
  RowMatrix<Scalar> d_logits(B, m);
  double loss_sum = 0.0;
  Vector<Scalar> g(m);
  for (Index b = 0; b < B; ++b) {
    const auto s = static_cast<Index>(batch[static_cast<std::size_t>(b)]);
    const int y = labels[static_cast<std::size_t>(s)];
    double label_mass = 0.0;  // fused score of the label
    double row_mass = 0.0;    // fused row sum
    for (Index i = 0; i < m; ++i) {
      const auto& P = weighted[static_cast<std::size_t>(i)].get();
      label_mass += static_cast<double>(omega(b, i)) * P(s, y);
      row_mass += static_cast<double>(omega(b, i)) * P.row(s).sum();
    }
    if (anchor) {
      label_mass += (*anchor)(s, y);
      row_mass += anchor->row(s).sum();
    }
    const double q = anchor ? label_mass / row_mass : label_mass;
    loss_sum += -std::log(std::max(q, kLossFloor));

    if (q > kLossFloor) {
      for (Index i = 0; i < m; ++i) {
        const auto& P = weighted[static_cast<std::size_t>(i)].get();
        double gi = -P(s, y) / label_mass;
        if (anchor) gi += P.row(s).sum() / row_mass;
        g(i) = static_cast<Scalar>(gi);
      }
    } else {
      g.setZero();
    }
    const Scalar centre = omega.row(b).dot(g.transpose());
    for (Index i = 0; i < m; ++i) d_logits(b, i) = omega(b, i) * (g(i) - centre) / static_cast<Scalar>(B);
  }

  BatchGradient<Scalar> out;
  out.mean_loss = loss_sum / static_cast<double>(B);
  out.grads.w2 = d_logits.transpose() * hidden;
  out.grads.b2 = d_logits.colwise().sum().transpose();
  RowMatrix<Scalar> d_hidden = d_logits * params.w2;
  d_hidden = d_hidden.cwiseProduct((pre.array() > Scalar(0)).template cast<Scalar>().matrix());
  out.grads.w1 = d_hidden.transpose() * x;
  out.grads.b1 = d_hidden.colwise().sum().transpose();
  return out;
}

struct TrainConfig {
  int epochs = 5;
  Index batch_size = 128;
  double initial_lr = 5e-3;
  double momentum = 0.9;
  int warmup_epochs = 1;
  double warmup_lr = 1e-5;
  std::uint64_t seed = 1;

  void validate() const;
  /// Constant warmup, then cosine decay from initial_lr toward zero over the
  /// remaining epochs. Epochs are 0-based.
  double learning_rate(int epoch) const;
};

template <typename Scalar = double>
struct TrainResult {
  SwigParams<Scalar> params;
  std::vector<double> epoch_losses;  // mean training loss per epoch
};

/// Mini-batch gradient descent with momentum over a seeded shuffle per epoch.
/// Aborts with ValidationError naming epoch and batch on a non-finite loss.
template <typename Scalar = double>
TrainResult<Scalar> swig_train(const RowMatrix<double>& inputs, const ProbRefs& probs, std::size_t anchor_index,
                               const LabelVector& labels, const SwigConfig& config, const TrainConfig& train) {
  train.validate();
  config.validate();
  if (labels.size() == 0) throw ValidationError("empty training split");
  if (static_cast<std::size_t>(inputs.rows()) != labels.size()) {
    throw ValidationError("training inputs have " + std::to_string(inputs.rows()) + " rows for " +
                          std::to_string(labels.size()) + " labels");
  }
  if (inputs.cols() != config.input_dim) {
    throw ValidationError("training inputs have width " + std::to_string(inputs.cols()) + ", config expects " +
                          std::to_string(config.input_dim));
  }
  const auto [rows, cols] = common_shape(probs);
  (void)cols;
  if (static_cast<std::size_t>(rows) != labels.size()) throw ValidationError("probability rows != label count");

  TrainResult<Scalar> result;
  result.params = swig_init<Scalar>(config, train.seed);
  auto velocity = SwigParams<Scalar>::zeros_like(result.params);
  const auto mu = static_cast<Scalar>(train.momentum);
  const auto n = labels.size();
  const auto batch_size = static_cast<std::size_t>(train.batch_size);

  for (int epoch = 0; epoch < train.epochs; ++epoch) {
    const auto lr = static_cast<Scalar>(train.learning_rate(epoch));
    Philox4x32 rng(train.seed, 0x5348554646000000ull + static_cast<std::uint64_t>(epoch));
    const std::vector<std::size_t> order = permutation(n, rng);
    double epoch_loss = 0.0;
    for (std::size_t begin = 0, batch_no = 0; begin < n; begin += batch_size, ++batch_no) {
      const std::span<const std::size_t> batch(order.data() + begin, std::min(batch_size, n - begin));
      const auto diverged = [&] {
        return ValidationError("non-finite loss at epoch " + std::to_string(epoch + 1) + ", batch " +
                               std::to_string(batch_no + 1));
      };
      // Shapes were checked above, so a failure here means overflow.
      BatchGradient<Scalar> step;
      try {
        step = swig_backward(result.params, config, inputs, probs, anchor_index, labels, batch);
      } catch (const ValidationError&) {
        throw diverged();
      }
      if (!std::isfinite(step.mean_loss) || !step.grads.all_finite()) throw diverged();
      epoch_loss += step.mean_loss * static_cast<double>(batch.size());
      velocity.w1 = mu * velocity.w1 + step.grads.w1;
      velocity.b1 = mu * velocity.b1 + step.grads.b1;
      velocity.w2 = mu * velocity.w2 + step.grads.w2;
      velocity.b2 = mu * velocity.b2 + step.grads.b2;
      result.params.w1 -= lr * velocity.w1;
      result.params.b1 -= lr * velocity.b1;
      result.params.w2 -= lr * velocity.w2;
      result.params.b2 -= lr * velocity.b2;
      if (!result.params.all_finite()) throw diverged();
    }
    result.epoch_losses.push_back(epoch_loss / static_cast<double>(n));
  }
  return result;
}

/// Provenance stored next to trained parameters.
struct SwigMetadata {
  std::vector<std::string> model_names;
  std::vector<Index> feature_dims;
  std::size_t anchor_index = 0;
  std::vector<std::string> source_classes;
};

struct SavedSwig {
  SwigParams<double> params;
  SwigConfig config;
  SwigMetadata meta;
};

/// Writes w1/b1/w2/b2 as VET1 tensors plus swig.json into `dir`. Parameters
/// are stored as float32.
void save_swig(const std::filesystem::path& dir, const SavedSwig& swig);
SavedSwig load_swig(const std::filesystem::path& dir);

}  // namespace vlme
