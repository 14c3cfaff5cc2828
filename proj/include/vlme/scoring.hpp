#pragma once

// Core classification math: stable softmax, temperature-scaled cosine
// probabilities, argmax with lowest-index tie-break, top-1 accuracy.

#include "vlme/error.hpp"
#include "vlme/types.hpp"

#include <cmath>
#include <string>

namespace vlme {

/// exp(s - max s) / sum exp(s - max s). Rejects NaN and infinite scores.
template <typename Derived>
Vector<typename Derived::Scalar> stable_softmax(const Eigen::MatrixBase<Derived>& scores) {
  using Scalar = typename Derived::Scalar;
  if (scores.size() == 0) throw ValidationError("softmax of an empty score vector");
  if (!scores.allFinite()) throw ValidationError("softmax input contains NaN or infinity");
  const Scalar top = scores.maxCoeff();
  Vector<Scalar> out = (scores.array() - top).exp().matrix();
  out /= out.sum();
  return out;
}

/// Row-wise stable softmax of a score matrix.
template <typename Derived>
RowMatrix<typename Derived::Scalar> softmax_rows(const Eigen::MatrixBase<Derived>& scores) {
  using Scalar = typename Derived::Scalar;
  if (!scores.allFinite()) throw ValidationError("softmax input contains NaN or infinity");
  RowMatrix<Scalar> out = scores;
  for (Index r = 0; r < out.rows(); ++r) {
    auto row = out.row(r);
    row.array() = (row.array() - row.maxCoeff()).exp();
    row /= row.sum();
  }
  return out;
}

/// Copy of `m` with unit-L2 rows; zero-norm rows are rejected.
template <typename Derived>
RowMatrix<typename Derived::Scalar> normalized_rows(const Eigen::MatrixBase<Derived>& m, const char* what) {
  RowMatrix<typename Derived::Scalar> out = m;
  for (Index r = 0; r < out.rows(); ++r) {
    const auto norm = out.row(r).norm();
    if (!(norm > 0) || !std::isfinite(norm)) {
      throw ValidationError(std::string("degenerate input: ") + what + " row " + std::to_string(r) +
                            " has zero or non-finite norm");
    }
    out.row(r) /= norm;
  }
  return out;
}

/// Row i = softmax(cos(f_i, c_k) / temperature) over classes k.
template <typename DerivedF, typename DerivedC>
RowMatrix<typename DerivedF::Scalar> probs_from_features(const Eigen::MatrixBase<DerivedF>& features,
                                                          const Eigen::MatrixBase<DerivedC>& class_emb,
                                                          typename DerivedF::Scalar temperature) {
  if (!(temperature > 0) || !std::isfinite(temperature)) {
    throw ValidationError("temperature must be a positive finite number");
  }
  if (features.cols() != class_emb.cols()) {
    throw ValidationError("feature dim " + std::to_string(features.cols()) + " != class embedding dim " +
                          std::to_string(class_emb.cols()));
  }
  if (class_emb.rows() < 2) throw ValidationError("need at least two classes");
  const auto f = normalized_rows(features, "feature");
  const auto c = normalized_rows(class_emb, "class embedding");
  RowMatrix<typename DerivedF::Scalar> cosine = f * c.transpose();
  return softmax_rows(cosine / temperature);
}

/// Index of the largest entry; ties go to the lowest index.
template <typename Derived>
Index argmax(const Eigen::MatrixBase<Derived>& row) {
  Index best = 0;
  for (Index k = 1; k < row.size(); ++k) {
    if (row(k) > row(best)) best = k;
  }
  return best;
}

template <typename Derived>
std::vector<int> predictions(const Eigen::MatrixBase<Derived>& scores) {
  std::vector<int> out(static_cast<std::size_t>(scores.rows()));
  for (Index r = 0; r < scores.rows(); ++r) out[static_cast<std::size_t>(r)] = static_cast<int>(argmax(scores.row(r)));
  return out;
}

/// Number of rows whose argmax equals the label.
template <typename Derived>
std::size_t correct_count(const Eigen::MatrixBase<Derived>& scores, const LabelVector& labels) {
  if (static_cast<std::size_t>(scores.rows()) != labels.size()) {
    throw ValidationError("score rows " + std::to_string(scores.rows()) + " != label count " +
                          std::to_string(labels.size()));
  }
  if (scores.cols() != labels.num_classes) {
    throw ValidationError("score columns " + std::to_string(scores.cols()) + " != class count " +
                          std::to_string(labels.num_classes));
  }
  std::size_t hits = 0;
  for (Index r = 0; r < scores.rows(); ++r) {
    if (argmax(scores.row(r)) == labels[static_cast<std::size_t>(r)]) ++hits;
  }
  return hits;
}

/// Top-1 accuracy in [0, 1]. Works on probabilities or unnormalized scores.
template <typename Derived>
double accuracy(const Eigen::MatrixBase<Derived>& scores, const LabelVector& labels) {
  if (labels.size() == 0) throw ValidationError("accuracy over zero samples");
  return static_cast<double>(correct_count(scores, labels)) / static_cast<double>(labels.size());
}

/// Divides every row by its sum. Display only; never changes the argmax.
template <typename Derived>
RowMatrix<typename Derived::Scalar> renormalized_rows(const Eigen::MatrixBase<Derived>& scores) {
  RowMatrix<typename Derived::Scalar> out = scores;
  for (Index r = 0; r < out.rows(); ++r) out.row(r) /= out.row(r).sum();
  return out;
}

}  // namespace vlme
