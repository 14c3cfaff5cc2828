#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <functional>
#include <string>
#include <vector>

namespace vlme {

template <typename Scalar>
using RowMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

using Index = Eigen::Index;

/// N x K row-stochastic class probabilities of one model.
using ProbMatrix = RowMatrix<double>;
/// N x d image features of one model.
using FeatureMatrix = RowMatrix<double>;
/// K x d text embeddings of one model.
using ClassEmbeddings = RowMatrix<double>;
/// N x K fused scores. Rows need not sum to one.
using ScoreMatrix = RowMatrix<double>;
/// N x m per-sample fusion weights.
using PerSampleWeights = RowMatrix<double>;

/// Borrowed views of several models' probability matrices, in model order.
using ProbRefs = std::vector<std::reference_wrapper<const ProbMatrix>>;

struct LabelVector {
  std::vector<int> values;
  int num_classes = 0;

  std::size_t size() const { return values.size(); }
  int operator[](std::size_t i) const { return values[i]; }
};

/// Throws ValidationError unless every label lies in [0, num_classes).
void validate_labels(const LabelVector& labels);

/// Throws ValidationError unless `probs` satisfies the ProbMatrix invariants
/// (N >= 1, K >= 2, entries in [0, 1], rows summing to one within `tolerance`).
void validate_prob_matrix(const ProbMatrix& probs, double tolerance = 1e-5);

}  // namespace vlme
