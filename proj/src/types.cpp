#include "vlme/types.hpp"

#include "vlme/error.hpp"

#include <cmath>
#include <string>

namespace vlme {

void validate_labels(const LabelVector& labels) {
  if (labels.num_classes < 2) throw ValidationError("need at least two classes");
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || labels[i] >= labels.num_classes) {
      throw ValidationError("label out of range: sample " + std::to_string(i) + " has label " +
                            std::to_string(labels[i]) + " with " + std::to_string(labels.num_classes) + " classes");
    }
  }
}

void validate_prob_matrix(const ProbMatrix& probs, double tolerance) {
  if (probs.rows() < 1) throw ValidationError("probability matrix has no rows");
  if (probs.cols() < 2) throw ValidationError("probability matrix needs at least two classes");
  for (Index r = 0; r < probs.rows(); ++r) {
    double sum = 0.0;
    for (Index k = 0; k < probs.cols(); ++k) {
      const double v = probs(r, k);
      if (!std::isfinite(v) || v < 0.0 || v > 1.0 + tolerance) {
        throw ValidationError("probability out of [0, 1] at row " + std::to_string(r) + ", class " +
                              std::to_string(k));
      }
      sum += v;
    }
    if (std::abs(sum - 1.0) > tolerance) {
      throw ValidationError("row-sum violation: row " + std::to_string(r) + " sums to " + std::to_string(sum));
    }
  }
}

}  // namespace vlme
