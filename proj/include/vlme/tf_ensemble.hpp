#pragma once

// Training-free ensemble: static weak-model weights chosen from a grid to
// maximize accuracy on a labeled search set, with the anchor fixed at 1.0.

#include "vlme/types.hpp"

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace vlme {

/// Admissible weight values, ascending and duplicate-free.
struct WeightGrid {
  std::vector<double> values;

  /// {0.1, 0.2, ..., 1.0}.
  static WeightGrid standard();
  /// Parses "start:stop:step"; the step must divide the range within 1e-9.
  static WeightGrid parse(std::string_view text);
  static WeightGrid from_values(std::vector<double> values);

  bool contains(double v) const;
  std::string to_string() const;
};

struct StaticWeights {
  std::vector<double> values;  // one per weak model, ascending model index
  WeightGrid grid;
};

enum class SearchMode { exhaustive, coordinate_greedy };

std::string_view to_string(SearchMode mode);
SearchMode parse_search_mode(std::string_view text);

struct SearchResult {
  StaticWeights weights;
  double best_accuracy = 0.0;
  std::uint64_t evaluated_count = 0;
  SearchMode mode = SearchMode::exhaustive;
  /// Accuracy after each coordinate update (greedy mode only).
  std::vector<double> accuracy_trace;
};

struct SearchOptions {
  std::uint64_t budget = 1'000'000;
  unsigned threads = 1;
};

/// fused = sum_i weights_i * weak_i + anchor.
ScoreMatrix tf_predict(std::span<const double> weights, const ProbRefs& weak, const ProbMatrix& anchor);
inline ScoreMatrix tf_predict(const StaticWeights& w, const ProbRefs& weak, const ProbMatrix& anchor) {
  return tf_predict(w.values, weak, anchor);
}

/// Exact maximizer over the full product grid. Ties resolve to the
/// lexicographically smallest weight vector, independent of thread count.
SearchResult exhaustive_search(const ProbRefs& weak, const ProbMatrix& anchor, const LabelVector& labels,
                               const WeightGrid& grid, const SearchOptions& options = {});

/// Coordinate ascent from the all-minimum point, one model at a time in
/// ascending index order, until a sweep changes nothing or `sweeps` run out.
SearchResult coordinate_greedy(const ProbRefs& weak, const ProbMatrix& anchor, const LabelVector& labels,
                               const WeightGrid& grid, int sweeps = 10, const SearchOptions& options = {});

}  // namespace vlme
