#include "vlme/tf_ensemble.hpp"

#include "vlme/error.hpp"
#include "vlme/fusion.hpp"
#include "vlme/parallel.hpp"
#include "vlme/scoring.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <limits>
#include <sstream>

namespace vlme {
namespace {

// Snaps k * step arithmetic back onto short decimals (0.30000000000000004 -> 0.3).
double snap(double v) { return std::round(v * 1e9) / 1e9; }

double parse_number(std::string_view text, std::string_view what) {
  double v = 0.0;
  const auto* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, v);
  if (ec != std::errc() || ptr != end) {
    throw ValidationError("grid " + std::string(what) + " '" + std::string(text) + "' is not a number");
  }
  return v;
}

// Scores one candidate weight vector against the search set. Uses the same
// per-entry arithmetic as fuse(), so counts agree with tf_predict + accuracy.
class GridEvaluator {
 public:
  GridEvaluator(const ProbRefs& weak, const ProbMatrix& anchor, const LabelVector& labels)
      : weak_(weak), anchor_(anchor), labels_(labels) {
    const auto [rows, cols] = common_shape(weak);
    if (anchor.rows() != rows || anchor.cols() != cols) {
      throw ValidationError("anchor shape differs from the weak models");
    }
    if (static_cast<std::size_t>(rows) != labels.size() || cols != labels.num_classes) {
      throw ValidationError("search-set labels do not match the probability matrices");
    }
    rows_ = rows;
    cols_ = cols;
  }

  std::size_t correct(std::span<const double> weights, std::vector<double>& terms) const {
    terms.resize(weak_.size() + 1);
    std::size_t hits = 0;
    for (Index s = 0; s < rows_; ++s) {
      double best = -std::numeric_limits<double>::infinity();
      Index best_k = 0;
      for (Index k = 0; k < cols_; ++k) {
        for (std::size_t i = 0; i < weak_.size(); ++i) terms[i] = weights[i] * weak_[i].get()(s, k);
        terms[weak_.size()] = anchor_(s, k);
        const double v = ordered_sum(terms);
        if (v > best) {
          best = v;
          best_k = k;
        }
      }
      if (best_k == labels_[static_cast<std::size_t>(s)]) ++hits;
    }
    return hits;
  }

  double accuracy_of(std::size_t hits) const { return static_cast<double>(hits) / static_cast<double>(rows_); }

 private:
  const ProbRefs& weak_;
  const ProbMatrix& anchor_;
  const LabelVector& labels_;
  Index rows_ = 0;
  Index cols_ = 0;
};

void check_inputs(const ProbRefs& weak, const WeightGrid& grid) {
  if (weak.empty()) throw ValidationError("weight search needs at least one weak model");
  if (grid.values.empty()) throw ValidationError("weight grid is empty");
}

}  // namespace

WeightGrid WeightGrid::standard() {
  return {{0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0}};
}

WeightGrid WeightGrid::parse(std::string_view text) {
  const auto first = text.find(':');
  const auto second = first == std::string_view::npos ? first : text.find(':', first + 1);
  if (second == std::string_view::npos || text.find(':', second + 1) != std::string_view::npos) {
    throw ValidationError("grid must be start:stop:step, got '" + std::string(text) + "'");
  }
  const double start = parse_number(text.substr(0, first), "start");
  const double stop = parse_number(text.substr(first + 1, second - first - 1), "stop");
  const double step = parse_number(text.substr(second + 1), "step");
  if (!(step > 0)) throw ValidationError("grid step must be positive");
  if (!(stop >= start)) throw ValidationError("grid stop must not be below start");
  const double intervals = (stop - start) / step;
  const double whole = std::round(intervals);
  if (std::abs(intervals - whole) > 1e-9) {
    throw ValidationError("grid step " + std::string(text.substr(second + 1)) + " does not divide the range");
  }
  std::vector<double> values;
  for (long i = 0; i <= static_cast<long>(whole); ++i) values.push_back(snap(start + static_cast<double>(i) * step));
  return from_values(std::move(values));
}

WeightGrid WeightGrid::from_values(std::vector<double> values) {
  for (double v : values) {
    if (!std::isfinite(v) || v < 0) throw ValidationError("grid values must be finite and non-negative");
  }
  std::sort(values.begin(), values.end());
  values.erase(std::unique(values.begin(), values.end()), values.end());
  return {std::move(values)};
}

bool WeightGrid::contains(double v) const { return std::binary_search(values.begin(), values.end(), v); }

std::string WeightGrid::to_string() const {
  std::ostringstream os;
  os.precision(17);
  os << '{';
  for (std::size_t i = 0; i < values.size(); ++i) os << (i ? ", " : "") << values[i];
  os << '}';
  return os.str();
}

std::string_view to_string(SearchMode mode) {
  return mode == SearchMode::exhaustive ? "exhaustive" : "coordinate_greedy";
}

SearchMode parse_search_mode(std::string_view text) {
  if (text == "exhaustive") return SearchMode::exhaustive;
  if (text == "coordinate_greedy" || text == "greedy") return SearchMode::coordinate_greedy;
  throw ValidationError("unknown search mode '" + std::string(text) + "'");
}

ScoreMatrix tf_predict(std::span<const double> weights, const ProbRefs& weak, const ProbMatrix& anchor) {
  return fuse_static(weak, weights, &anchor);
}

SearchResult exhaustive_search(const ProbRefs& weak, const ProbMatrix& anchor, const LabelVector& labels,
                               const WeightGrid& grid, const SearchOptions& options) {
  check_inputs(weak, grid);
  const GridEvaluator eval(weak, anchor, labels);
  const std::size_t m = weak.size();
  const std::uint64_t radix = grid.values.size();

  std::uint64_t total = 1;
  for (std::size_t i = 0; i < m; ++i) {
    if (total > options.budget / radix) {
      throw ValidationError("grid has more than " + std::to_string(options.budget) +
                            " combinations; use coordinate_greedy instead");
    }
    total *= radix;
  }

  // Point f enumerates weight vectors lexicographically: model 0 is the most
  // significant digit, so a smaller f is a lexicographically smaller vector.
  auto decode = [&](std::uint64_t f, std::vector<double>& w) {
    for (std::size_t i = m; i-- > 0;) {
      w[i] = grid.values[f % radix];
      f /= radix;
    }
  };

  struct Best {
    std::size_t hits = 0;
    std::uint64_t point = std::numeric_limits<std::uint64_t>::max();
  };
  std::vector<Best> partial(worker_count(static_cast<std::size_t>(total), options.threads));
  parallel_for(static_cast<std::size_t>(total), options.threads, [&](std::size_t worker, std::size_t begin, std::size_t end) {
    Best local;
    std::vector<double> w(m), terms;
    for (std::size_t f = begin; f < end; ++f) {
      decode(f, w);
      const std::size_t hits = eval.correct(w, terms);
      if (hits > local.hits || local.point == std::numeric_limits<std::uint64_t>::max()) {
        local = {hits, f};
      }
    }
    partial[worker] = local;
  });

  Best best;
  for (const auto& p : partial) {
    if (p.point == std::numeric_limits<std::uint64_t>::max()) continue;
    if (best.point == std::numeric_limits<std::uint64_t>::max() || p.hits > best.hits ||
        (p.hits == best.hits && p.point < best.point)) {
      best = p;
    }
  }

  SearchResult result;
  result.mode = SearchMode::exhaustive;
  result.weights.grid = grid;
  result.weights.values.resize(m);
  decode(best.point, result.weights.values);
  result.best_accuracy = eval.accuracy_of(best.hits);
  result.evaluated_count = total;
  return result;
}

SearchResult coordinate_greedy(const ProbRefs& weak, const ProbMatrix& anchor, const LabelVector& labels,
                               const WeightGrid& grid, int sweeps, const SearchOptions& options) {
  (void)options;
  check_inputs(weak, grid);
  if (sweeps < 1) throw ValidationError("coordinate_greedy needs at least one sweep");
  const GridEvaluator eval(weak, anchor, labels);
  const std::size_t m = weak.size();

  std::vector<std::size_t> choice(m, 0);
  std::vector<double> w(m, grid.values.front()), terms;
  std::size_t best_hits = eval.correct(w, terms);

  SearchResult result;
  result.mode = SearchMode::coordinate_greedy;
  result.evaluated_count = 1;
  result.accuracy_trace.push_back(eval.accuracy_of(best_hits));

  for (int sweep = 0; sweep < sweeps; ++sweep) {
    bool changed = false;
    for (std::size_t i = 0; i < m; ++i) {
      std::size_t pick = choice[i];
      for (std::size_t g = 0; g < grid.values.size(); ++g) {
        if (g == choice[i]) continue;
        w[i] = grid.values[g];
        const std::size_t hits = eval.correct(w, terms);
        ++result.evaluated_count;
        // Strict improvement only: ties keep the incumbent, so ascent terminates.
        if (hits > best_hits) {
          best_hits = hits;
          pick = g;
        }
      }
      changed = changed || pick != choice[i];
      choice[i] = pick;
      w[i] = grid.values[pick];
      result.accuracy_trace.push_back(eval.accuracy_of(best_hits));
    }
    if (!changed) break;
  }

  result.weights = {w, grid};
  result.best_accuracy = eval.accuracy_of(best_hits);
  return result;
}

}  // namespace vlme
