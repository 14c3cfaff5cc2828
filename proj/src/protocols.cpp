#include "vlme/protocols.hpp"

#include "vlme/error.hpp"
#include "vlme/random.hpp"

#include <algorithm>
#include <set>

namespace vlme {
namespace {

void check_class_space(const DatasetManifest& a, const DatasetManifest& b) {
  if (a.class_names != b.class_names) {
    throw ValidationError("class-space mismatch between " + a.dataset_name + " (" + a.path.string() + ") and " +
                          b.dataset_name + " (" + b.path.string() + ")");
  }
}

// Mean of the present values of one field; all-or-nothing across blocks.
std::optional<double> mean_field(std::span<const MetricBlock> blocks, std::optional<double> MetricBlock::*field) {
  std::size_t present = 0;
  double sum = 0.0;
  for (const auto& b : blocks) {
    if (b.*field) {
      ++present;
      sum += *(b.*field);
    }
  }
  if (present == 0) return std::nullopt;
  if (present != blocks.size()) throw ValidationError("cannot average metric blocks with different fields");
  return sum / static_cast<double>(present);
}

void finish(EvalReport& report) {
  if (report.runs.empty()) return;
  const auto& first = report.runs.front().per_dataset;
  report.per_dataset.clear();
  std::vector<MetricBlock> dataset_means;
  for (std::size_t d = 0; d < first.size(); ++d) {
    std::vector<MetricBlock> over_seeds;
    for (const auto& run : report.runs) over_seeds.push_back(run.per_dataset.at(d).metrics);
    report.per_dataset.push_back({first[d].dataset, average_blocks(over_seeds)});
    dataset_means.push_back(report.per_dataset.back().metrics);
  }
  report.averaged = average_blocks(dataset_means);
}

EvalReport transfer(const char* protocol, std::span<const FittedEnsemble> fitted,
                    std::span<const std::uint64_t> seeds, std::span<const DatasetManifest> targets,
                    bool same_label_space) {
  if (fitted.empty()) throw ValidationError("no fitted ensemble to transfer");
  if (seeds.size() != fitted.size()) throw ValidationError("need one seed per fitted ensemble");
  if (targets.empty()) throw ValidationError("no target datasets");
  EvalReport report;
  report.protocol = protocol;
  report.strategy = std::string(to_string(fitted.front().strategy));
  report.seeds.assign(seeds.begin(), seeds.end());
  for (std::size_t i = 0; i < fitted.size(); ++i) {
    const auto& f = fitted[i];
    if (f.swig && f.swig->config.input_type == SwigInput::logits) {
      throw ValidationError("a generator trained on logits depends on the source class count; "
                            "transfer needs a features-input generator");
    }
    SeedRun run;
    run.seed = seeds[i];
    for (const auto& target : targets) {
      if (same_label_space && !f.source_classes.empty() && target.class_names != f.source_classes) {
        throw ValidationError("label-space mismatch: " + target.dataset_name + " does not share the source classes");
      }
      MetricBlock b;
      b.acc = evaluate(f, target);
      run.per_dataset.push_back({target.dataset_name, b});
    }
    run.loss_trace = f.loss_trace;
    report.runs.push_back(std::move(run));
  }
  finish(report);
  return report;
}

}  // namespace

ClassSplit base_new_split(int num_classes) {
  if (num_classes < 2) throw ValidationError("base/new split needs at least two classes");
  ClassSplit split;
  const int base = (num_classes + 1) / 2;
  for (int c = 0; c < num_classes; ++c) (c < base ? split.base_ids : split.new_ids).push_back(c);
  return split;
}

ShotSample sample_k_shot(const LabelVector& labels, std::span<const int> base_ids, int k, std::uint64_t seed) {
  if (k < 1) throw ValidationError("shots per class must be at least 1");
  ShotSample out;
  out.shots_per_class = k;
  out.seed = seed;
  for (int c : base_ids) {
    if (c < 0 || c >= labels.num_classes) throw ValidationError("base class " + std::to_string(c) + " out of range");
    std::vector<std::size_t> members;
    for (std::size_t i = 0; i < labels.size(); ++i) {
      if (labels[i] == c) members.push_back(i);
    }
    if (members.empty()) {
      out.skipped_classes.push_back(c);
      continue;
    }
    // Partial Fisher-Yates on a per-class stream.
    Philox4x32 rng(seed, static_cast<std::uint64_t>(c));
    const std::size_t take = std::min<std::size_t>(static_cast<std::size_t>(k), members.size());
    for (std::size_t i = 0; i < take; ++i) {
      const auto j = i + static_cast<std::size_t>(rng.below(members.size() - i));
      std::swap(members[i], members[j]);
    }
    out.indices.insert(out.indices.end(), members.begin(), members.begin() + static_cast<std::ptrdiff_t>(take));
  }
  std::sort(out.indices.begin(), out.indices.end());
  return out;
}

double harmonic_mean(double a, double b) {
  if (a + b == 0.0) throw ValidationError("harmonic mean of two zeros is undefined");
  return 2.0 * a * b / (a + b);
}

MetricBlock average_blocks(std::span<const MetricBlock> blocks) {
  if (blocks.empty()) throw ValidationError("nothing to average");
  MetricBlock out;
  out.base_acc = mean_field(blocks, &MetricBlock::base_acc);
  out.new_acc = mean_field(blocks, &MetricBlock::new_acc);
  out.acc = mean_field(blocks, &MetricBlock::acc);
  if (out.base_acc && out.new_acc) out.hm = harmonic_mean(*out.base_acc, *out.new_acc);
  return out;
}

EvalReport run_zero_shot(std::span<const DatasetManifest> datasets, Strategy strategy, const FitOptions& options) {
  if (strategy == Strategy::tf || strategy == Strategy::tune) {
    throw ValidationError("zero-shot evaluation takes zs, mean or caw_all");
  }
  if (datasets.empty()) throw ValidationError("no datasets");
  EvalReport report;
  report.protocol = "zero-shot";
  report.strategy = std::string(to_string(strategy));
  SeedRun run;
  for (const auto& d : datasets) {
    const FittedEnsemble f = fit(strategy, d, options);
    MetricBlock b;
    b.acc = evaluate(f, d);
    run.per_dataset.push_back({d.dataset_name, b});
  }
  report.runs.push_back(std::move(run));
  finish(report);
  return report;
}

BaseToNewSplit split_base_to_new(const DatasetManifest& train, const DatasetManifest& test) {
  check_class_space(train, test);
  check_same_models(train, test);
  const ClassSplit split = base_new_split(train.num_classes);
  if (split.new_ids.size() < 2) throw ValidationError("base-to-new needs at least two new classes (K >= 4)");
  return {select_classes(train, split.base_ids), select_classes(test, split.base_ids),
          select_classes(test, split.new_ids)};
}

EvalReport run_base_to_new(std::span<const BaseToNewSplit> datasets, Strategy strategy,
                           std::span<const std::uint64_t> seeds, const FitOptions& options, int shots) {
  if (datasets.empty()) throw ValidationError("no datasets");
  if (seeds.empty()) throw ValidationError("no seeds");
  for (const auto& d : datasets) {
    check_class_space(d.base_train, d.base_test);
    check_same_models(d.base_train, d.base_test);
    check_same_models(d.base_train, d.new_test);
    const std::set<std::string> base(d.base_train.class_names.begin(), d.base_train.class_names.end());
    for (const auto& c : d.new_test.class_names) {
      if (base.count(c)) throw ValidationError("class-space mismatch: new class '" + c + "' is also a base class");
    }
  }

  EvalReport report;
  report.protocol = "base-to-new";
  report.strategy = std::string(to_string(strategy));
  report.seeds.assign(seeds.begin(), seeds.end());
  const bool needs_fit = strategy == Strategy::tf || strategy == Strategy::tune;

  for (const auto seed : seeds) {
    SeedRun run;
    run.seed = seed;
    for (const auto& d : datasets) {
      FittedEnsemble f;
      if (needs_fit) {
        std::vector<int> all_base(static_cast<std::size_t>(d.base_train.num_classes));
        for (int c = 0; c < d.base_train.num_classes; ++c) all_base[static_cast<std::size_t>(c)] = c;
        const ShotSample sample = sample_k_shot(d.base_train.labels, all_base, shots, seed);
        for (int c : sample.skipped_classes) {
          report.diagnostics.push_back(d.base_train.dataset_name + ": seed " + std::to_string(seed) + ": base class " +
                                       std::to_string(c) + " has no training samples; skipped");
        }
        FitOptions seeded = options;
        seeded.train.seed = seed;
        f = fit(strategy, select_samples(d.base_train, sample.indices), seeded);
        if (f.search && f.anchor_only_accuracy) {
          report.diagnostics.push_back(d.base_train.dataset_name + ": seed " + std::to_string(seed) +
                                       ": search-set accuracy " + std::to_string(f.search->best_accuracy) +
                                       " vs anchor-only " + std::to_string(*f.anchor_only_accuracy));
        }
        if (run.loss_trace.empty()) run.loss_trace = f.loss_trace;
      } else {
        f = fit(strategy, d.base_train, options);
      }
      MetricBlock b;
      b.base_acc = evaluate(f, d.base_test);
      b.new_acc = evaluate(f, d.new_test);
      b.hm = harmonic_mean(*b.base_acc, *b.new_acc);
      run.per_dataset.push_back({d.base_train.dataset_name, b});
    }
    report.runs.push_back(std::move(run));
  }
  finish(report);
  return report;
}

EvalReport run_cross_dataset(std::span<const FittedEnsemble> fitted, std::span<const std::uint64_t> seeds,
                             std::span<const DatasetManifest> targets) {
  return transfer("cross-dataset", fitted, seeds, targets, false);
}

EvalReport run_domain_generalization(std::span<const FittedEnsemble> fitted, std::span<const std::uint64_t> seeds,
                                     std::span<const DatasetManifest> variants) {
  return transfer("domain-generalization", fitted, seeds, variants, true);
}

}  // namespace vlme
