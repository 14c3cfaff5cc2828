#include "vlme/cli.hpp"

#include "vlme/ensemble.hpp"
#include "vlme/error.hpp"
#include "vlme/protocols.hpp"
#include "vlme/report.hpp"
#include "vlme/scoring.hpp"
#include "vlme/tensor_io.hpp"
#include "vlme/zs_ensemble.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <sstream>

namespace vlme {
namespace {

constexpr const char* kReportSchema = R"(Reports are JSON objects:
  kit               {"name": "vlme", "version"}
  command           the command line without --out/--threads
  effective_config  every option value used, defaults included
  seeds             seeds used (empty when the command is seed-free)
  manifests         [{"path", "dataset", "digest"}] with SHA-256 digests
  result            command-specific payload; accuracies are percentages
With --format table|csv, protocol-style results print as a table instead,
preceded by '# key: value' lines carrying the same provenance.)";

struct Common {
  std::string out = "-";
  unsigned threads = 1;
  std::string format = "json";
};

struct Options {
  Common common;
  std::vector<std::string> manifests;
  std::vector<std::string> models;
  bool renormalize = false;
  std::string scores_out;

  std::string grid = "0.1:1.0:0.1";
  std::string mode = "exhaustive";
  int sweeps = 10;
  std::uint64_t budget = 1'000'000;
  std::string weights_out;
  std::string weights;

  int epochs = 5;
  long batch = 128;
  double lr = 5e-3;
  double momentum = 0.9;
  std::uint64_t seed = 1;
  long downsample = 32;
  std::string input_type = "features";
  bool anchor_fixed = false;
  std::string params_out;
  std::string params;

  std::string kind;
  std::string strategy = "zs";
  std::vector<std::uint64_t> seeds{1, 2, 3};
  int shots = 16;
  std::vector<std::string> train, test, base_train, base_test, new_test, targets;
  std::string source;
};

std::string canonical_command(const std::vector<std::string>& args) {
  std::string cmd = "vlme";
  for (std::size_t i = 0; i < args.size(); ++i) {
    const auto& a = args[i];
    if (a == "--out" || a == "--threads") {
      ++i;
      continue;
    }
    if (a.rfind("--out=", 0) == 0 || a.rfind("--threads=", 0) == 0) continue;
    cmd += ' ';
    cmd += a;
  }
  return cmd;
}

std::vector<DatasetManifest> load_all(const std::vector<std::string>& paths) {
  std::vector<DatasetManifest> out;
  for (const auto& p : paths) out.push_back(load_manifest(p));
  return out;
}

OrderedJson manifest_refs(const std::vector<const DatasetManifest*>& ms) {
  OrderedJson out = OrderedJson::array();
  for (const auto* m : ms) {
    OrderedJson j;
    j["path"] = m->path.string();
    j["dataset"] = m->dataset_name;
    j["digest"] = m->digest;
    out.push_back(j);
  }
  return out;
}

FitOptions fit_options(const Options& o) {
  FitOptions f;
  f.grid = WeightGrid::parse(o.grid);
  f.mode = parse_search_mode(o.mode);
  f.sweeps = o.sweeps;
  f.budget = o.budget;
  f.downsample = o.downsample;
  f.input_type = parse_swig_input(o.input_type);
  f.anchor_fixed = o.anchor_fixed;
  f.train.epochs = o.epochs;
  f.train.batch_size = o.batch;
  f.train.initial_lr = o.lr;
  f.train.momentum = o.momentum;
  f.train.seed = o.seed;
  f.subset = o.models;
  f.threads = o.common.threads;
  return f;
}

OrderedJson search_config(const FitOptions& f) {
  OrderedJson j;
  j["grid"] = f.grid.values;
  j["mode"] = to_string(f.mode);
  j["sweeps"] = f.sweeps;
  j["budget"] = f.budget;
  j["anchor_weight"] = 1.0;
  j["tie_break"] = "lexicographically smallest weights";
  return j;
}

OrderedJson tune_config(const FitOptions& f) {
  OrderedJson j;
  j["epochs"] = f.train.epochs;
  j["batch_size"] = f.train.batch_size;
  j["initial_lr"] = f.train.initial_lr;
  j["momentum"] = f.train.momentum;
  j["warmup_epochs"] = f.train.warmup_epochs;
  j["warmup_lr"] = f.train.warmup_lr;
  j["schedule"] = "cosine";
  j["seed"] = f.train.seed;
  j["downsample"] = f.downsample;
  j["input_type"] = to_string(f.input_type);
  j["anchor_fixed"] = f.anchor_fixed;
  j["hidden_activation"] = "relu";
  j["output_activation"] = "softmax";
  j["loss"] = "mixture negative log-likelihood";
  return j;
}

OrderedJson swig_json(const SavedSwig& s) {
  OrderedJson j;
  j["input_dim"] = s.config.input_dim;
  j["hidden_dim"] = s.config.hidden_dim();
  j["num_weight"] = s.config.num_weight;
  j["input_type"] = to_string(s.config.input_type);
  j["anchor_fixed"] = s.config.anchor_fixed;
  return j;
}

class Runner {
 public:
  Runner(const std::vector<std::string>& args, std::ostream& out) : command_(canonical_command(args)), out_(out) {}

  void emit(const std::string& name, const Options& o, OrderedJson config, OrderedJson result,
            const std::vector<const DatasetManifest*>& manifests, const std::vector<std::uint64_t>& seeds,
            const EvalReport* report = nullptr) {
    config["format"] = o.common.format;
    OrderedJson j;
    j["kit"] = {{"name", "vlme"}, {"version", kVersion}};
    j["command"] = command_;
    j["subcommand"] = name;
    j["effective_config"] = std::move(config);
    j["seeds"] = seeds;
    j["manifests"] = manifest_refs(manifests);
    j["result"] = std::move(result);

    std::ostringstream text;
    if (report && o.common.format != "json") {
      text << "# kit: vlme " << kVersion << '\n';
      text << "# command: " << command_ << '\n';
      text << "# effective_config: " << j["effective_config"].dump() << '\n';
      for (const auto* m : manifests) text << "# manifest: " << m->path.string() << " sha256=" << m->digest << '\n';
      text << to_table(*report, o.common.format == "csv" ? ',' : '\0');
    } else {
      text << j.dump(2) << '\n';
    }
    if (o.common.out == "-") {
      out_ << text.str();
    } else {
      std::ofstream f(o.common.out, std::ios::binary | std::ios::trunc);
      if (!f) throw IoError("cannot write " + o.common.out);
      f << text.str();
      if (!f) throw IoError("write failed: " + o.common.out);
    }
  }

 private:
  std::string command_;
  std::ostream& out_;
};

std::vector<const DatasetManifest*> ptrs(const std::vector<DatasetManifest>& v) {
  std::vector<const DatasetManifest*> out;
  for (const auto& m : v) out.push_back(&m);
  return out;
}

EvalReport evaluation_report(const char* protocol, Strategy s, const std::vector<FittedEnsemble>& fitted,
                             const std::vector<DatasetManifest>& targets) {
  EvalReport r;
  r.protocol = protocol;
  r.strategy = std::string(to_string(s));
  SeedRun run;
  for (std::size_t i = 0; i < targets.size(); ++i) {
    MetricBlock b;
    b.acc = evaluate(fitted[i], targets[i]);
    run.per_dataset.push_back({targets[i].dataset_name, b});
  }
  r.runs.push_back(std::move(run));
  r.per_dataset = r.runs.front().per_dataset;
  std::vector<MetricBlock> blocks;
  for (const auto& d : r.per_dataset) blocks.push_back(d.metrics);
  r.averaged = average_blocks(blocks);
  return r;
}

void cmd_zero_shot(Runner& runner, const std::string& name, Strategy s, const Options& o) {
  const auto ms = load_all(o.manifests);
  FitOptions f = fit_options(o);
  const EvalReport report = run_zero_shot(ms, s, f);
  if (!o.scores_out.empty()) {
    ScoreMatrix scores = predict(fit(s, ms.front(), f), ms.front());
    if (o.renormalize) scores = renormalized_rows(scores);
    write_matrix(o.scores_out, scores);
  }
  OrderedJson config;
  config["strategy"] = to_string(s);
  config["models"] = o.models.empty() ? OrderedJson("all") : OrderedJson(o.models);
  if (s == Strategy::zs) config["anchor_weight"] = 1.0;
  config["scores_out"] = o.scores_out;
  config["renormalize_scores"] = o.renormalize;
  runner.emit(name, o, config, to_json(report), ptrs(ms), {}, &report);
}

void cmd_tf_search(Runner& runner, const Options& o) {
  const auto m = load_manifest(o.manifests.front());
  FitOptions f = fit_options(o);
  const FittedEnsemble fitted = fit(Strategy::tf, m, f);
  OrderedJson result = to_json(*fitted.search);
  result["anchor_only_accuracy"] = 100.0 * *fitted.anchor_only_accuracy;
  OrderedJson names = OrderedJson::array();
  for (std::size_t i = 0; i < m.models.size(); ++i) {
    if (i != m.anchor_index) names.push_back(m.models[i].name);
  }
  result["weak_models"] = names;
  result["anchor"] = m.models[m.anchor_index].name;
  if (!o.weights_out.empty()) {
    OrderedJson w;
    w["model_names"] = m.model_names();
    w["anchor_index"] = m.anchor_index;
    w["weights"] = fitted.search->weights.values;
    w["grid"] = fitted.search->weights.grid.values;
    std::ofstream file(o.weights_out);
    if (!file) throw IoError("cannot write " + o.weights_out);
    file << w.dump(2) << '\n';
  }
  OrderedJson config = search_config(f);
  config["weights_out"] = o.weights_out;
  runner.emit("tf-search", o, config, result, {&m}, {});
}

void cmd_tf_eval(Runner& runner, const Options& o) {
  std::ifstream in(o.weights);
  if (!in) throw IoError("cannot open " + o.weights);
  nlohmann::json w;
  try {
    w = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(o.weights + ": " + e.what());
  }
  const auto ms = load_all(o.manifests);
  std::vector<FittedEnsemble> fitted;
  for (const auto& m : ms) {
    StaticWeights sw;
    sw.values = w.at("weights").get<std::vector<double>>();
    sw.grid = WeightGrid::from_values(w.value("grid", sw.values));
    if (w.contains("model_names") && w.at("model_names").get<std::vector<std::string>>() != m.model_names()) {
      throw ValidationError(m.dataset_name + ": model list differs from " + o.weights);
    }
    fitted.push_back(fitted_from_weights(m, sw));
  }
  const EvalReport report = evaluation_report("evaluate", Strategy::tf, fitted, ms);
  OrderedJson config;
  config["weights"] = o.weights;
  config["weight_values"] = fitted.front().search->weights.values;
  config["anchor_weight"] = 1.0;
  runner.emit("tf-eval", o, config, to_json(report), ptrs(ms), {}, &report);
}

void cmd_tune(Runner& runner, const Options& o) {
  const auto m = load_manifest(o.manifests.front());
  FitOptions f = fit_options(o);
  const FittedEnsemble fitted = fit(Strategy::tune, m, f);
  if (!o.params_out.empty()) save_swig(o.params_out, *fitted.swig);
  OrderedJson result;
  result["swig"] = swig_json(*fitted.swig);
  result["loss_trace"] = fitted.loss_trace;
  OrderedJson lrs = OrderedJson::array();
  for (int e = 0; e < f.train.epochs; ++e) lrs.push_back(f.train.learning_rate(e));
  result["lr_trace"] = lrs;
  result["train_accuracy"] = 100.0 * evaluate(fitted, m);
  result["params_out"] = o.params_out;
  OrderedJson config = tune_config(f);
  config["params_out"] = o.params_out;
  runner.emit("tune", o, config, result, {&m}, {f.train.seed});
}

void cmd_t_eval(Runner& runner, const Options& o) {
  const FittedEnsemble fitted = fitted_from_swig(load_swig(o.params));
  const auto ms = load_all(o.manifests);
  const std::vector<FittedEnsemble> per(ms.size(), fitted);
  const EvalReport report = evaluation_report("evaluate", Strategy::tune, per, ms);
  OrderedJson config;
  config["params"] = o.params;
  config["swig"] = swig_json(*fitted.swig);
  runner.emit("t-eval", o, config, to_json(report), ptrs(ms), {}, &report);
}

void cmd_protocol(Runner& runner, const Options& o) {
  const Strategy s = parse_strategy(o.strategy);
  FitOptions f = fit_options(o);
  OrderedJson config;
  config["kind"] = o.kind;
  config["strategy"] = to_string(s);
  if (s == Strategy::tf) config["search"] = search_config(f);
  if (s == Strategy::tune) config["tune"] = tune_config(f);
  if (s == Strategy::mean || s == Strategy::caw_all) {
    config["models"] = o.models.empty() ? OrderedJson("all") : OrderedJson(o.models);
  }

  if (o.kind == "zero-shot") {
    const auto ms = load_all(o.targets);
    const EvalReport report = run_zero_shot(ms, s, f);
    runner.emit("protocol", o, config, to_json(report), ptrs(ms), {}, &report);
    return;
  }
  if (o.kind == "base-to-new") {
    std::vector<DatasetManifest> loaded;
    std::vector<BaseToNewSplit> splits;
    if (!o.train.empty() || !o.test.empty()) {
      if (o.train.size() != o.test.size()) throw ValidationError("--train and --test must pair up");
      for (std::size_t i = 0; i < o.train.size(); ++i) {
        loaded.push_back(load_manifest(o.train[i]));
        loaded.push_back(load_manifest(o.test[i]));
        splits.push_back(split_base_to_new(loaded[loaded.size() - 2], loaded.back()));
      }
      config["class_split"] = "first ceil(K/2) classes are base";
    } else {
      if (o.base_train.empty() || o.base_train.size() != o.base_test.size() ||
          o.base_train.size() != o.new_test.size()) {
        throw ValidationError("give --train/--test, or matching --base-train/--base-test/--new-test lists");
      }
      for (std::size_t i = 0; i < o.base_train.size(); ++i) {
        loaded.push_back(load_manifest(o.base_train[i]));
        loaded.push_back(load_manifest(o.base_test[i]));
        loaded.push_back(load_manifest(o.new_test[i]));
        splits.push_back({loaded[loaded.size() - 3], loaded[loaded.size() - 2], loaded.back()});
      }
    }
    config["shots"] = o.shots;
    const EvalReport report = run_base_to_new(splits, s, o.seeds, f, o.shots);
    runner.emit("protocol", o, config, to_json(report), ptrs(loaded), o.seeds, &report);
    return;
  }
  if (o.kind == "cross-dataset" || o.kind == "domain-generalization") {
    if (o.source.empty()) throw ValidationError("--source is required for " + o.kind);
    std::vector<DatasetManifest> loaded{load_manifest(o.source)};
    const auto targets = load_all(o.targets);
    std::vector<FittedEnsemble> fitted;
    const bool seeded = s == Strategy::tune;
    const std::vector<std::uint64_t> seeds = seeded ? o.seeds : std::vector<std::uint64_t>{o.seed};
    for (auto seed : seeds) {
      FitOptions per = f;
      per.train.seed = seed;
      fitted.push_back(fit(s, loaded.front(), per));
    }
    const EvalReport report = o.kind == "cross-dataset" ? run_cross_dataset(fitted, seeds, targets)
                                                        : run_domain_generalization(fitted, seeds, targets);
    for (const auto& t : targets) loaded.push_back(t);
    runner.emit("protocol", o, config, to_json(report), ptrs(loaded), seeds, &report);
    return;
  }
  throw ValidationError("unknown protocol kind '" + o.kind + "'");
}

void cmd_inspect(Runner& runner, const Options& o) {
  const auto m = load_manifest(o.manifests.front());
  OrderedJson result;
  result["dataset"] = m.dataset_name;
  result["num_samples"] = m.num_samples();
  result["num_classes"] = m.num_classes;
  result["anchor"] = m.models[m.anchor_index].name;
  OrderedJson models = OrderedJson::array();
  for (const auto& model : m.models) {
    OrderedJson j;
    j["name"] = model.name;
    j["source"] = model.source == ModelSource::probs ? "probs" : "features";
    j["feature_dim"] = model.feature_dim;
    j["probs_shape"] = {model.probs.rows(), model.probs.cols()};
    j["features_shape"] = model.features ? OrderedJson({model.features->rows(), model.features->cols()}) : OrderedJson();
    j["class_embeddings_shape"] = model.class_embeddings
                                      ? OrderedJson({model.class_embeddings->rows(), model.class_embeddings->cols()})
                                      : OrderedJson();
    j["temperature"] = model.temperature ? OrderedJson(*model.temperature) : OrderedJson();
    j["accuracy"] = 100.0 * accuracy(model.probs, m.labels);
    models.push_back(j);
  }
  result["models"] = models;
  runner.emit("inspect", o, OrderedJson::object(), result, {&m}, {});
}

void add_common(CLI::App* sub, Common& c) {
  sub->add_option("--out", c.out, "Report destination ('-' for standard output)");
  sub->add_option("--threads", c.threads, "Worker threads")->envname("VLME_THREADS")->check(CLI::Range(1u, 1024u));
  sub->add_option("--format", c.format, "json | table | csv")->check(CLI::IsMember({"json", "table", "csv"}));
}

void add_manifests(CLI::App* sub, Options& o, bool many) {
  auto* opt = sub->add_option("--manifest", o.manifests, many ? "Dataset manifest(s)" : "Dataset manifest")->required();
  if (!many) opt->expected(1);
}

void add_search(CLI::App* sub, Options& o) {
  sub->add_option("--grid", o.grid, "Weight grid start:stop:step");
  sub->add_option("--mode", o.mode, "exhaustive | greedy")->check(CLI::IsMember({"exhaustive", "greedy", "coordinate_greedy"}));
  sub->add_option("--sweeps", o.sweeps, "Greedy sweeps")->check(CLI::PositiveNumber);
  sub->add_option("--budget", o.budget, "Maximum exhaustive grid points");
}

void add_tune(CLI::App* sub, Options& o) {
  sub->add_option("--epochs", o.epochs, "Training epochs");
  sub->add_option("--batch", o.batch, "Batch size");
  sub->add_option("--lr", o.lr, "Initial learning rate");
  sub->add_option("--momentum", o.momentum, "Momentum");
  sub->add_option("--seed", o.seed, "Training seed");
  sub->add_option("--downsample", o.downsample, "Hidden width = input width / downsample");
  sub->add_option("--input-type", o.input_type, "features | logits")->check(CLI::IsMember({"features", "logits"}));
  sub->add_flag("--anchor-fixed", o.anchor_fixed, "Weight only the weak models; anchor fixed at 1.0");
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"vlme: ensembles of vision-language classifiers\n\n" + std::string(kReportSchema), "vlme"};
  app.require_subcommand(1, 1);
  Options o;

  auto* zs = app.add_subcommand("zs", "Confidence-weighted ensemble with the anchor fixed at 1.0");
  auto* mean = app.add_subcommand("mean", "Average of model probabilities");
  auto* caw = app.add_subcommand("caw-all", "Confidence-weighted mixture over all listed models");
  for (auto* sub : {zs, mean, caw}) {
    add_common(sub, o.common);
    add_manifests(sub, o, true);
    sub->add_option("--scores-out", o.scores_out, "Write fused scores of the first manifest as a VET1 tensor");
    sub->add_flag("--renormalize", o.renormalize, "Divide written scores by their row sums");
  }
  for (auto* sub : {mean, caw}) sub->add_option("--models", o.models, "Model names to combine (default: all)");

  auto* tf_search = app.add_subcommand("tf-search", "Search static weak-model weights on a labeled set");
  add_common(tf_search, o.common);
  add_manifests(tf_search, o, false);
  add_search(tf_search, o);
  tf_search->add_option("--weights-out", o.weights_out, "Write the chosen weights as JSON");

  auto* tf_eval = app.add_subcommand("tf-eval", "Evaluate saved static weights");
  add_common(tf_eval, o.common);
  add_manifests(tf_eval, o, true);
  tf_eval->add_option("--weights", o.weights, "Weights JSON from tf-search")->required();

  auto* tune = app.add_subcommand("tune", "Train the sample-aware weight generator");
  add_common(tune, o.common);
  add_manifests(tune, o, false);
  add_tune(tune, o);
  tune->add_option("--params-out", o.params_out, "Directory for trained parameters");

  auto* t_eval = app.add_subcommand("t-eval", "Evaluate a trained weight generator");
  add_common(t_eval, o.common);
  add_manifests(t_eval, o, true);
  t_eval->add_option("--params", o.params, "Directory written by tune")->required();

  auto* protocol = app.add_subcommand("protocol", "Run an evaluation protocol");
  add_common(protocol, o.common);
  protocol->add_option("--kind", o.kind, "zero-shot | base-to-new | cross-dataset | domain-generalization")
      ->required()
      ->check(CLI::IsMember({"zero-shot", "base-to-new", "cross-dataset", "domain-generalization"}));
  protocol->add_option("--strategy", o.strategy, "zs | mean | caw_all | tf | tune");
  protocol->add_option("--seeds", o.seeds, "Seeds (default 1 2 3)");
  protocol->add_option("--shots", o.shots, "Shots per base class")->check(CLI::PositiveNumber);
  protocol->add_option("--train", o.train, "Full-class train manifests (split into base/new)");
  protocol->add_option("--test", o.test, "Full-class test manifests paired with --train");
  protocol->add_option("--base-train", o.base_train, "Base-class train manifests");
  protocol->add_option("--base-test", o.base_test, "Base-class test manifests");
  protocol->add_option("--new-test", o.new_test, "New-class test manifests");
  protocol->add_option("--source", o.source, "Source manifest for transfer protocols");
  protocol->add_option("--target", o.targets, "Target manifests");
  protocol->add_option("--models", o.models, "Model subset for mean/caw_all");
  add_search(protocol, o);
  add_tune(protocol, o);

  auto* inspect = app.add_subcommand("inspect", "Summarize a manifest");
  add_common(inspect, o.common);
  add_manifests(inspect, o, false);

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp& e) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "vlme: " << e.what() << '\n';
    return kExitValidation;
  }

  Runner runner(args, out);
  try {
    if (zs->parsed()) cmd_zero_shot(runner, "zs", Strategy::zs, o);
    else if (mean->parsed()) cmd_zero_shot(runner, "mean", Strategy::mean, o);
    else if (caw->parsed()) cmd_zero_shot(runner, "caw-all", Strategy::caw_all, o);
    else if (tf_search->parsed()) cmd_tf_search(runner, o);
    else if (tf_eval->parsed()) cmd_tf_eval(runner, o);
    else if (tune->parsed()) cmd_tune(runner, o);
    else if (t_eval->parsed()) cmd_t_eval(runner, o);
    else if (protocol->parsed()) cmd_protocol(runner, o);
    else if (inspect->parsed()) cmd_inspect(runner, o);
  } catch (const Error& e) {
    err << "vlme: " << e.what() << '\n';
    return e.kind() == ErrorKind::io ? kExitIo : kExitValidation;
  } catch (const nlohmann::json::exception& e) {
    err << "vlme: " << e.what() << '\n';
    return kExitValidation;
  }
  return kExitOk;
}

}  // namespace vlme
