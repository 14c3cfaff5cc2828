#include "vlme/report.hpp"

#include <cstdio>
#include <sstream>

namespace vlme {
namespace {

double pct(double fraction) { return 100.0 * fraction; }

std::string fmt2(const std::optional<double>& v) {
  if (!v) return "-";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", pct(*v));
  return buf;
}

OrderedJson dataset_rows(const std::vector<DatasetMetrics>& rows) {
  OrderedJson out = OrderedJson::array();
  for (const auto& r : rows) {
    OrderedJson j;
    j["dataset"] = r.dataset;
    j.update(to_json(r.metrics));
    out.push_back(j);
  }
  return out;
}

}  // namespace

OrderedJson to_json(const MetricBlock& b) {
  OrderedJson j = OrderedJson::object();
  if (b.base_acc) j["base_acc"] = pct(*b.base_acc);
  if (b.new_acc) j["new_acc"] = pct(*b.new_acc);
  if (b.hm) j["hm"] = pct(*b.hm);
  if (b.acc) j["acc"] = pct(*b.acc);
  return j;
}

OrderedJson to_json(const EvalReport& r) {
  OrderedJson j;
  j["protocol"] = r.protocol;
  j["strategy"] = r.strategy;
  j["seeds"] = r.seeds;
  j["per_dataset"] = dataset_rows(r.per_dataset);
  j["averaged"] = to_json(r.averaged);
  OrderedJson runs = OrderedJson::array();
  for (const auto& run : r.runs) {
    OrderedJson rj;
    rj["seed"] = run.seed;
    rj["per_dataset"] = dataset_rows(run.per_dataset);
    if (!run.loss_trace.empty()) rj["loss_trace"] = run.loss_trace;
    runs.push_back(rj);
  }
  j["runs"] = runs;
  j["diagnostics"] = r.diagnostics;
  return j;
}

OrderedJson to_json(const SearchResult& r) {
  OrderedJson j;
  j["mode"] = to_string(r.mode);
  j["weights"] = r.weights.values;
  j["grid"] = r.weights.grid.values;
  j["best_accuracy"] = pct(r.best_accuracy);
  j["evaluated_count"] = r.evaluated_count;
  if (!r.accuracy_trace.empty()) {
    OrderedJson trace = OrderedJson::array();
    for (double a : r.accuracy_trace) trace.push_back(pct(a));
    j["accuracy_trace"] = trace;
  }
  return j;
}

std::string to_table(const EvalReport& r, char separator) {
  const bool split = !r.per_dataset.empty() && r.per_dataset.front().metrics.base_acc.has_value();
  std::vector<std::vector<std::string>> rows;
  rows.push_back(split ? std::vector<std::string>{"dataset", "base", "new", "hm"}
                       : std::vector<std::string>{"dataset", "acc"});
  auto add = [&](const std::string& name, const MetricBlock& b) {
    rows.push_back(split ? std::vector<std::string>{name, fmt2(b.base_acc), fmt2(b.new_acc), fmt2(b.hm)}
                         : std::vector<std::string>{name, fmt2(b.acc)});
  };
  for (const auto& d : r.per_dataset) add(d.dataset, d.metrics);
  if (r.per_dataset.size() > 1) add("average", r.averaged);

  std::ostringstream os;
  if (separator) {
    for (const auto& row : rows) {
      for (std::size_t c = 0; c < row.size(); ++c) os << (c ? std::string(1, separator) : "") << row[c];
      os << '\n';
    }
    return os.str();
  }
  std::vector<std::size_t> width(rows.front().size(), 0);
  for (const auto& row : rows) {
    for (std::size_t c = 0; c < row.size(); ++c) width[c] = std::max(width[c], row[c].size());
  }
  os << r.protocol << " / " << r.strategy;
  if (!r.seeds.empty()) {
    os << " / seeds";
    for (auto s : r.seeds) os << ' ' << s;
  }
  os << '\n';
  for (const auto& row : rows) {
    for (std::size_t c = 0; c < row.size(); ++c) {
      const std::string pad(width[c] - row[c].size(), ' ');
      os << (c ? "  " : "") << (c ? pad + row[c] : row[c] + pad);
    }
    os << '\n';
  }
  return os.str();
}

}  // namespace vlme
