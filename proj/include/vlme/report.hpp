#pragma once

// Report serialization. Accuracies are stored as fractions and emitted as
// percentages: full precision in JSON, two decimals in tables.

#include "vlme/protocols.hpp"
#include "vlme/tf_ensemble.hpp"

#include <json.hpp>

#include <string>

namespace vlme {

using OrderedJson = nlohmann::ordered_json;

inline constexpr const char* kVersion = "1.0.0";

OrderedJson to_json(const MetricBlock& block);
OrderedJson to_json(const EvalReport& report);
OrderedJson to_json(const SearchResult& result);

/// Aligned plain-text table, or delimiter-separated when `separator` is set.
std::string to_table(const EvalReport& report, char separator = '\0');

}  // namespace vlme
