#pragma once

#include <string>

#include <json.hpp>

#include "mire/trainer.hpp"

namespace mire {

nlohmann::json to_json(const ClassMeans& means);
ClassMeans class_means_from_json(const nlohmann::json& j);

nlohmann::json to_json(const Snapshot& snap);
Snapshot snapshot_from_json(const nlohmann::json& j);

nlohmann::json to_json(const RunRecord& rec);
RunRecord run_record_from_json(const nlohmann::json& j);

/// Shortest round-trip decimal form ("%.17g"), so CSV output is exact and stable.
std::string format_double(double v);

}  // namespace mire
