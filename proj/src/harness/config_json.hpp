#pragma once

#include <nlohmann/json.hpp>

#include "dpa/harness.hpp"

namespace dpa::harness {

nlohmann::json sim_json(const SimConfig& config);
nlohmann::json pipeline_json(const PipelineConfig& config);

} // namespace dpa::harness
