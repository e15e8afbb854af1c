#pragma once

// Internal JSON (de)serialization for the config structs; shared by the
// synth and experiment translation units, not installed.

#include "votecal/network.hpp"
#include "votecal/synth.hpp"

#include <json.hpp>

namespace votecal::detail {

GeneratorConfig generator_config_from(const nlohmann::json& doc);
SplitSpec split_spec_from(const nlohmann::json& doc);
NetworkSpec network_spec_from(const nlohmann::json& doc);
TrainConfig train_config_from(const nlohmann::json& doc);

nlohmann::json to_json(const GeneratorConfig& config);
nlohmann::json to_json(const SplitSpec& spec);
nlohmann::json to_json(const NetworkSpec& spec);
nlohmann::json to_json(const TrainConfig& config);

} // namespace votecal::detail
