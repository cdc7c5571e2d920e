#pragma once

#include <string>

#include <json.hpp>

#include "gesture/evaluator.hpp"
#include "gesture/model.hpp"
#include "gesture/stream.hpp"
#include "gesture/trainer.hpp"

namespace gesture {

nlohmann::json to_json(const TrainConfig& config);
TrainConfig train_config_from_json(const nlohmann::json& doc);

nlohmann::json to_json(const InputNorm& norm);
InputNorm input_norm_from_json(const nlohmann::json& doc);

nlohmann::json to_json(const StreamConfig& config);
StreamConfig stream_config_from_json(const nlohmann::json& doc);

nlohmann::json to_json(const EvalOptions& options);
EvalOptions eval_options_from_json(const nlohmann::json& doc);

// Overlays `patch` onto `base` in place. Every key of `patch` must exist in
// `base` with a compatible type; the error names the dotted key path.
// Arrays and nulls are replaced wholesale.
void merge_strict(nlohmann::json& base, const nlohmann::json& patch, const std::string& path = "");

}  // namespace gesture
