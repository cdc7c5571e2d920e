#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include <json.hpp>

#include "gesture/config_io.hpp"
#include "gesture/layer_spec.hpp"

namespace gesture {

// Fully resolved settings for one invocation.
struct RunConfig {
  uint64_t seed = 0;
  BackboneConfig backbone = default_backbone_config();
  TrainConfig train;
  StreamConfig infer;
  EvalOptions eval;
  InputNorm input_norm;
  std::string val_data;  // optional validation manifest for train
};

// Document with every default filled in; the schema that files and
// overrides are checked against.
nlohmann::json default_run_document();
nlohmann::json to_json(const RunConfig& config);
RunConfig run_config_from_json(const nlohmann::json& doc);

// Applies "a.b.c=value" to doc. value is parsed as JSON when possible,
// otherwise taken as a string.
void apply_override(nlohmann::json& doc, const std::string& assignment);

// Defaults, then the file (if any), then overrides in order.
RunConfig parse_config(const std::string& path, const std::vector<std::string>& overrides);

struct CommandArgs {
  std::string command;  // synth-data, train, evaluate, infer, inspect
  std::string config;
  std::string spec;
  std::string data;
  std::string out;
  std::string checkpoint;
  std::string frames_dir;
  std::string boxes;
  std::vector<std::string> overrides;
};

// Dispatches one command; structured JSON-line events go to `log`. Returns
// the process exit status. Failures write <out>/error.json when an output
// directory is known.
int run(const CommandArgs& args, std::ostream& log);

}  // namespace gesture
