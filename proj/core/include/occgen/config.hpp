#pragma once

#include <filesystem>
#include <json.hpp>

#include "occgen/dataset_io.hpp"
#include "occgen/eval.hpp"
#include "occgen/model.hpp"
#include "occgen/train.hpp"

namespace occgen {

// Round trips reject unknown keys and validate on the way in; missing
// keys keep the struct defaults.
nlohmann::json model_config_to_json(const ModelConfig& cfg);
ModelConfig model_config_from_json(const nlohmann::json& j);

nlohmann::json train_config_to_json(const TrainConfig& cfg);
TrainConfig train_config_from_json(const nlohmann::json& j);

nlohmann::json eval_config_to_json(const EvalConfig& cfg);
EvalConfig eval_config_from_json(const nlohmann::json& j);

// One document for a whole run. Every section is optional and falls
// back to defaults; the training sections are pinned to their stages.
struct RunConfig {
  SceneConfig dataset;
  ModelConfig model;
  TrainConfig train_stage1;
  TrainConfig train_stage2;
  EvalConfig eval;

  RunConfig();
};

nlohmann::json run_config_to_json(const RunConfig& cfg);
RunConfig run_config_from_json(const nlohmann::json& j);

// Parse a config file; ConfigError covers unreadable files and bad
// JSON as well as bad values.
RunConfig load_run_config(const std::filesystem::path& path);

}  // namespace occgen
