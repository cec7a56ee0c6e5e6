#include "occgen/config.hpp"

#include <algorithm>
#include <fstream>

namespace occgen {

using nlohmann::json;

namespace {

void reject_unknown(const json& j, const std::vector<std::string>& known,
                    const std::string& section) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (std::find(known.begin(), known.end(), it.key()) == known.end())
      throw ConfigError("unknown " + section + " config key: " + it.key());
  }
}

}  // namespace

json model_config_to_json(const ModelConfig& cfg) {
  json j;
  j["image_size"] = cfg.image_size;
  j["K"] = cfg.K;
  j["T_max"] = cfg.T_max;
  j["z_obj_dim"] = cfg.z_obj_dim;
  j["z_bck_dim"] = cfg.z_bck_dim;
  j["view_dim"] = cfg.view_dim;
  j["lambda_dim"] = cfg.lambda_dim;
  j["sigma_x"] = cfg.sigma_x;
  j["sigma_w"] = cfg.sigma_w;
  j["alpha"] = cfg.alpha;
  j["token_ch"] = cfg.token_ch;
  j["attr_dim"] = cfg.attr_dim;
  j["view_feat_dim"] = cfg.view_feat_dim;
  j["slot_iters"] = cfg.slot_iters;
  j["compose_rule"] = compose_rule_name(cfg.compose_rule);
  j["param_seed"] = cfg.param_seed;
  return j;
}

ModelConfig model_config_from_json(const json& j) {
  static const std::vector<std::string> known = {
      "image_size", "K",          "T_max",      "z_obj_dim",
      "z_bck_dim",  "view_dim",   "lambda_dim", "sigma_x",
      "sigma_w",    "alpha",      "token_ch",   "attr_dim",
      "view_feat_dim", "slot_iters", "compose_rule", "param_seed"};
  reject_unknown(j, known, "model");
  ModelConfig cfg;
  cfg.image_size = j.value("image_size", cfg.image_size);
  cfg.K = j.value("K", cfg.K);
  cfg.T_max = j.value("T_max", cfg.T_max);
  cfg.z_obj_dim = j.value("z_obj_dim", cfg.z_obj_dim);
  cfg.z_bck_dim = j.value("z_bck_dim", cfg.z_bck_dim);
  cfg.view_dim = j.value("view_dim", cfg.view_dim);
  cfg.lambda_dim = j.value("lambda_dim", cfg.lambda_dim);
  cfg.sigma_x = j.value("sigma_x", cfg.sigma_x);
  cfg.sigma_w = j.value("sigma_w", cfg.sigma_w);
  cfg.alpha = j.value("alpha", cfg.alpha);
  cfg.token_ch = j.value("token_ch", cfg.token_ch);
  cfg.attr_dim = j.value("attr_dim", cfg.attr_dim);
  cfg.view_feat_dim = j.value("view_feat_dim", cfg.view_feat_dim);
  cfg.slot_iters = j.value("slot_iters", cfg.slot_iters);
  if (j.contains("compose_rule"))
    cfg.compose_rule =
        compose_rule_from_name(j["compose_rule"].get<std::string>());
  cfg.param_seed = j.value("param_seed", cfg.param_seed);
  cfg.validate();
  return cfg;
}

json train_config_to_json(const TrainConfig& cfg) {
  json j;
  j["stage"] = cfg.stage;
  j["total_steps"] = cfg.total_steps;
  j["batch"] = cfg.batch;
  j["lr"] = cfg.lr;
  j["warmup_steps"] = cfg.warmup_steps;
  j["lr_decay_every"] = cfg.lr_decay_every;
  j["kl_ramp_steps"] = cfg.kl_ramp_steps;
  j["beta"] = cfg.beta;
  j["temp_start"] = cfg.temp_start;
  j["temp_end"] = cfg.temp_end;
  j["temp_horizon"] = cfg.temp_horizon;
  j["s_size_start"] = cfg.s_size_start;
  j["grow_every"] = cfg.grow_every;
  j["checkpoint_every"] = cfg.checkpoint_every;
  j["freeze_decoder"] = cfg.freeze_decoder;
  j["views_max"] = cfg.views_max;
  j["seed"] = cfg.seed;
  return j;
}

TrainConfig train_config_from_json(const json& j) {
  static const std::vector<std::string> known = {
      "stage",        "total_steps",  "batch",
      "lr",           "warmup_steps", "lr_decay_every",
      "kl_ramp_steps", "beta",        "temp_start",
      "temp_end",     "temp_horizon", "s_size_start",
      "grow_every",   "checkpoint_every", "freeze_decoder",
      "views_max",    "seed"};
  reject_unknown(j, known, "train");
  TrainConfig cfg;
  cfg.stage = j.value("stage", cfg.stage);
  cfg.total_steps = j.value("total_steps", cfg.total_steps);
  cfg.batch = j.value("batch", cfg.batch);
  cfg.lr = j.value("lr", cfg.lr);
  cfg.warmup_steps = j.value("warmup_steps", cfg.warmup_steps);
  cfg.lr_decay_every = j.value("lr_decay_every", cfg.lr_decay_every);
  cfg.kl_ramp_steps = j.value("kl_ramp_steps", cfg.kl_ramp_steps);
  cfg.beta = j.value("beta", cfg.beta);
  cfg.temp_start = j.value("temp_start", cfg.temp_start);
  cfg.temp_end = j.value("temp_end", cfg.temp_end);
  cfg.temp_horizon = j.value("temp_horizon", cfg.temp_horizon);
  cfg.s_size_start = j.value("s_size_start", cfg.s_size_start);
  cfg.grow_every = j.value("grow_every", cfg.grow_every);
  cfg.checkpoint_every = j.value("checkpoint_every", cfg.checkpoint_every);
  cfg.freeze_decoder = j.value("freeze_decoder", cfg.freeze_decoder);
  cfg.views_max = j.value("views_max", cfg.views_max);
  cfg.seed = j.value("seed", cfg.seed);
  cfg.validate();
  return cfg;
}

json eval_config_to_json(const EvalConfig& cfg) {
  json j;
  j["observed"] = cfg.observed;
  j["query"] = cfg.query;
  j["mode"] = cfg.mode;
  j["seeds"] = cfg.seeds;
  j["sample_query_view"] = cfg.sample_query_view;
  j["max_scenes"] = cfg.max_scenes;
  j["seed"] = cfg.seed;
  return j;
}

EvalConfig eval_config_from_json(const json& j) {
  static const std::vector<std::string> known = {
      "observed", "query",      "mode", "seeds",
      "sample_query_view", "max_scenes", "seed"};
  reject_unknown(j, known, "eval");
  EvalConfig cfg;
  cfg.observed = j.value("observed", cfg.observed);
  cfg.query = j.value("query", cfg.query);
  cfg.mode = j.value("mode", cfg.mode);
  cfg.seeds = j.value("seeds", cfg.seeds);
  cfg.sample_query_view = j.value("sample_query_view", cfg.sample_query_view);
  cfg.max_scenes = j.value("max_scenes", cfg.max_scenes);
  cfg.seed = j.value("seed", cfg.seed);
  cfg.validate();
  return cfg;
}

RunConfig::RunConfig() {
  train_stage1.stage = 1;
  train_stage2.stage = 2;
}

json run_config_to_json(const RunConfig& cfg) {
  json j;
  j["dataset"] = scene_config_to_json(cfg.dataset);
  j["model"] = model_config_to_json(cfg.model);
  j["train_stage1"] = train_config_to_json(cfg.train_stage1);
  j["train_stage2"] = train_config_to_json(cfg.train_stage2);
  j["eval"] = eval_config_to_json(cfg.eval);
  return j;
}

RunConfig run_config_from_json(const json& j) {
  static const std::vector<std::string> known = {
      "dataset", "model", "train_stage1", "train_stage2", "eval"};
  reject_unknown(j, known, "run");
  RunConfig cfg;
  if (j.contains("dataset"))
    cfg.dataset = scene_config_from_json(j.at("dataset"));
  if (j.contains("model")) cfg.model = model_config_from_json(j.at("model"));
  // Sections inherit their stage; an explicit contradictory value is
  // caught below.
  if (j.contains("train_stage1")) {
    json sec = j.at("train_stage1");
    if (!sec.contains("stage")) sec["stage"] = 1;
    cfg.train_stage1 = train_config_from_json(sec);
  }
  if (j.contains("train_stage2")) {
    json sec = j.at("train_stage2");
    if (!sec.contains("stage")) sec["stage"] = 2;
    cfg.train_stage2 = train_config_from_json(sec);
  }
  if (j.contains("eval")) cfg.eval = eval_config_from_json(j.at("eval"));
  if (cfg.train_stage1.stage != 1)
    throw ConfigError("train_stage1 section must keep stage 1");
  if (cfg.train_stage2.stage != 2)
    throw ConfigError("train_stage2 section must keep stage 2");
  return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError("config file " + path.string() + ": " + e.what());
  }
  return run_config_from_json(j);
}

}  // namespace occgen
