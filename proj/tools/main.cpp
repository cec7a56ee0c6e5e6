// Command-line surface over the library: dataset synthesis, two-stage
// training, evaluation, prediction grids, prior rollouts, and the
// observed-views sweep. Exit codes are part of the contract:
//   2 bad config, 3 IO, 4 stage-2 without an initial checkpoint,
//   5 numerics failure, 6 impossible frame spec, 1 anything else.

#include <CLI11.hpp>
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>

#include "occgen/checkpoint.hpp"
#include "occgen/config.hpp"
#include "occgen/decode.hpp"
#include "occgen/encode.hpp"
#include "occgen/image_io.hpp"
#include "occgen/schema.hpp"
#include "occgen/svg.hpp"

namespace fs = std::filesystem;
using namespace occgen;
using nlohmann::json;

namespace {

// OCCGEN_SEED wins over the flag, the flag over the config file.
uint64_t resolve_seed(const CLI::Option* opt, uint64_t flag_value,
                      uint64_t config_value) {
  if (const char* env = std::getenv("OCCGEN_SEED")) {
    char* end = nullptr;
    const unsigned long long v = std::strtoull(env, &end, 10);
    if (end == env || *end != '\0')
      throw ConfigError("OCCGEN_SEED must be an unsigned integer, got \"" +
                        std::string(env) + "\"");
    return v;
  }
  if (opt != nullptr && opt->count() > 0) return flag_value;
  return config_value;
}

void prepare_out(const fs::path& dir, bool force) {
  if (fs::exists(dir)) {
    if (!force)
      throw FormatError("output directory " + dir.string() +
                        " exists, pass --force to overwrite");
  } else {
    fs::create_directories(dir);
  }
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw FormatError("cannot write " + path.string());
  out << text;
  if (!out) throw FormatError("short write to " + path.string());
}

RunConfig load_config_or_default(const std::string& path) {
  if (path.empty()) return RunConfig{};
  return load_run_config(path);
}

void echo_config(const fs::path& out_dir, const RunConfig& rc) {
  write_text(out_dir / "config.json", run_config_to_json(rc).dump(2) + "\n");
}

fs::path schema_path() {
  if (const char* env = std::getenv("OCCGEN_SCHEMA")) return env;
  return fs::path(OCCGEN_SHARE_DIR) / "metrics.schema.json";
}

json metrics_to_json(const SceneMetrics& sm) {
  json j;
  j["mse"] = sm.mse;
  j["ari_a"] = sm.ari_a;
  j["ari_o"] = sm.ari_o;
  j["ami_a"] = sm.ami_a;
  j["ami_o"] = sm.ami_o;
  j["iou"] = sm.iou ? json(*sm.iou) : json(nullptr);
  j["f1"] = sm.f1 ? json(*sm.f1) : json(nullptr);
  j["ooa"] = sm.ooa ? json(*sm.ooa) : json(nullptr);
  return j;
}

struct MakeDatasetOpts {
  std::string config, out;
  long num_scenes = 16;
  uint64_t seed = 0;
  bool force = false;
  CLI::Option* seed_opt = nullptr;
};

int cmd_make_dataset(const MakeDatasetOpts& o) {
  RunConfig rc = load_config_or_default(o.config);
  rc.dataset.seed = resolve_seed(o.seed_opt, o.seed, rc.dataset.seed);
  rc.dataset.validate();
  prepare_out(o.out, o.force);

  std::vector<Scene> scenes;
  scenes.reserve(static_cast<std::size_t>(o.num_scenes));
  for (long i = 0; i < o.num_scenes; ++i)
    scenes.push_back(generate_scene(
        rc.dataset, Rng::mix({rc.dataset.seed, static_cast<uint64_t>(i)})));
  write_dataset(scenes, rc.dataset, o.out);
  echo_config(o.out, rc);

  real occ_sum = 0;
  long occ_n = 0;
  for (const Scene& sc : scenes)
    for (int t = 0; t < sc.T(); ++t)
      for (int k = 1; k <= sc.K_gt; ++k) {
        const real complete =
            sc.shapes[static_cast<std::size_t>(t)].col(k - 1).sum();
        if (complete <= 0) continue;
        const real visible =
            sc.masks[static_cast<std::size_t>(t)].col(k).sum();
        occ_sum += 1.0 - visible / complete;
        ++occ_n;
      }
  std::cout << "wrote " << scenes.size() << " scenes ("
            << rc.dataset.num_views << " views each) to " << o.out << "\n"
            << "mean occlusion rate "
            << (occ_n > 0 ? occ_sum / static_cast<real>(occ_n) : 0.0)
            << "\n";
  return 0;
}

struct TrainOpts {
  std::string config, data, out, init_ckpt;
  int stage = 1;
  uint64_t seed = 0;
  bool force = false, resume = false;
  CLI::Option* seed_opt = nullptr;
};

int cmd_train(const TrainOpts& o) {
  RunConfig rc = load_config_or_default(o.config);
  TrainConfig tc = o.stage == 1 ? rc.train_stage1 : rc.train_stage2;
  tc.seed = resolve_seed(o.seed_opt, o.seed, tc.seed);
  tc.validate();

  if (o.stage == 2 && o.init_ckpt.empty() && !o.resume) {
    std::cerr << "stage 2 refines a stage-1 model, pass --init-ckpt\n";
    return 4;
  }

  const Dataset ds = read_dataset(o.data);

  Model m = Model::create(rc.model);
  long start_step = 0;
  if (o.resume) {
    CheckpointInfo info;
    m = load_checkpoint((fs::path(o.out) / "ckpt_latest.bin").string(),
                        &info);
    if (info.stage != o.stage)
      throw ConfigError("checkpoint in " + o.out + " is stage " +
                        std::to_string(info.stage) + ", asked for stage " +
                        std::to_string(o.stage));
    start_step = info.step;
  } else {
    prepare_out(o.out, o.force);
    if (!o.init_ckpt.empty()) m = load_checkpoint(o.init_ckpt);
  }

  rc.model = m.cfg;
  (o.stage == 1 ? rc.train_stage1 : rc.train_stage2) = tc;
  echo_config(o.out, rc);

  const TrainResult result = train(m, ds, tc, o.out, start_step);
  if (!result.history.empty())
    std::cout << "final loss " << result.history.back().total << " after "
              << tc.total_steps << " steps\n";
  return 0;
}

struct EvalOpts {
  std::string config, ckpt, data, out;
  std::string observed, query;
  int mode = 0, seeds = 0;
  long max_scenes = -2;
  uint64_t seed = 0;
  bool force = false, sample_view = false;
  CLI::Option* seed_opt = nullptr;
};

EvalConfig eval_config_with_overrides(const RunConfig& rc,
                                      const EvalOpts& o) {
  EvalConfig ec = rc.eval;
  if (!o.observed.empty()) ec.observed = o.observed;
  if (!o.query.empty()) ec.query = o.query;
  if (o.mode != 0) ec.mode = o.mode;
  if (o.seeds != 0) ec.seeds = o.seeds;
  if (o.max_scenes != -2) ec.max_scenes = o.max_scenes;
  if (o.sample_view) ec.sample_query_view = true;
  ec.seed = resolve_seed(o.seed_opt, o.seed, ec.seed);
  ec.validate();
  return ec;
}

int cmd_eval(const EvalOpts& o) {
  RunConfig rc = load_config_or_default(o.config);
  EvalConfig ec = eval_config_with_overrides(rc, o);
  const Dataset ds = read_dataset(o.data);
  Model m = load_checkpoint(o.ckpt);
  prepare_out(o.out, o.force);

  const EvalReport report = evaluate(m, ds, ec);

  json doc;
  doc["summary"] = json::object();
  for (const auto& [name, s] : report.summary) {
    doc["summary"][name] = {{"mean", s.mean}, {"std", s.stddev},
                            {"n", s.n}};
  }
  doc["scenes"] = json::array();
  for (const SceneEval& row : report.rows) {
    json r;
    r["scene"] = row.scene;
    r["seed"] = row.seed;
    r["pred_count"] = row.pred_count;
    r["count_ok"] = row.count_ok;
    r["obs"] = metrics_to_json(row.obs);
    if (row.pred) r["pred"] = metrics_to_json(*row.pred);
    doc["scenes"].push_back(std::move(r));
  }

  std::ifstream schema_in(schema_path());
  if (!schema_in)
    throw FormatError("cannot read metrics schema " +
                      schema_path().string());
  const json schema = json::parse(schema_in);
  const std::vector<std::string> violations = schema_violations(doc, schema);
  if (!violations.empty())
    throw FormatError("metrics report violates its schema: " +
                      violations.front());

  write_text(fs::path(o.out) / "metrics.json", doc.dump(2) + "\n");
  rc.eval = ec;
  rc.model = m.cfg;
  echo_config(o.out, rc);

  for (const auto& [name, s] : report.summary) {
    const real stderr_ = s.n > 1 ? s.stddev / std::sqrt(s.n) : 0.0;
    std::cout << name << " " << s.mean << " +- " << stderr_ << " (n=" << s.n
              << ")\n";
  }
  return 0;
}

struct PredictOpts {
  std::string config, ckpt, data, out;
  std::string observed, query;
  int mode = 0;
  long num = 4;
  uint64_t seed = 0;
  bool force = false;
  CLI::Option* seed_opt = nullptr;
};

int cmd_predict(const PredictOpts& o) {
  RunConfig rc = load_config_or_default(o.config);
  EvalOpts eo;
  eo.observed = o.observed;
  eo.query = o.query;
  eo.mode = o.mode;
  eo.seeds = 1;
  eo.seed = o.seed;
  eo.seed_opt = o.seed_opt;
  const EvalConfig ec = eval_config_with_overrides(rc, eo);

  const Dataset ds = read_dataset(o.data);
  Model m = load_checkpoint(o.ckpt);
  prepare_out(o.out, o.force);
  rc.eval = ec;
  rc.model = m.cfg;
  echo_config(o.out, rc);

  const long n_scenes =
      std::min<long>(o.num, static_cast<long>(ds.scenes.size()));
  for (long i = 0; i < n_scenes; ++i) {
    const Scene& sc = ds.scenes[static_cast<std::size_t>(i)];
    const FramePlan plan = plan_frames(ec, sc.T());

    ad::Tape tape;
    nn::Ctx c{tape, m.ps};
    Rng rng(Rng::mix({ec.seed, static_cast<uint64_t>(i)}));

    std::vector<Matrix> frames;
    std::vector<int> t_obs, t_query;
    for (int f : plan.observed) {
      frames.push_back(sc.images[static_cast<std::size_t>(f)]);
      t_obs.push_back(sc.timesteps[static_cast<std::size_t>(f)]);
    }
    for (int f : plan.query)
      t_query.push_back(sc.timesteps[static_cast<std::size_t>(f)]);
    const InferenceResult ir =
        full_inference(c, m, frames, t_obs, t_query, rng, 0.0);

    Matrix mu_q(static_cast<Eigen::Index>(plan.query.size()),
                m.cfg.view_dim);
    for (int d = 0; d < m.cfg.view_dim && !plan.query.empty(); ++d)
      mu_q.col(d) = tape.val(ir.view_q.mu[static_cast<std::size_t>(d)]);

    std::vector<int> all = plan.observed;
    all.insert(all.end(), plan.query.begin(), plan.query.end());
    std::sort(all.begin(), all.end());

    std::vector<Matrix> gt_row, recon_row, seg_row;
    for (int f : all) {
      ad::Var z_row;
      const auto obs_it =
          std::find(plan.observed.begin(), plan.observed.end(), f);
      if (obs_it != plan.observed.end()) {
        z_row = tape.gather_rows(
            ir.z_view_T,
            {static_cast<int>(obs_it - plan.observed.begin())});
      } else {
        const auto q_it =
            std::find(plan.query.begin(), plan.query.end(), f);
        z_row = tape.constant(mu_q.row(q_it - plan.query.begin()));
      }
      const FrameDecode fd =
          decode_frame(c, m, ir.z_obj, ir.z_bck, z_row);
      ad::Var pi = compose_weights(c, fd.shapes, fd.order, ir.z_pres,
                                   m.cfg.compose_rule);
      ad::Var xhat = composite(c, pi, fd);
      gt_row.push_back(sc.images[static_cast<std::size_t>(f)]);
      recon_row.push_back(tape.val(xhat));
      seg_row.push_back(colorize_segmentation(tape.val(pi)));
    }

    std::vector<Matrix> cells = gt_row;
    cells.insert(cells.end(), recon_row.begin(), recon_row.end());
    cells.insert(cells.end(), seg_row.begin(), seg_row.end());
    const ImageGrid grid = compose_grid(cells, sc.H, sc.W,
                                        static_cast<int>(all.size()));
    char name[32];
    std::snprintf(name, sizeof name, "scene_%03ld.ppm", i);
    write_ppm(fs::path(o.out) / name, grid.pixels, grid.W);
  }
  std::cout << "wrote " << n_scenes << " prediction grids to " << o.out
            << "\n";
  return 0;
}

struct GenerateOpts {
  std::string ckpt, out;
  long num = 3;
  uint64_t seed = 0;
  bool force = false;
  CLI::Option* seed_opt = nullptr;
};

int cmd_generate(const GenerateOpts& o) {
  Model m = load_checkpoint(o.ckpt);
  const uint64_t seed = resolve_seed(o.seed_opt, o.seed, 0);
  prepare_out(o.out, o.force);

  std::vector<int> timesteps(static_cast<std::size_t>(m.cfg.T_max));
  for (int t = 0; t < m.cfg.T_max; ++t)
    timesteps[static_cast<std::size_t>(t)] = t;

  for (long g = 0; g < o.num; ++g) {
    Rng rng(Rng::mix({seed, static_cast<uint64_t>(g)}));
    const Rollout roll = generate_rollout(m, timesteps, rng);
    std::vector<Matrix> cells = roll.images;
    for (const Matrix& pi : roll.pi)
      cells.push_back(colorize_segmentation(pi));
    const ImageGrid grid =
        compose_grid(cells, m.cfg.image_size, m.cfg.image_size,
                     static_cast<int>(roll.images.size()));
    char name[32];
    std::snprintf(name, sizeof name, "rollout_%02ld.ppm", g);
    write_ppm(fs::path(o.out) / name, grid.pixels, grid.W);
  }
  std::cout << "wrote " << o.num << " rollout grids to " << o.out << "\n";
  return 0;
}

struct CurveOpts {
  std::string config, ckpt, data, out;
  int max_observed = 7;
  long max_scenes = -1;
  uint64_t seed = 0;
  bool force = false;
  CLI::Option* seed_opt = nullptr;
};

int cmd_uncertainty_curve(const CurveOpts& o) {
  RunConfig rc = load_config_or_default(o.config);
  const uint64_t seed = resolve_seed(o.seed_opt, o.seed, rc.eval.seed);
  const Dataset ds = read_dataset(o.data);
  Model m = load_checkpoint(o.ckpt);
  prepare_out(o.out, o.force);
  rc.model = m.cfg;
  echo_config(o.out, rc);

  const std::vector<UncertaintyPoint> pts =
      uncertainty_curve(m, ds, o.max_observed, seed, o.max_scenes);

  std::ostringstream csv;
  csv.precision(17);
  csv << "observed,mean_var,mse\n";
  for (const UncertaintyPoint& p : pts)
    csv << p.observed << "," << p.mean_var << "," << p.mse << "\n";
  write_text(fs::path(o.out) / "curve.csv", csv.str());

  std::vector<real> x;
  PlotSeries var_series{"mean posterior variance", {}};
  PlotSeries mse_series{"query mse", {}};
  for (const UncertaintyPoint& p : pts) {
    x.push_back(p.observed);
    var_series.y.push_back(p.mean_var);
    mse_series.y.push_back(p.mse);
  }
  write_line_plot(fs::path(o.out) / "curve.svg",
                  "prediction quality vs observed views", "observed views",
                  x, {var_series, mse_series});
  std::cout << "wrote " << pts.size() << " sweep points to " << o.out
            << "\n";
  return 0;
}

int run_guarded(const std::function<int()>& fn) {
  try {
    return fn();
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const FrameSpecError& e) {
    std::cerr << "frame spec error: " << e.what() << "\n";
    return 6;
  } catch (const NumericsFailure& e) {
    std::cerr << "numerics failure: " << e.what() << "\n";
    return 5;
  } catch (const FormatError& e) {
    std::cerr << "io error: " << e.what() << "\n";
    return 3;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "io error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"time-conditioned multi-view object-centric scene model"};
  app.require_subcommand(1);

  MakeDatasetOpts mk;
  CLI::App* mk_cmd =
      app.add_subcommand("make-dataset", "synthesize a labeled dataset");
  mk_cmd->add_option("--config", mk.config, "run config JSON");
  mk_cmd->add_option("--out", mk.out, "output directory")->required();
  mk_cmd->add_option("--num-scenes", mk.num_scenes, "scene count");
  mk.seed_opt = mk_cmd->add_option("--seed", mk.seed, "generator seed");
  mk_cmd->add_flag("--force", mk.force, "overwrite existing output");

  TrainOpts tr;
  CLI::App* tr_cmd = app.add_subcommand("train", "optimize a model");
  tr_cmd->add_option("--config", tr.config, "run config JSON");
  tr_cmd->add_option("--stage", tr.stage, "training stage")
      ->check(CLI::IsMember({1, 2}))
      ->required();
  tr_cmd->add_option("--data", tr.data, "dataset directory")->required();
  tr_cmd->add_option("--out", tr.out, "output directory")->required();
  tr_cmd->add_option("--init-ckpt", tr.init_ckpt,
                     "checkpoint to start from");
  tr.seed_opt = tr_cmd->add_option("--seed", tr.seed, "training seed");
  tr_cmd->add_flag("--force", tr.force, "overwrite existing output");
  tr_cmd->add_flag("--resume", tr.resume,
                   "continue from ckpt_latest.bin in --out");

  EvalOpts ev;
  CLI::App* ev_cmd = app.add_subcommand("eval", "compute metrics");
  ev_cmd->add_option("--config", ev.config, "run config JSON");
  ev_cmd->add_option("--ckpt", ev.ckpt, "model checkpoint")->required();
  ev_cmd->add_option("--data", ev.data, "dataset directory")->required();
  ev_cmd->add_option("--out", ev.out, "output directory")->required();
  ev_cmd->add_option("--observed", ev.observed,
                     "observed frame count or list");
  ev_cmd->add_option("--query", ev.query, "query frame count or list");
  ev_cmd->add_option("--mode", ev.mode, "1 interleaved, 2 block holdout")
      ->check(CLI::IsMember({1, 2}));
  ev_cmd->add_option("--seeds", ev.seeds, "number of inference seeds");
  ev_cmd->add_option("--max-scenes", ev.max_scenes, "cap evaluated scenes");
  ev.seed_opt = ev_cmd->add_option("--seed", ev.seed, "base seed");
  ev_cmd->add_flag("--sample-view", ev.sample_view,
                   "draw the query view latent instead of using the mean");
  ev_cmd->add_flag("--force", ev.force, "overwrite existing output");

  PredictOpts pr;
  CLI::App* pr_cmd =
      app.add_subcommand("predict", "write GT / reconstruction grids");
  pr_cmd->add_option("--config", pr.config, "run config JSON");
  pr_cmd->add_option("--ckpt", pr.ckpt, "model checkpoint")->required();
  pr_cmd->add_option("--data", pr.data, "dataset directory")->required();
  pr_cmd->add_option("--out", pr.out, "output directory")->required();
  pr_cmd->add_option("--observed", pr.observed,
                     "observed frame count or list");
  pr_cmd->add_option("--query", pr.query, "query frame count or list");
  pr_cmd->add_option("--mode", pr.mode, "1 interleaved, 2 block holdout")
      ->check(CLI::IsMember({1, 2}));
  pr_cmd->add_option("--num", pr.num, "scenes to render");
  pr.seed_opt = pr_cmd->add_option("--seed", pr.seed, "inference seed");
  pr_cmd->add_flag("--force", pr.force, "overwrite existing output");

  GenerateOpts gn;
  CLI::App* gn_cmd =
      app.add_subcommand("generate", "sample prior rollouts");
  gn_cmd->add_option("--ckpt", gn.ckpt, "model checkpoint")->required();
  gn_cmd->add_option("--out", gn.out, "output directory")->required();
  gn_cmd->add_option("--num", gn.num, "rollouts to sample");
  gn.seed_opt = gn_cmd->add_option("--seed", gn.seed, "sampling seed");
  gn_cmd->add_flag("--force", gn.force, "overwrite existing output");

  CurveOpts cv;
  CLI::App* cv_cmd = app.add_subcommand(
      "uncertainty-curve", "sweep observed views against one query");
  cv_cmd->add_option("--config", cv.config, "run config JSON");
  cv_cmd->add_option("--ckpt", cv.ckpt, "model checkpoint")->required();
  cv_cmd->add_option("--data", cv.data, "dataset directory")->required();
  cv_cmd->add_option("--out", cv.out, "output directory")->required();
  cv_cmd->add_option("--max-observed", cv.max_observed,
                     "largest observed set");
  cv_cmd->add_option("--max-scenes", cv.max_scenes, "cap swept scenes");
  cv.seed_opt = cv_cmd->add_option("--seed", cv.seed, "inference seed");
  cv_cmd->add_flag("--force", cv.force, "overwrite existing output");

  CLI11_PARSE(app, argc, argv);

  if (mk_cmd->parsed())
    return run_guarded([&] { return cmd_make_dataset(mk); });
  if (tr_cmd->parsed()) return run_guarded([&] { return cmd_train(tr); });
  if (ev_cmd->parsed()) return run_guarded([&] { return cmd_eval(ev); });
  if (pr_cmd->parsed()) return run_guarded([&] { return cmd_predict(pr); });
  if (gn_cmd->parsed()) return run_guarded([&] { return cmd_generate(gn); });
  if (cv_cmd->parsed())
    return run_guarded([&] { return cmd_uncertainty_curve(cv); });
  return 1;
}
