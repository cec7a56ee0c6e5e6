#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "occgen/dataset_io.hpp"
#include "occgen/metrics.hpp"
#include "occgen/model.hpp"

namespace occgen {

// A frame spec is either a count ("6", placed according to the mode)
// or an explicit comma list of frame indices ("0,2,5").
struct EvalConfig {
  std::string observed = "6";
  std::string query = "4";
  int mode = 1;  // 1 interleaves the queries, 2 holds out a middle block
  int seeds = 5;
  // Predicted frames decode at the GP posterior mean unless asked to
  // draw a sample instead.
  bool sample_query_view = false;
  long max_scenes = -1;
  uint64_t seed = 0;
  void validate() const;
};

struct FramePlan {
  std::vector<int> observed;
  std::vector<int> query;
};

// Resolve the specs against a scene with `total` frames. Throws
// FrameSpecError when the request cannot be satisfied: indices out of
// range, overlap, fewer than two observed frames, or counts that do
// not fit.
FramePlan plan_frames(const EvalConfig& cfg, int total);

struct SceneMetrics {
  real mse = 0;
  real ari_a = 0, ari_o = 0;
  real ami_a = 0, ami_o = 0;
  std::optional<real> iou, f1, ooa;
};

struct SceneEval {
  int scene = -1;
  uint64_t seed = 0;
  int pred_count = 0;
  bool count_ok = false;
  SceneMetrics obs;
  std::optional<SceneMetrics> pred;  // absent when no frames are queried
};

SceneEval evaluate_scene(Model& m, const Scene& sc, const FramePlan& plan,
                         uint64_t seed, bool sample_query_view);

struct MetricSummary {
  real mean = 0;
  real stddev = 0;
  int n = 0;  // seeds that produced a value
};

struct EvalReport {
  std::vector<SceneEval> rows;  // one per (seed, scene)
  std::map<std::string, MetricSummary> summary;
};

// Runs every scene under cfg.seeds inference seeds and aggregates each
// metric over its per-seed scene means.
EvalReport evaluate(Model& m, const Dataset& ds, const EvalConfig& cfg);

// One query frame (the last), observed sets growing as prefixes of the
// first max_observed frames. The encoder runs once on the full prefix;
// each point conditions the view GP on the first n of those frames
// only, so the posterior variance shrinks monotonically by
// construction and the decode isolates the effect of the view
// prediction.
struct UncertaintyPoint {
  int observed = 0;
  real mean_var = 0;  // query view variance averaged over dimensions
  real mse = 0;       // query frame reconstruction at the posterior mean
};

std::vector<UncertaintyPoint> scene_uncertainty_curve(Model& m,
                                                      const Scene& sc,
                                                      int max_observed,
                                                      uint64_t seed);

// Average of the per-scene curves, max_observed - 1 points.
std::vector<UncertaintyPoint> uncertainty_curve(Model& m, const Dataset& ds,
                                                int max_observed,
                                                uint64_t seed,
                                                long max_scenes = -1);

}  // namespace occgen
