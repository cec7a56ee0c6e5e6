#include "occgen/eval.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "occgen/decode.hpp"
#include "occgen/encode.hpp"

namespace occgen {

namespace {

constexpr uint64_t kEvalTag = 0x6576616c;
constexpr uint64_t kCurveTag = 0x63757276;

struct Spec {
  bool is_count = false;
  int count = 0;
  std::vector<int> list;
};

// A bare integer is a count; anything with a comma is an explicit
// index list (a trailing comma makes a one-element list).
Spec parse_spec(const std::string& s, const char* what) {
  auto fail = [&](const std::string& why) {
    throw ConfigError(std::string(what) + " frame spec \"" + s + "\": " + why);
  };
  if (s.empty()) fail("empty");
  Spec out;
  out.is_count = s.find(',') == std::string::npos;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    if (tok.empty()) fail("empty entry");
    std::size_t used = 0;
    int v = 0;
    try {
      v = std::stoi(tok, &used);
    } catch (const std::exception&) {
      fail("not an integer");
    }
    if (used != tok.size()) fail("not an integer");
    if (v < 0) fail("negative");
    out.list.push_back(v);
  }
  if (out.is_count) {
    if (out.list.size() != 1) fail("expected a single count");
    out.count = out.list[0];
    out.list.clear();
  }
  return out;
}

void check_list(const std::vector<int>& v, int total, const char* what) {
  for (int x : v)
    if (x >= total)
      throw FrameSpecError(std::string(what) + " frame " + std::to_string(x) +
                           " outside a scene with " + std::to_string(total) +
                           " frames");
  std::vector<int> s = v;
  std::sort(s.begin(), s.end());
  if (std::adjacent_find(s.begin(), s.end()) != s.end())
    throw FrameSpecError(std::string(what) + " frame list has duplicates");
}

}  // namespace

void EvalConfig::validate() const {
  if (mode != 1 && mode != 2)
    throw ConfigError("eval mode must be 1 or 2");
  if (seeds < 1) throw ConfigError("eval seeds must be positive");
  parse_spec(observed, "observed");
  parse_spec(query, "query");
}

FramePlan plan_frames(const EvalConfig& cfg, int total) {
  const Spec obs = parse_spec(cfg.observed, "observed");
  const Spec qry = parse_spec(cfg.query, "query");
  FramePlan plan;

  if (qry.is_count) {
    const int nq = qry.count;
    if (nq >= total && nq > 0)
      throw FrameSpecError("cannot hold out " + std::to_string(nq) +
                           " of " + std::to_string(total) + " frames");
    if (cfg.mode == 1) {
      // Spread the queries through the interior; strictly increasing
      // because total / (nq + 1) >= 1.
      for (int i = 0; i < nq; ++i)
        plan.query.push_back(static_cast<int>(
            static_cast<long>(i + 1) * total / (nq + 1)));
    } else {
      const int start = (total - nq) / 2;
      for (int i = 0; i < nq; ++i) plan.query.push_back(start + i);
    }
  } else {
    plan.query = qry.list;
    check_list(plan.query, total, "query");
  }

  if (obs.is_count) {
    for (int i = 0; i < total &&
                    static_cast<int>(plan.observed.size()) < obs.count;
         ++i) {
      if (std::find(plan.query.begin(), plan.query.end(), i) ==
          plan.query.end())
        plan.observed.push_back(i);
    }
    if (static_cast<int>(plan.observed.size()) < obs.count)
      throw FrameSpecError("cannot observe " + std::to_string(obs.count) +
                           " frames with " + std::to_string(plan.query.size()) +
                           " queries in a scene with " +
                           std::to_string(total) + " frames");
  } else {
    plan.observed = obs.list;
    check_list(plan.observed, total, "observed");
    for (int x : plan.observed)
      if (std::find(plan.query.begin(), plan.query.end(), x) !=
          plan.query.end())
        throw FrameSpecError("frame " + std::to_string(x) +
                             " both observed and queried");
  }

  // The lambda extrapolation needs at least two observed rows.
  if (plan.observed.size() < 2)
    throw FrameSpecError("need at least two observed frames, got " +
                         std::to_string(plan.observed.size()));
  return plan;
}

namespace {

Matrix hard_one_hot(const Matrix& weights) {
  Matrix out = Matrix::Zero(weights.rows(), weights.cols());
  for (Eigen::Index n = 0; n < weights.rows(); ++n) {
    Eigen::Index best = 0;
    weights.row(n).maxCoeff(&best);
    out(n, best) = 1.0;
  }
  return out;
}

// Decode one frame at the given view latent row and collect everything
// the metrics need. Returns the squared pixel error sum.
real decode_into(nn::Ctx& c, const Model& m, const Scene& sc, int frame,
                 ad::Var z_view_row, ad::Var z_obj, ad::Var z_bck,
                 ad::Var z_pres, SegmentationPair& pair, int t_row) {
  FrameDecode fd = decode_frame(c, m, z_obj, z_bck, z_view_row);
  ad::Var pi =
      compose_weights(c, fd.shapes, fd.order, z_pres, m.cfg.compose_rule);
  ad::Var xhat = composite(c, pi, fd);
  pair.pred_masks.push_back(hard_one_hot(c.t.val(pi)));
  pair.pred_shapes.push_back(c.t.val(fd.shapes));
  pair.pred_order.row(t_row) = c.t.val(fd.order).transpose();
  return (sc.images[static_cast<std::size_t>(frame)] - c.t.val(xhat))
      .squaredNorm();
}

SegmentationPair empty_pair(const Scene& sc, const std::vector<int>& frames,
                            int K, int pred_count) {
  SegmentationPair p;
  p.gt_count = sc.count;
  p.pred_count = pred_count;
  const int n = static_cast<int>(frames.size());
  p.gt_order = Matrix::Zero(n, sc.K_gt);
  p.pred_order = Matrix::Zero(n, K);
  for (int i = 0; i < n; ++i) {
    const std::size_t f = static_cast<std::size_t>(frames[i]);
    p.gt_masks.push_back(sc.masks[f]);
    p.gt_shapes.push_back(sc.shapes[f]);
    p.gt_order.row(i) = sc.depth_order.row(frames[i]);
  }
  return p;
}

SceneMetrics finish_metrics(const SegmentationPair& p, real sq_err,
                            int n_frames, int pixels) {
  SceneMetrics sm;
  sm.mse = sq_err / (static_cast<real>(n_frames) * pixels * 3);
  sm.ari_a = ari(p, PixelScope::All);
  sm.ari_o = ari(p, PixelScope::Objects);
  sm.ami_a = ami(p, PixelScope::All);
  sm.ami_o = ami(p, PixelScope::Objects);
  sm.iou = iou(p);
  sm.f1 = f1(p);
  sm.ooa = ooa(p);
  return sm;
}

}  // namespace

SceneEval evaluate_scene(Model& m, const Scene& sc, const FramePlan& plan,
                         uint64_t seed, bool sample_query_view) {
  ad::Tape tape;
  nn::Ctx c{tape, m.ps};
  Rng rng(seed);

  std::vector<Matrix> frames;
  std::vector<int> t_obs, t_query;
  for (int i : plan.observed) {
    frames.push_back(sc.images[static_cast<std::size_t>(i)]);
    t_obs.push_back(sc.timesteps[static_cast<std::size_t>(i)]);
  }
  for (int i : plan.query)
    t_query.push_back(sc.timesteps[static_cast<std::size_t>(i)]);

  InferenceResult ir =
      full_inference(c, m, frames, t_obs, t_query, rng, /*pres_temp=*/0.0);

  SceneEval out;
  out.seed = seed;
  const Vector pres = tape.val(ir.z_pres).col(0);
  out.pred_count = static_cast<int>((pres.array() > 0.5).count());
  out.count_ok = out.pred_count == sc.count;

  const int K = m.cfg.K;
  const int pixels = sc.H * sc.W;

  SegmentationPair obs_pair =
      empty_pair(sc, plan.observed, K, out.pred_count);
  real obs_err = 0;
  for (std::size_t i = 0; i < plan.observed.size(); ++i) {
    ad::Var row = tape.gather_rows(ir.z_view_T, {static_cast<int>(i)});
    obs_err += decode_into(c, m, sc, plan.observed[i], row, ir.z_obj,
                           ir.z_bck, ir.z_pres, obs_pair,
                           static_cast<int>(i));
  }
  out.obs = finish_metrics(obs_pair, obs_err,
                           static_cast<int>(plan.observed.size()), pixels);

  if (!plan.query.empty()) {
    const int nq = static_cast<int>(plan.query.size());
    SegmentationPair q_pair = empty_pair(sc, plan.query, K, out.pred_count);
    real q_err = 0;
    ad::Var z_q;
    if (sample_query_view) {
      z_q = ir.z_view_Q;
    } else {
      Matrix mu(nq, m.cfg.view_dim);
      for (int d = 0; d < m.cfg.view_dim; ++d)
        mu.col(d) = tape.val(ir.view_q.mu[static_cast<std::size_t>(d)]);
      z_q = tape.constant(mu);
    }
    for (int j = 0; j < nq; ++j) {
      ad::Var row = tape.gather_rows(z_q, {j});
      q_err += decode_into(c, m, sc, plan.query[static_cast<std::size_t>(j)],
                           row, ir.z_obj, ir.z_bck, ir.z_pres, q_pair, j);
    }
    out.pred = finish_metrics(q_pair, q_err, nq, pixels);
  }
  return out;
}

namespace {

// Per-seed accumulators; a metric only contributes when it has a value.
struct Acc {
  real sum = 0;
  int n = 0;
  void add(real v) {
    sum += v;
    ++n;
  }
  void add(const std::optional<real>& v) {
    if (v) add(*v);
  }
  std::optional<real> mean() const {
    if (n == 0) return std::nullopt;
    return sum / n;
  }
};

void summarize(std::map<std::string, MetricSummary>& out,
               const std::map<std::string, std::vector<real>>& per_seed) {
  for (const auto& [name, vals] : per_seed) {
    MetricSummary s;
    s.n = static_cast<int>(vals.size());
    for (real v : vals) s.mean += v;
    s.mean /= s.n;
    if (s.n > 1) {
      real ss = 0;
      for (real v : vals) ss += (v - s.mean) * (v - s.mean);
      s.stddev = std::sqrt(ss / (s.n - 1));
    }
    out[name] = s;
  }
}

}  // namespace

EvalReport evaluate(Model& m, const Dataset& ds, const EvalConfig& cfg) {
  cfg.validate();
  EvalReport report;
  std::map<std::string, std::vector<real>> per_seed;
  const long n_scenes =
      cfg.max_scenes < 0
          ? static_cast<long>(ds.scenes.size())
          : std::min<long>(cfg.max_scenes,
                           static_cast<long>(ds.scenes.size()));

  for (int s = 0; s < cfg.seeds; ++s) {
    std::map<std::string, Acc> acc;
    for (long i = 0; i < n_scenes; ++i) {
      const Scene& sc = ds.scenes[static_cast<std::size_t>(i)];
      const FramePlan plan = plan_frames(cfg, sc.T());
      const uint64_t seed = Rng::mix({cfg.seed, kEvalTag,
                                      static_cast<uint64_t>(s),
                                      static_cast<uint64_t>(i)});
      SceneEval row =
          evaluate_scene(m, sc, plan, seed, cfg.sample_query_view);
      row.scene = static_cast<int>(i);
      acc["count_acc"].add(row.count_ok ? 1.0 : 0.0);
      acc["obs_mse"].add(row.obs.mse);
      acc["obs_ari_a"].add(row.obs.ari_a);
      acc["obs_ari_o"].add(row.obs.ari_o);
      acc["obs_ami_a"].add(row.obs.ami_a);
      acc["obs_ami_o"].add(row.obs.ami_o);
      acc["obs_iou"].add(row.obs.iou);
      acc["obs_f1"].add(row.obs.f1);
      acc["obs_ooa"].add(row.obs.ooa);
      if (row.pred) {
        acc["pred_mse"].add(row.pred->mse);
        acc["pred_ari_a"].add(row.pred->ari_a);
        acc["pred_ari_o"].add(row.pred->ari_o);
        acc["pred_ami_a"].add(row.pred->ami_a);
        acc["pred_ami_o"].add(row.pred->ami_o);
        acc["pred_iou"].add(row.pred->iou);
        acc["pred_f1"].add(row.pred->f1);
        acc["pred_ooa"].add(row.pred->ooa);
      }
      report.rows.push_back(std::move(row));
    }
    for (const auto& [name, a] : acc)
      if (auto v = a.mean()) per_seed[name].push_back(*v);
  }
  summarize(report.summary, per_seed);
  return report;
}

std::vector<UncertaintyPoint> scene_uncertainty_curve(Model& m,
                                                      const Scene& sc,
                                                      int max_observed,
                                                      uint64_t seed) {
  const int total = sc.T();
  if (max_observed < 2 || max_observed > total - 1)
    throw FrameSpecError("observed sweep needs 2 <= max <= " +
                         std::to_string(total - 1) + ", got " +
                         std::to_string(max_observed));

  ad::Tape tape;
  nn::Ctx c{tape, m.ps};
  Rng rng(seed);

  std::vector<Matrix> frames;
  std::vector<int> t_obs;
  for (int i = 0; i < max_observed; ++i) {
    frames.push_back(sc.images[static_cast<std::size_t>(i)]);
    t_obs.push_back(sc.timesteps[static_cast<std::size_t>(i)]);
  }
  const int q_idx = total - 1;
  const std::vector<int> t_query = {sc.timesteps[static_cast<std::size_t>(
      q_idx)]};

  InferenceResult ir =
      full_inference(c, m, frames, t_obs, t_query, rng, /*pres_temp=*/0.0);

  const int D = m.cfg.view_dim;
  const int Dl = m.cfg.lambda_dim;
  // One Gram per dimension over every lambda row (query row last);
  // each sweep point conditions on a leading sub-block, so the
  // conditioning sets are nested by construction.
  std::vector<ad::Var> grams;
  for (int d = 0; d < D; ++d) {
    ad::Var lam_d =
        tape.block(ir.lambda_S, 0, d * Dl, max_observed + 1, Dl);
    grams.push_back(gp::gram(c, m.gp_dims[static_cast<std::size_t>(d)],
                             lam_d));
  }

  const int pixels = sc.H * sc.W;
  std::vector<UncertaintyPoint> out;
  for (int n = 2; n <= max_observed; ++n) {
    std::vector<int> rows(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) rows[static_cast<std::size_t>(i)] = i;
    const std::vector<int> q_row = {max_observed};
    Matrix mu_q(1, D);
    real var_sum = 0;
    for (int d = 0; d < D; ++d) {
      ad::Var G = grams[static_cast<std::size_t>(d)];
      ad::Var C_T = gp::sub_block(tape, G, rows, rows);
      ad::Var R = gp::sub_block(tape, G, q_row, rows);
      ad::Var C_Q = gp::sub_block(tape, G, q_row, q_row);
      ad::Var z_d = tape.block(ir.z_view_T, 0, d, n, 1);
      auto [mu, Sigma] = gp::condition(
          c, C_T, R, C_Q, z_d,
          m.gp_dims[static_cast<std::size_t>(d)].jitter(m.ps));
      mu_q(0, d) = tape.val(mu)(0, 0);
      var_sum += tape.val(Sigma)(0, 0);
    }
    FrameDecode fd = decode_frame(c, m, ir.z_obj, ir.z_bck,
                                  tape.constant(mu_q));
    ad::Var pi = compose_weights(c, fd.shapes, fd.order, ir.z_pres,
                                 m.cfg.compose_rule);
    ad::Var xhat = composite(c, pi, fd);
    const real err =
        (sc.images[static_cast<std::size_t>(q_idx)] - tape.val(xhat))
            .squaredNorm();
    out.push_back({n, var_sum / D, err / (static_cast<real>(pixels) * 3)});
  }
  return out;
}

std::vector<UncertaintyPoint> uncertainty_curve(Model& m, const Dataset& ds,
                                                int max_observed,
                                                uint64_t seed,
                                                long max_scenes) {
  const long n_scenes =
      max_scenes < 0 ? static_cast<long>(ds.scenes.size())
                     : std::min<long>(max_scenes,
                                      static_cast<long>(ds.scenes.size()));
  if (n_scenes == 0) throw FrameSpecError("no scenes to sweep");
  std::vector<UncertaintyPoint> mean;
  for (long i = 0; i < n_scenes; ++i) {
    const uint64_t scene_seed =
        Rng::mix({seed, kCurveTag, static_cast<uint64_t>(i)});
    const std::vector<UncertaintyPoint> pts = scene_uncertainty_curve(
        m, ds.scenes[static_cast<std::size_t>(i)], max_observed, scene_seed);
    if (mean.empty()) mean.resize(pts.size());
    for (std::size_t j = 0; j < pts.size(); ++j) {
      mean[j].observed = pts[j].observed;
      mean[j].mean_var += pts[j].mean_var;
      mean[j].mse += pts[j].mse;
    }
  }
  for (UncertaintyPoint& p : mean) {
    p.mean_var /= static_cast<real>(n_scenes);
    p.mse /= static_cast<real>(n_scenes);
  }
  return mean;
}

}  // namespace occgen
