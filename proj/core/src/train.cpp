#include "occgen/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <numeric>

#include "occgen/checkpoint.hpp"
#include "occgen/decode.hpp"
#include "occgen/losses.hpp"

namespace occgen {

namespace {

// Stream tags for the per-step derived generators.
constexpr uint64_t kBatchTag = 0x62617463;
constexpr uint64_t kLossTag = 0x6c6f7373;

// k distinct values from [0, n), ascending. Partial Fisher-Yates so the
// draw count depends only on k.
std::vector<int> pick_sorted(Rng& rng, int n, int k) {
  std::vector<int> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  for (int i = 0; i < k; ++i) {
    const int j = i + static_cast<int>(rng.uniform_int(n - i));
    std::swap(idx[i], idx[j]);
  }
  idx.resize(k);
  std::sort(idx.begin(), idx.end());
  return idx;
}

real sval(const ad::Tape& t, ad::Var v) { return t.val(v)(0, 0); }

// Decoded negative log likelihood averaged over the given frames,
// views taken row-by-row from z_view.
ad::Var recon_term(Ctx& c, const Model& m, const Scene& sc,
                   const std::vector<int>& frames, ad::Var z_view,
                   ad::Var z_obj, ad::Var z_bck, ad::Var z_pres) {
  ad::Tape& t = c.t;
  ad::Var ll{-1};
  for (std::size_t i = 0; i < frames.size(); ++i) {
    ad::Var row = t.gather_rows(z_view, {static_cast<int>(i)});
    FrameDecode fd = decode_frame(c, m, z_obj, z_bck, row);
    ad::Var pi = compose_weights(c, fd.shapes, fd.order, z_pres,
                                 m.cfg.compose_rule);
    ad::Var xhat = composite(c, pi, fd);
    ad::Var term =
        image_log_likelihood(t, sc.images[frames[i]], xhat, m.cfg.sigma_x);
    ll = i == 0 ? term : t.add(ll, term);
  }
  return t.scale(ll, -1.0 / static_cast<real>(frames.size()));
}

// Assembles the total in the same association order recomposed() uses,
// so the reported breakdown is a bit-exact identity.
StageLoss finish(ad::Tape& t, ad::Var recon_T, ad::Var recon_Q,
                 ad::Var kl_lam, ad::Var kl_view, ad::Var kl_obj,
                 ad::Var kl_bck, ad::Var kl_nu, ad::Var kl_pres,
                 real kl_weight) {
  ad::Var klsum = t.add(
      t.add(t.add(t.add(t.add(kl_lam, kl_view), kl_obj), kl_bck), kl_nu),
      kl_pres);
  StageLoss out{t.add(t.add(recon_T, recon_Q), t.scale(klsum, kl_weight)), {}};
  out.parts.recon_T = sval(t, recon_T);
  out.parts.recon_Q = sval(t, recon_Q);
  out.parts.kl_lambda = sval(t, kl_lam);
  out.parts.kl_view = sval(t, kl_view);
  out.parts.kl_obj = sval(t, kl_obj);
  out.parts.kl_bck = sval(t, kl_bck);
  out.parts.kl_nu = sval(t, kl_nu);
  out.parts.kl_pres = sval(t, kl_pres);
  out.parts.kl_weight = kl_weight;
  out.parts.total = out.parts.recomposed();
  return out;
}

void write_csv_row(std::ostream& os, long step, const LossBreakdown& lb,
                   real lr, real temp) {
  os << step << ',' << lb.recon_T << ',' << lb.recon_Q << ',' << lb.kl_lambda
     << ',' << lb.kl_view << ',' << lb.kl_obj << ',' << lb.kl_bck << ','
     << lb.kl_nu << ',' << lb.kl_pres << ',' << lb.kl_weight << ','
     << lb.total << ',' << lr << ',' << temp << '\n';
}

}  // namespace

void TrainConfig::validate() const {
  if (stage != 1 && stage != 2) throw ConfigError("stage must be 1 or 2");
  if (total_steps < 1) throw ConfigError("total_steps must be >= 1");
  if (batch < 1) throw ConfigError("batch must be >= 1");
  if (!(lr > 0)) throw ConfigError("lr must be positive");
  if (!(beta >= 1)) throw ConfigError("beta must be >= 1");
  if (!(temp_start >= temp_end) || !(temp_end > 0))
    throw ConfigError("temperature must run from start >= end > 0");
  if (s_size_start < 3) throw ConfigError("s_size_start must be >= 3");
}

TrainConfig TrainConfig::resolved(int dataset_views) const {
  validate();
  if (dataset_views < 1) throw ConfigError("dataset has no views");
  TrainConfig r = *this;
  auto fill = [&](long v, long frac) {
    return v >= 0 ? v : std::max<long>(1, frac);
  };
  r.warmup_steps = fill(warmup_steps, total_steps / 30);
  r.lr_decay_every = fill(lr_decay_every, total_steps / 6);
  r.kl_ramp_steps = fill(kl_ramp_steps, total_steps / 3);
  r.temp_horizon = fill(temp_horizon, total_steps / 2);
  r.checkpoint_every = fill(checkpoint_every, total_steps / 4);
  if (r.views_max < 0) r.views_max = dataset_views;
  r.views_max = std::min(r.views_max, dataset_views);
  if (r.grow_every < 0) {
    r.grow_every =
        stage == 1
            ? std::max<long>(1, (r.total_steps - r.warmup_steps) /
                                    std::max(1, r.views_max))
            : std::max<long>(1, r.total_steps / 6);
  }
  if (stage == 2) {
    if (r.views_max < 3)
      throw ConfigError("stage 2 needs at least 3 views per scene");
    r.s_size_start = std::min(r.s_size_start, r.views_max);
  }
  return r;
}

ScheduleState schedules(long step, const TrainConfig& cfg) {
  if (cfg.warmup_steps < 0 || cfg.lr_decay_every < 0 ||
      cfg.kl_ramp_steps < 0 || cfg.temp_horizon < 0 || cfg.grow_every < 0 ||
      cfg.views_max < 0)
    throw ConfigError("schedules needs a resolved train config");
  ScheduleState s;

  const real warm =
      cfg.warmup_steps > 0
          ? std::min<real>(1.0, static_cast<real>(step) / cfg.warmup_steps)
          : 1.0;
  const real decay =
      cfg.lr_decay_every > 0
          ? std::pow(0.5, static_cast<real>(step / cfg.lr_decay_every))
          : 1.0;
  s.lr = cfg.lr * warm * decay;

  if (cfg.stage == 1) {
    s.kl_weight =
        cfg.kl_ramp_steps > 0
            ? std::min<real>(1.0,
                             static_cast<real>(step) / cfg.kl_ramp_steps)
            : 1.0;
  } else {
    s.kl_weight = cfg.beta;
  }

  const real f =
      cfg.temp_horizon > 0
          ? std::min<real>(1.0, static_cast<real>(step) / cfg.temp_horizon)
          : 1.0;
  if (f <= 0) {
    s.temp = cfg.temp_start;
  } else if (f >= 1) {
    s.temp = cfg.temp_end;
  } else {
    s.temp = std::exp(std::log(cfg.temp_start) +
                      f * (std::log(cfg.temp_end) - std::log(cfg.temp_start)));
  }

  if (cfg.stage == 1) {
    s.views = step < cfg.warmup_steps
                  ? 1
                  : static_cast<int>(std::min<long>(
                        cfg.views_max,
                        2 + (step - cfg.warmup_steps) / cfg.grow_every));
    s.q_max = 0;
  } else {
    s.views = static_cast<int>(std::min<long>(
        cfg.views_max, cfg.s_size_start + 2 * (step / cfg.grow_every)));
    s.q_max = s.views - 2;
  }
  return s;
}

StageLoss loss_stage1(Ctx& c, const Model& m, const BatchElement& be,
                      real kl_weight, real pres_temp, Rng& rng) {
  ad::Tape& t = c.t;
  const Scene& sc = *be.scene;
  std::vector<Matrix> frames;
  std::vector<int> ts;
  for (int i : be.obs) {
    frames.push_back(sc.images[i]);
    ts.push_back(sc.timesteps[i]);
  }
  InferenceResult ir = full_inference(c, m, frames, ts, {}, rng, pres_temp);

  ad::Var recon_T =
      recon_term(c, m, sc, be.obs, ir.z_view_T, ir.z_obj, ir.z_bck, ir.z_pres);
  ad::Var zero = t.constant(Matrix::Zero(1, 1));
  ad::Var kl_view = kl_gaussian_std(t, ir.mu_view, ir.sigma_view);
  ad::Var kl_obj = kl_gaussian_std(t, ir.heads.mu_obj, ir.heads.sigma_obj);
  ad::Var kl_bck = kl_gaussian_std(t, ir.heads.mu_bck, ir.heads.sigma_bck);
  ad::Var kl_nu =
      kl_beta(t, ir.heads.tau1, ir.heads.tau2, m.cfg.alpha / m.cfg.K);
  ad::Var kl_pres =
      kl_pres_under_beta(t, ir.heads.kappa, ir.heads.tau1, ir.heads.tau2);
  return finish(t, recon_T, zero, zero, kl_view, kl_obj, kl_bck, kl_nu,
                kl_pres, kl_weight);
}

StageLoss loss_stage2(Ctx& c, const Model& m, const BatchElement& be,
                      real kl_weight, real pres_temp, Rng& rng) {
  ad::Tape& t = c.t;
  const Scene& sc = *be.scene;
  if (be.query.empty())
    throw ConfigError("stage 2 batch element needs a query frame");
  std::vector<Matrix> frames;
  std::vector<int> ts_obs, ts_query;
  for (int i : be.obs) {
    frames.push_back(sc.images[i]);
    ts_obs.push_back(sc.timesteps[i]);
  }
  for (int i : be.query) ts_query.push_back(sc.timesteps[i]);
  InferenceResult ir =
      full_inference(c, m, frames, ts_obs, ts_query, rng, pres_temp);

  ad::Var recon_T =
      recon_term(c, m, sc, be.obs, ir.z_view_T, ir.z_obj, ir.z_bck, ir.z_pres);
  ad::Var recon_Q = recon_term(c, m, sc, be.query, ir.z_view_Q, ir.z_obj,
                               ir.z_bck, ir.z_pres);

  // Lambda prior means regress on the time encoding through the shared
  // map; the same D_lambda block repeats for every view dimension.
  const int nS = static_cast<int>(ts_obs.size() + ts_query.size());
  Matrix W_S(nS, 2);
  for (std::size_t i = 0; i < ts_obs.size(); ++i)
    W_S.row(static_cast<Eigen::Index>(i)) = encode_time(ts_obs[i], m.cfg.T_max);
  for (std::size_t i = 0; i < ts_query.size(); ++i)
    W_S.row(static_cast<Eigen::Index>(ts_obs.size() + i)) =
        encode_time(ts_query[i], m.cfg.T_max);
  ad::Var base = t.matmul(t.constant(W_S), t.transpose(c.p(m.A)));
  ad::Var mu_p = t.concat_cols(
      std::vector<ad::Var>(static_cast<std::size_t>(m.cfg.view_dim), base));
  ad::Var mu_q = t.concat_rows({ir.mu_lambda_T, ir.mu_lambda_Q});
  ad::Var kl_lam = kl_lambda(t, mu_q, mu_p, m.cfg.sigma_w);

  ad::Var lam_T =
      t.block(ir.lambda_S, 0, 0, static_cast<int>(be.obs.size()),
              static_cast<int>(t.val(ir.lambda_S).cols()));
  ad::Var kl_view =
      kl_view_gp(c, m, ir.mu_view, ir.sigma_view, ir.z_view_T, lam_T);

  ad::Var kl_obj = kl_gaussian_std(t, ir.heads.mu_obj, ir.heads.sigma_obj);
  ad::Var kl_bck = kl_gaussian_std(t, ir.heads.mu_bck, ir.heads.sigma_bck);
  ad::Var kl_nu =
      kl_beta(t, ir.heads.tau1, ir.heads.tau2, m.cfg.alpha / m.cfg.K);
  ad::Var kl_pres =
      kl_pres_under_beta(t, ir.heads.kappa, ir.heads.tau1, ir.heads.tau2);
  return finish(t, recon_T, recon_Q, kl_lam, kl_view, kl_obj, kl_bck, kl_nu,
                kl_pres, kl_weight);
}

std::vector<BatchElement> make_batch(const Dataset& ds,
                                     const TrainConfig& cfg, long step,
                                     const ScheduleState& sch) {
  if (ds.scenes.empty()) throw ConfigError("dataset has no scenes");
  Rng rng(Rng::mix({cfg.seed, kBatchTag, static_cast<uint64_t>(step)}));
  const int T = ds.config.num_views;
  std::vector<BatchElement> out;
  out.reserve(static_cast<std::size_t>(cfg.batch));
  for (int b = 0; b < cfg.batch; ++b) {
    BatchElement be;
    be.scene_index = static_cast<int>(rng.uniform_int(ds.scenes.size()));
    be.scene = &ds.scenes[static_cast<std::size_t>(be.scene_index)];
    if (cfg.stage == 1) {
      be.obs = pick_sorted(rng, T, std::min(sch.views, T));
    } else {
      const std::vector<int> win = pick_sorted(rng, T, std::min(sch.views, T));
      const int q_hi = std::min<int>(sch.q_max,
                                     static_cast<int>(win.size()) - 2);
      const int nq = 1 + static_cast<int>(rng.uniform_int(q_hi));
      const std::vector<int> qpos =
          pick_sorted(rng, static_cast<int>(win.size()), nq);
      std::size_t qi = 0;
      for (std::size_t i = 0; i < win.size(); ++i) {
        if (qi < qpos.size() && static_cast<int>(i) == qpos[qi]) {
          be.query.push_back(win[i]);
          ++qi;
        } else {
          be.obs.push_back(win[i]);
        }
      }
    }
    out.push_back(std::move(be));
  }
  return out;
}

TrainResult train(Model& m, const Dataset& ds, const TrainConfig& cfg0,
                  const std::filesystem::path& out_dir, long start_step) {
  const TrainConfig cfg = cfg0.resolved(ds.config.num_views);
  if (ds.scenes.empty()) throw ConfigError("training needs scenes");
  std::filesystem::create_directories(out_dir);

  const auto csv_path = out_dir / "loss.csv";
  std::ofstream log(csv_path,
                    start_step > 0 ? std::ios::app : std::ios::trunc);
  if (!log) throw FormatError("cannot write " + csv_path.string());
  log << std::setprecision(17);
  if (start_step == 0)
    log << "step,recon_T,recon_Q,kl_lambda,kl_view,kl_obj,kl_bck,kl_nu,"
           "kl_pres,kl_weight,total,lr,temp\n";

  nn::GradBuffer gb(m.ps);
  const nn::AdamConfig adam;
  TrainResult res;
  res.history.reserve(static_cast<std::size_t>(cfg.total_steps - start_step));

  auto save = [&](long done) {
    CheckpointInfo info{cfg.stage, done, cfg.seed};
    char buf[32];
    std::snprintf(buf, sizeof buf, "ckpt_%06ld.bin", done);
    save_checkpoint((out_dir / buf).string(), m, info);
    save_checkpoint((out_dir / "ckpt_latest.bin").string(), m, info);
  };

  for (long step = start_step; step < cfg.total_steps; ++step) {
    const ScheduleState sch = schedules(step, cfg);
    const std::vector<BatchElement> batch = make_batch(ds, cfg, step, sch);

    gb.zero();
    LossBreakdown acc;
    acc.kl_weight = sch.kl_weight;
    for (std::size_t i = 0; i < batch.size(); ++i) {
      ad::Tape tape;
      nn::Ctx c(tape, m.ps);
      Rng er(Rng::mix({cfg.seed, kLossTag, static_cast<uint64_t>(step),
                       static_cast<uint64_t>(i)}));
      const StageLoss sl =
          cfg.stage == 1
              ? loss_stage1(c, m, batch[i], sch.kl_weight, sch.temp, er)
              : loss_stage2(c, m, batch[i], sch.kl_weight, sch.temp, er);
      if (!std::isfinite(sl.parts.total))
        throw NumericsFailure(
            "non-finite loss at step " + std::to_string(step + 1) +
            ", batch element " + std::to_string(i) + ", scene " +
            std::to_string(batch[i].scene_index));
      tape.backward(sl.total);
      gb.accumulate(tape);
      acc.recon_T += sl.parts.recon_T;
      acc.recon_Q += sl.parts.recon_Q;
      acc.kl_lambda += sl.parts.kl_lambda;
      acc.kl_view += sl.parts.kl_view;
      acc.kl_obj += sl.parts.kl_obj;
      acc.kl_bck += sl.parts.kl_bck;
      acc.kl_nu += sl.parts.kl_nu;
      acc.kl_pres += sl.parts.kl_pres;
    }
    const real inv = 1.0 / static_cast<real>(batch.size());
    gb.scale(inv);
    if (cfg.freeze_decoder) {
      for (int i = 0; i < m.ps.count(); ++i)
        if (m.ps.at(i).name.rfind("dec.", 0) == 0) gb.g[i].setZero();
    }
    if (!gb.finite())
      throw NumericsFailure("non-finite gradient at step " +
                            std::to_string(step + 1));
    nn::adam_step(m.ps, gb, adam, step + 1, sch.lr);

    LossBreakdown row;
    row.recon_T = acc.recon_T * inv;
    row.recon_Q = acc.recon_Q * inv;
    row.kl_lambda = acc.kl_lambda * inv;
    row.kl_view = acc.kl_view * inv;
    row.kl_obj = acc.kl_obj * inv;
    row.kl_bck = acc.kl_bck * inv;
    row.kl_nu = acc.kl_nu * inv;
    row.kl_pres = acc.kl_pres * inv;
    row.kl_weight = sch.kl_weight;
    row.total = row.recomposed();
    res.history.push_back(row);
    write_csv_row(log, step + 1, row, sch.lr, sch.temp);
    log.flush();

    const bool last = step + 1 == cfg.total_steps;
    if ((cfg.checkpoint_every > 0 && (step + 1) % cfg.checkpoint_every == 0) ||
        last)
      save(step + 1);
  }
  return res;
}

}  // namespace occgen
