#pragma once

#include <filesystem>
#include <vector>

#include "occgen/dataset_io.hpp"
#include "occgen/encode.hpp"
#include "occgen/model.hpp"

namespace occgen {

// Horizons default to -1 and are filled in by resolved() as fixed
// fractions of total_steps, so configs stay valid when the step budget
// changes. grow_every controls both curricula: stage 1 adds one view
// per block after the single-view warmup, stage 2 adds two frames to
// the sampled window per block.
struct TrainConfig {
  int stage = 1;
  long total_steps = 10000;
  int batch = 16;
  real lr = 4e-4;
  long warmup_steps = -1;      // total / 30
  long lr_decay_every = -1;    // total / 6, rate halves per block
  long kl_ramp_steps = -1;     // total / 3, stage 1 only
  real beta = 1.0;             // stage 2 KL weight, >= 1
  real temp_start = 10.0;      // presence relaxation temperature
  real temp_end = 0.5;
  long temp_horizon = -1;      // total / 2
  int s_size_start = 3;        // stage 2 initial frame window
  long grow_every = -1;
  long checkpoint_every = -1;  // total / 4
  bool freeze_decoder = false;
  int views_max = -1;          // capped at the dataset's views
  uint64_t seed = 0;

  void validate() const;
  TrainConfig resolved(int dataset_views) const;
};

struct ScheduleState {
  real lr = 0;
  real kl_weight = 0;
  real temp = 0;
  int views = 1;  // stage 1: frames per scene; stage 2: window |S'|
  int q_max = 0;  // stage 2 only, window minus the two-frame fit floor
};

// cfg must already be resolved. lr ramps linearly over the warmup and
// halves every decay block; the temperature interpolates log-linearly
// and is exact at both endpoints.
ScheduleState schedules(long step, const TrainConfig& cfg);

// Per-scene loss components, already normalized per frame. total is
// always recomposed() so the stage formula holds as a bit-exact
// identity on the stored fields.
struct LossBreakdown {
  real recon_T = 0;
  real recon_Q = 0;
  real kl_lambda = 0;
  real kl_view = 0;
  real kl_obj = 0;
  real kl_bck = 0;
  real kl_nu = 0;
  real kl_pres = 0;
  real kl_weight = 0;
  real total = 0;

  real recomposed() const {
    return recon_T + recon_Q +
           kl_weight *
               (((((kl_lambda + kl_view) + kl_obj) + kl_bck) + kl_nu) +
                kl_pres);
  }
};

struct BatchElement {
  const Scene* scene = nullptr;
  int scene_index = -1;    // kept for diagnostics
  std::vector<int> obs;    // frame indices into the scene
  std::vector<int> query;  // stage 2 only, disjoint from obs
};

struct StageLoss {
  ad::Var total;  // on the caller's tape, same association order as
                  // LossBreakdown::recomposed()
  LossBreakdown parts;
};

// ELBO over the observed frames with standard-normal priors on every
// Gaussian latent; the time-regression and GP machinery is bypassed.
StageLoss loss_stage1(Ctx& c, const Model& m, const BatchElement& be,
                      real kl_weight, real pres_temp, Rng& rng);

// Observed plus query reconstruction with the time-conditioned priors:
// lambda means regress on the time encoding through the shared map,
// the view prior is the per-dimension GP, query views come from its
// conditional. be.query must be nonempty and obs needs at least two
// frames for the least-squares fit.
StageLoss loss_stage2(Ctx& c, const Model& m, const BatchElement& be,
                      real kl_weight, real pres_temp, Rng& rng);

// Deterministic batch composition: scene picks and frame subsets
// derive from (seed, step) alone, so a resumed run replays the exact
// stream. Subsets are sorted ascending.
std::vector<BatchElement> make_batch(const Dataset& ds,
                                     const TrainConfig& cfg, long step,
                                     const ScheduleState& sch);

struct TrainResult {
  std::vector<LossBreakdown> history;  // one row per optimizer step
};

// Adam loop over resolved(cfg). Appends one CSV row per step to
// out_dir/loss.csv, writes ckpt_<step>.bin plus ckpt_latest.bin every
// checkpoint block and at the end. start_step > 0 resumes after that
// step and appends to the existing log. Throws NumericsFailure when
// the loss or a gradient stops being finite.
TrainResult train(Model& m, const Dataset& ds, const TrainConfig& cfg,
                  const std::filesystem::path& out_dir, long start_step = 0);

}  // namespace occgen
