#pragma once

#include <utility>
#include <vector>

#include "occgen/model.hpp"

namespace occgen {

using ad::Var;
using nn::Ctx;

// Presence probabilities are kept strictly inside (eps, 1 - eps).
inline constexpr real kKappaEps = 1e-4;

struct ViewFeatures {
  std::vector<Var> tokens;  // per frame: L x C_f, after the joint trunk
  Var y_view;               // |T| x view_feat_dim
  Var y_lambda;             // |T| x C_f
};

// CNN to a 4x4 token grid, position embedding over (x, y, cos t,
// sin t), self-attention jointly over all T*L tokens, then per-frame
// pooled summaries for the view and lambda heads.
ViewFeatures extract_view_features(Ctx& c, const Model& m,
                                   const std::vector<Matrix>& frames,
                                   const std::vector<int>& t_obs);

// Per-frame diagonal Gaussian over z_view. sigma = softplus(raw) + floor.
std::pair<Var, Var> infer_view_posterior(Ctx& c, const Model& m, Var y_view);

// Mean of q(lambda_t) for the observed frames, |T| x (D * D_lambda)
// with dimension-major column layout; the covariance is fixed at
// sigma_w^2 I.
Var infer_lambda_observed(Ctx& c, const Model& m, Var y_lambda,
                          const std::vector<int>& t_obs);

// Least-squares extrapolation of lambda means to query times: fits
// lambda ~ A w per output column from the observed frames and
// evaluates at W_Q. Differentiable in mu_lambda_T; the fit operator is
// a constant built from the time encodings via SVD pseudo-inverse.
// Throws DegenerateDesign when W_T has rank 0 or fewer rows than
// columns.
Var fit_lambda_query(ad::Tape& t, Var mu_lambda_T, const Matrix& W_T,
                     const Matrix& W_Q);

// Per-dimension exact GP conditionals of query view latents given the
// sampled observed ones, with covariances built from lambda_S.
struct GpPosterior {
  std::vector<Var> mu;     // per dim: |Q| x 1
  std::vector<Var> sigma;  // per dim: |Q| x |Q|
};
GpPosterior infer_view_query(Ctx& c, const Model& m, Var z_view_T,
                             Var lambda_S, const std::vector<int>& obs_idx,
                             const std::vector<int>& query_idx);

// K object slots plus one background slot, initialized from learned
// Gaussians and refined by cross-attention with a GRU update. Returns
// the attribute parts, (K+1) x attr_dim, background last. The view
// part of each slot is re-concatenated fresh every iteration and the
// attribute update is averaged over frames.
Var run_slot_attention(Ctx& c, const Model& m, const std::vector<Var>& tokens,
                       Var y_view, Rng& rng, int iters);

// Same with caller-provided initial slot noise (K x attr_dim object
// rows, 1 x attr_dim background row).
Var run_slot_attention_with_init(Ctx& c, const Model& m,
                                 const std::vector<Var>& tokens, Var y_view,
                                 const Matrix& eps_obj, const Matrix& eps_bck,
                                 int iters);

struct Heads {
  Var mu_obj, sigma_obj;   // K x z_obj_dim
  Var tau1, tau2, kappa;   // K x 1
  Var mu_bck, sigma_bck;   // 1 x z_bck_dim
};
Heads infer_object_heads(Ctx& c, const Model& m, Var y_attr);

// Everything the losses need from one posterior pass plus one sample
// of each latent. Query members are invalid when t_query is empty.
struct InferenceResult {
  ViewFeatures feats;
  Var mu_view, sigma_view;  // |T| x D
  Var mu_lambda_T;          // |T| x (D * D_lambda)
  Var mu_lambda_Q;          // |Q| x (D * D_lambda)
  Var lambda_S;             // |S| x (D * D_lambda), observed rows first
  Var y_attr;
  Heads heads;
  GpPosterior view_q;
  Var z_view_T;  // |T| x D
  Var z_view_Q;  // |Q| x D
  Var z_obj;     // K x z_obj_dim
  Var z_bck;     // 1 x z_bck_dim
  Var z_pres;    // K x 1
};

// Posterior pass over observed frames plus sampling. pres_temp > 0
// draws relaxed Bernoulli presence at that temperature; otherwise
// presence is thresholded at 0.5 (no gradient). Noise draw order:
// slot init, view, object, background, presence, then per-dimension
// query noise.
InferenceResult full_inference(Ctx& c, const Model& m,
                               const std::vector<Matrix>& frames,
                               const std::vector<int>& t_obs,
                               const std::vector<int>& t_query, Rng& rng,
                               real pres_temp);

}  // namespace occgen
