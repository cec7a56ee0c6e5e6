#pragma once

#include <vector>

#include "occgen/model.hpp"

namespace occgen {

using ad::Var;
using nn::Ctx;

// One draw of every latent in the generative chain, plain values.
struct LatentBundle {
  Matrix z_obj;                 // K x z_obj_dim
  Matrix z_bck;                 // 1 x z_bck_dim
  Vector z_pres;                // K, in [0,1]
  Vector nu;                    // K, in (0,1)
  std::vector<Matrix> lambda;   // per frame: view_dim x lambda_dim
  Matrix z_view;                // T x view_dim
};

// Decoded quantities for a single frame, on the tape. Shapes are
// sigmoid outputs; appearances are unbounded and rely on training to
// stay near [0, 1].
struct FrameDecode {
  Var shapes;             // (H*W) x K
  std::vector<Var> app;   // K of (H*W) x 3
  Var bck;                // (H*W) x 3
  Var order;              // K x 1 raw scores, larger means closer
};

// Shared spatial-broadcast decoder: latent row -> (H*W) x out_ch.
Var broadcast_decode(Ctx& c, const std::vector<nn::Conv2d>& convs,
                     Var latent_row, int H, int W);

FrameDecode decode_frame(Ctx& c, const Model& m, Var z_obj, Var z_bck,
                         Var z_view_t);

// Mixing weights over K+1 layers (column 0 is background). The
// background weight is the product of per-object transparencies; the
// leftover mass is split among objects by rule:
//   SoftmaxOrder: u_k = z_pres_k * s_k * softmax_k(order)
//   Literal:      u_k = 1 - z_pres_k * s_k * order_k
// Zero total object weight splits the leftover mass uniformly.
Var compose_weights(Ctx& c, Var shapes, Var order, Var z_pres,
                    ComposeRule rule);

// x_hat = sum_k pi_k a_k.
Var composite(Ctx& c, Var pi, const FrameDecode& fd);

// Sum over pixels and channels of the Gaussian log density
// N(x | x_hat, sigma_x^2 I), constant included.
Var image_log_likelihood(ad::Tape& t, const Matrix& x, Var xhat, real sigma_x);

// Draw z_view ~ N(0, K) per view dimension with the Gram matrix built
// from the given lambdas (per frame: view_dim x lambda_dim).
Matrix sample_view_given_lambda(Model& m, const std::vector<Matrix>& lambda,
                                Rng& rng);

// Ancestral sampling of the full prior at the given timesteps. The GP
// gram matrices are built from the drawn lambdas with the current
// kernel parameters.
LatentBundle sample_priors(Model& m, const std::vector<int>& timesteps,
                           Rng& rng);

struct Rollout {
  LatentBundle bundle;
  std::vector<Matrix> images;   // T of (H*W) x 3
  std::vector<Matrix> pi;       // T of (H*W) x (K+1)
  std::vector<Matrix> shapes;   // T of (H*W) x K
  Matrix order;                 // T x K
};

Rollout generate_rollout(Model& m, const std::vector<int>& timesteps,
                         Rng& rng);

}  // namespace occgen
