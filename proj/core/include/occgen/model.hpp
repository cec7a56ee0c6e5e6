#pragma once

#include <string>
#include <vector>

#include "occgen/gp.hpp"
#include "occgen/nn.hpp"

namespace occgen {

enum class ComposeRule { SoftmaxOrder, Literal };

ComposeRule compose_rule_from_name(const std::string& name);
std::string compose_rule_name(ComposeRule r);

struct ModelConfig {
  int image_size = 32;   // H = W, must be 4 * 2^m
  int K = 5;             // object slots
  int T_max = 10;        // period of the time encoding
  int z_obj_dim = 64;
  int z_bck_dim = 16;
  int view_dim = 3;      // D
  int lambda_dim = 5;    // D_lambda
  real sigma_x = 0.2;
  real sigma_w = 0.8;
  real alpha = 12.6;     // Beta prior concentration, prior is Beta(alpha/K, 1)
  int token_ch = 64;     // C_f
  int attr_dim = 128;    // slot attribute width
  int view_feat_dim = 8; // y_view width
  int slot_iters = 3;
  ComposeRule compose_rule = ComposeRule::SoftmaxOrder;
  uint64_t param_seed = 1;

  int slot_dim() const { return attr_dim + view_feat_dim; }  // 136
  int token_grid() const { return 4; }                       // tokens per side
  int tokens_per_frame() const { return 16; }                // L
  void validate() const;
};

// All learnable pieces. Parameters live in the store; the layer structs
// only hold ids, so Model itself is cheap to pass around by reference.
struct Model {
  ModelConfig cfg;
  nn::ParamStore ps;

  // encoder: image -> tokens
  std::vector<nn::Conv2d> feat_convs;
  nn::Linear pos_embed;                       // (x, y, cos t, sin t) -> C_f
  std::vector<nn::TransformerBlock> trunk;    // over all T*L tokens
  nn::Linear view_stem;                       // C_f -> y_view
  nn::Conv2d lam_down;                        // token grid 4x4 -> 2x2
  std::vector<nn::TransformerBlock> lam_trunk;
  nn::Mlp f_view;                             // y_view -> (mu, raw sigma) of z_view
  nn::Mlp f_lambda;                           // (y_lambda, w_t) -> lambda means

  // slot attention
  nn::Linear proj_k, proj_q, proj_v;
  nn::GruCell gru;
  int slot_mu_obj = -1, slot_logsig_obj = -1;
  int slot_mu_bck = -1, slot_logsig_bck = -1;
  nn::Mlp f_obj;                              // attr -> obj posterior params
  nn::Mlp f_bck;                              // attr -> bck posterior params

  // generative side
  int A = -1;                                 // lambda prior mean map, D_lambda x 2
  std::vector<gp::GpDim> gp_dims;             // one per view dimension
  std::vector<nn::Conv2d> dec_obj;            // broadcast decoder, 4 output ch
  std::vector<nn::Conv2d> dec_bck;            // broadcast decoder, 3 output ch
  nn::Mlp g_ord;                              // (z_obj, z_view) -> order score

  static Model create(const ModelConfig& cfg);
};

// [cos(2 pi t / T_max), sin(2 pi t / T_max)] as a 1 x 2 row.
Eigen::RowVector2d encode_time(int t, int T_max);

}  // namespace occgen
