#include "occgen/encode.hpp"

#include <Eigen/SVD>
#include <algorithm>
#include <cmath>

#include "occgen/gp.hpp"

namespace occgen {

namespace {

// (x, y, cos t, sin t) rows for one frame's token grid.
Matrix pos_inputs(int g, int timestep, int t_max) {
  Eigen::RowVector2d w = encode_time(timestep, t_max);
  Matrix p(g * g, 4);
  for (int y = 0; y < g; ++y) {
    for (int x = 0; x < g; ++x) {
      p(y * g + x, 0) = g > 1 ? 2.0 * x / (g - 1) - 1.0 : 0.0;
      p(y * g + x, 1) = g > 1 ? 2.0 * y / (g - 1) - 1.0 : 0.0;
      p(y * g + x, 2) = w(0);
      p(y * g + x, 3) = w(1);
    }
  }
  return p;
}

Matrix time_design(const std::vector<int>& ts, int t_max) {
  Matrix w(ts.size(), 2);
  for (std::size_t i = 0; i < ts.size(); ++i)
    w.row(i) = encode_time(ts[i], t_max);
  return w;
}

Matrix draw_normal(Rng& rng, int r, int cdim) {
  Matrix m(r, cdim);
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < cdim; ++j) m(i, j) = rng.normal();
  return m;
}

}  // namespace

ViewFeatures extract_view_features(Ctx& c, const Model& m,
                                   const std::vector<Matrix>& frames,
                                   const std::vector<int>& t_obs) {
  if (frames.size() != t_obs.size() || frames.empty())
    throw ConfigError("extract_view_features: frame/timestep mismatch");
  ad::Tape& t = c.t;
  const ModelConfig& cfg = m.cfg;
  const int T = static_cast<int>(frames.size());
  const int g = cfg.token_grid();
  const int L = cfg.tokens_per_frame();
  const int cf = cfg.token_ch;

  std::vector<Var> per_frame;
  per_frame.reserve(T);
  for (int i = 0; i < T; ++i) {
    Var h = t.constant(frames[i]);
    int side = cfg.image_size;
    for (const nn::Conv2d& conv : m.feat_convs) {
      int next = nn::Conv2d::out_dim(side, conv.kh, conv.stride, conv.pad);
      h = t.relu(conv.apply(c, h, side, side));
      side = next;
    }
    Var pos = m.pos_embed.apply(c, t.constant(pos_inputs(g, t_obs[i],
                                                         cfg.T_max)));
    per_frame.push_back(t.add(h, pos));
  }

  // Joint self-attention over all T*L tokens.
  Var x = T == 1 ? per_frame[0] : t.concat_rows(per_frame);
  for (const nn::TransformerBlock& blk : m.trunk) x = blk.apply(c, x);

  ViewFeatures vf;
  std::vector<Var> view_rows;
  std::vector<Var> lam_tokens;
  for (int i = 0; i < T; ++i) {
    Var tok = t.block(x, i * L, 0, L, cf);
    vf.tokens.push_back(tok);
    Var pooled = t.scale(t.colwise_sum(tok), 1.0 / L);
    view_rows.push_back(m.view_stem.apply(c, pooled));
    lam_tokens.push_back(t.relu(m.lam_down.apply(c, tok, g, g)));
  }
  vf.y_view = T == 1 ? view_rows[0] : t.concat_rows(view_rows);

  const int lg = g / 2;
  Var lx = T == 1 ? lam_tokens[0] : t.concat_rows(lam_tokens);
  for (const nn::TransformerBlock& blk : m.lam_trunk) lx = blk.apply(c, lx);
  std::vector<Var> lam_rows;
  for (int i = 0; i < T; ++i) {
    Var tok = t.block(lx, i * lg * lg, 0, lg * lg, cf);
    lam_rows.push_back(t.scale(t.colwise_sum(tok), 1.0 / (lg * lg)));
  }
  vf.y_lambda = T == 1 ? lam_rows[0] : t.concat_rows(lam_rows);
  return vf;
}

std::pair<Var, Var> infer_view_posterior(Ctx& c, const Model& m, Var y_view) {
  ad::Tape& t = c.t;
  const int T = static_cast<int>(t.val(y_view).rows());
  const int D = m.cfg.view_dim;
  Var out = m.f_view.apply(c, y_view);
  Var mu = t.block(out, 0, 0, T, D);
  Var sigma =
      t.add_const(t.softplus(t.block(out, 0, D, T, D)), kSigmaFloor);
  return {mu, sigma};
}

Var infer_lambda_observed(Ctx& c, const Model& m, Var y_lambda,
                          const std::vector<int>& t_obs) {
  ad::Tape& t = c.t;
  Matrix w = time_design(t_obs, m.cfg.T_max);
  return m.f_lambda.apply(c, t.concat_cols({y_lambda, t.constant(w)}));
}

Var fit_lambda_query(ad::Tape& t, Var mu_lambda_T, const Matrix& W_T,
                     const Matrix& W_Q) {
  const int T = static_cast<int>(W_T.rows());
  const int wd = static_cast<int>(W_T.cols());
  if (T < wd)
    throw DegenerateDesign("need at least " + std::to_string(wd) +
                           " observed frames to fit lambda");
  Eigen::JacobiSVD<Matrix> svd(W_T,
                               Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Vector& sv = svd.singularValues();
  if (sv.size() == 0 || sv(0) <= 0.0)
    throw DegenerateDesign("time design matrix has rank 0");
  const real tol = sv(0) * 1e-12;
  Matrix sinv = Matrix::Zero(wd, wd);
  for (int i = 0; i < sv.size(); ++i)
    if (sv(i) > tol) sinv(i, i) = 1.0 / sv(i);
  Matrix pinv = svd.matrixV() * sinv * svd.matrixU().transpose();  // wd x T
  Matrix P = W_Q * pinv;  // |Q| x |T|, constant in the graph
  return t.matmul(t.constant(P), mu_lambda_T);
}

GpPosterior infer_view_query(Ctx& c, const Model& m, Var z_view_T,
                             Var lambda_S, const std::vector<int>& obs_idx,
                             const std::vector<int>& query_idx) {
  ad::Tape& t = c.t;
  const int S = static_cast<int>(t.val(lambda_S).rows());
  const int Dl = m.cfg.lambda_dim;
  const int T = static_cast<int>(obs_idx.size());
  GpPosterior out;
  for (int d = 0; d < m.cfg.view_dim; ++d) {
    Var lam_d = t.block(lambda_S, 0, d * Dl, S, Dl);
    Var K = gp::gram(c, m.gp_dims[d], lam_d);
    Var C_T = gp::sub_block(t, K, obs_idx, obs_idx);
    Var R = gp::sub_block(t, K, query_idx, obs_idx);
    Var C_Q = gp::sub_block(t, K, query_idx, query_idx);
    Var z_d = t.block(z_view_T, 0, d, T, 1);
    auto [mu, sig] =
        gp::condition(c, C_T, R, C_Q, z_d, m.gp_dims[d].jitter(m.ps));
    out.mu.push_back(mu);
    out.sigma.push_back(sig);
  }
  return out;
}

Var run_slot_attention_with_init(Ctx& c, const Model& m,
                                 const std::vector<Var>& tokens, Var y_view,
                                 const Matrix& eps_obj, const Matrix& eps_bck,
                                 int iters) {
  ad::Tape& t = c.t;
  const ModelConfig& cfg = m.cfg;
  const int T = static_cast<int>(tokens.size());
  const int K = cfg.K;
  const int da = cfg.attr_dim;
  const int N = static_cast<int>(t.val(tokens[0]).rows());

  Var sig_o = t.exp(c.p(m.slot_logsig_obj));
  Var attr_obj = t.add(t.broadcast_row(c.p(m.slot_mu_obj), K),
                       t.cmul(t.broadcast_row(sig_o, K), t.constant(eps_obj)));
  Var attr_bck = t.add(c.p(m.slot_mu_bck),
                       t.cmul(t.exp(c.p(m.slot_logsig_bck)),
                              t.constant(eps_bck)));
  Var y_attr = t.concat_rows({attr_obj, attr_bck});

  std::vector<Var> keys, vals;
  for (int i = 0; i < T; ++i) {
    keys.push_back(m.proj_k.apply(c, tokens[i]));
    vals.push_back(m.proj_v.apply(c, tokens[i]));
  }
  const real inv_sqrt_d = 1.0 / 8.0;  // key width is 64
  for (int it = 0; it < iters; ++it) {
    Var acc;
    for (int i = 0; i < T; ++i) {
      Var yv = t.broadcast_row(
          t.block(y_view, i, 0, 1, cfg.view_feat_dim), K + 1);
      Var slots = t.concat_cols({y_attr, yv});
      Var q = m.proj_q.apply(c, slots);
      Var logits = t.scale(t.matmul(keys[i], t.transpose(q)), inv_sqrt_d);
      // Softmax over the slot axis, then normalize over locations for
      // the value mean.
      Var attn = t.softmax_rows(logits);  // N x (K+1)
      Var w = t.cdiv(attn, t.broadcast_row(t.colwise_sum(attn), N));
      Var upd = t.matmul(t.transpose(w), vals[i]);  // (K+1) x slot_dim
      Var h = m.gru.apply(c, upd, slots);
      Var attr = t.block(h, 0, 0, K + 1, da);
      acc = i == 0 ? attr : t.add(acc, attr);
    }
    y_attr = t.scale(acc, 1.0 / T);
  }
  return y_attr;
}

Var run_slot_attention(Ctx& c, const Model& m, const std::vector<Var>& tokens,
                       Var y_view, Rng& rng, int iters) {
  Matrix eps_obj = draw_normal(rng, m.cfg.K, m.cfg.attr_dim);
  Matrix eps_bck = draw_normal(rng, 1, m.cfg.attr_dim);
  return run_slot_attention_with_init(c, m, tokens, y_view, eps_obj, eps_bck,
                                      iters);
}

Heads infer_object_heads(Ctx& c, const Model& m, Var y_attr) {
  ad::Tape& t = c.t;
  const int K = m.cfg.K;
  const int da = m.cfg.attr_dim;
  const int zo = m.cfg.z_obj_dim;
  const int zb = m.cfg.z_bck_dim;
  Heads h;
  Var o = m.f_obj.apply(c, t.block(y_attr, 0, 0, K, da));
  h.mu_obj = t.block(o, 0, 0, K, zo);
  h.sigma_obj = t.add_const(t.exp(t.block(o, 0, zo, K, zo)), kSigmaFloor);
  h.tau1 = t.add_const(t.softplus(t.block(o, 0, 2 * zo, K, 1)), 1e-4);
  h.tau2 = t.add_const(t.softplus(t.block(o, 0, 2 * zo + 1, K, 1)), 1e-4);
  h.kappa = t.add_const(
      t.scale(t.sigmoid(t.block(o, 0, 2 * zo + 2, K, 1)), 1.0 - 2 * kKappaEps),
      kKappaEps);
  Var b = m.f_bck.apply(c, t.block(y_attr, K, 0, 1, da));
  h.mu_bck = t.block(b, 0, 0, 1, zb);
  h.sigma_bck = t.add_const(t.exp(t.block(b, 0, zb, 1, zb)), kSigmaFloor);
  return h;
}

InferenceResult full_inference(Ctx& c, const Model& m,
                               const std::vector<Matrix>& frames,
                               const std::vector<int>& t_obs,
                               const std::vector<int>& t_query, Rng& rng,
                               real pres_temp) {
  ad::Tape& t = c.t;
  const ModelConfig& cfg = m.cfg;
  const int T = static_cast<int>(t_obs.size());
  const int Q = static_cast<int>(t_query.size());
  const int K = cfg.K;

  InferenceResult r;
  r.feats = extract_view_features(c, m, frames, t_obs);
  std::tie(r.mu_view, r.sigma_view) = infer_view_posterior(c, m, r.feats.y_view);
  r.mu_lambda_T = infer_lambda_observed(c, m, r.feats.y_lambda, t_obs);
  if (Q > 0) {
    r.mu_lambda_Q =
        fit_lambda_query(t, r.mu_lambda_T, time_design(t_obs, cfg.T_max),
                         time_design(t_query, cfg.T_max));
    r.lambda_S = t.concat_rows({r.mu_lambda_T, r.mu_lambda_Q});
  } else {
    r.lambda_S = r.mu_lambda_T;
  }

  r.y_attr = run_slot_attention(c, m, r.feats.tokens, r.feats.y_view, rng,
                                cfg.slot_iters);
  r.heads = infer_object_heads(c, m, r.y_attr);

  r.z_view_T = t.add(r.mu_view, t.cmul(r.sigma_view,
                                       t.constant(draw_normal(rng, T,
                                                              cfg.view_dim))));
  r.z_obj = t.add(r.heads.mu_obj,
                  t.cmul(r.heads.sigma_obj,
                         t.constant(draw_normal(rng, K, cfg.z_obj_dim))));
  r.z_bck = t.add(r.heads.mu_bck,
                  t.cmul(r.heads.sigma_bck,
                         t.constant(draw_normal(rng, 1, cfg.z_bck_dim))));

  if (pres_temp > 0.0) {
    Matrix g(K, 1);
    for (int k = 0; k < K; ++k) {
      real u = std::clamp(rng.uniform(), 1e-12, 1.0 - 1e-12);
      g(k, 0) = std::log(u) - std::log(1.0 - u);
    }
    Var logit_kappa = t.sub(t.log(r.heads.kappa),
                            t.log(t.add_const(t.neg(r.heads.kappa), 1.0)));
    r.z_pres =
        t.sigmoid(t.scale(t.add(logit_kappa, t.constant(g)), 1.0 / pres_temp));
  } else {
    const Matrix& kv = t.val(r.heads.kappa);
    Matrix zp(K, 1);
    for (int k = 0; k < K; ++k) zp(k, 0) = kv(k, 0) > 0.5 ? 1.0 : 0.0;
    r.z_pres = t.constant(zp);
  }

  if (Q > 0) {
    std::vector<int> obs_idx(T), query_idx(Q);
    for (int i = 0; i < T; ++i) obs_idx[i] = i;
    for (int i = 0; i < Q; ++i) query_idx[i] = T + i;
    r.view_q = infer_view_query(c, m, r.z_view_T, r.lambda_S, obs_idx,
                                query_idx);
    std::vector<Var> cols;
    for (int d = 0; d < cfg.view_dim; ++d) {
      Vector eps(Q);
      for (int i = 0; i < Q; ++i) eps(i) = rng.normal();
      cols.push_back(gp::sample_conditional(c, r.view_q.mu[d],
                                            r.view_q.sigma[d], eps,
                                            m.gp_dims[d].jitter(m.ps)));
    }
    r.z_view_Q = t.concat_cols(cols);
  }
  return r;
}

}  // namespace occgen
