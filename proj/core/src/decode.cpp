#include "occgen/decode.hpp"

#include <cmath>
#include <numbers>

namespace occgen {

namespace {

// Two coordinate channels in [-1, 1], row index y * g + x.
Matrix coord_grid(int g) {
  Matrix c(g * g, 2);
  for (int y = 0; y < g; ++y) {
    for (int x = 0; x < g; ++x) {
      c(y * g + x, 0) = g > 1 ? 2.0 * x / (g - 1) - 1.0 : 0.0;
      c(y * g + x, 1) = g > 1 ? 2.0 * y / (g - 1) - 1.0 : 0.0;
    }
  }
  return c;
}

}  // namespace

Var broadcast_decode(Ctx& c, const std::vector<nn::Conv2d>& convs,
                     Var latent_row, int H, int W) {
  if (H != W || H % 4 != 0) throw ConfigError("broadcast_decode: bad size");
  ad::Tape& t = c.t;
  const int g = H / 4;
  Var inp = t.concat_cols(
      {t.broadcast_row(latent_row, g * g), t.constant(coord_grid(g))});
  Var h = t.relu(convs[0].apply(c, inp, g, g));
  h = t.upsample2x(h, g, g);
  h = t.relu(convs[1].apply(c, h, 2 * g, 2 * g));
  h = t.upsample2x(h, 2 * g, 2 * g);
  h = t.relu(convs[2].apply(c, h, 4 * g, 4 * g));
  return convs[3].apply(c, h, 4 * g, 4 * g);
}

FrameDecode decode_frame(Ctx& c, const Model& m, Var z_obj, Var z_bck,
                         Var z_view_t) {
  ad::Tape& t = c.t;
  const int H = m.cfg.image_size;
  const int HW = H * H;
  const int K = static_cast<int>(t.val(z_obj).rows());

  FrameDecode fd;
  std::vector<Var> shape_cols, order_rows;
  shape_cols.reserve(K);
  order_rows.reserve(K);
  fd.app.reserve(K);
  for (int k = 0; k < K; ++k) {
    Var zk = t.block(z_obj, k, 0, 1, m.cfg.z_obj_dim);
    Var inp = t.concat_cols({zk, z_view_t});
    Var out = broadcast_decode(c, m.dec_obj, inp, H, H);
    fd.app.push_back(t.block(out, 0, 0, HW, 3));
    shape_cols.push_back(t.sigmoid(t.block(out, 0, 3, HW, 1)));
    order_rows.push_back(m.g_ord.apply(c, inp));
  }
  fd.shapes = t.concat_cols(shape_cols);
  fd.order = t.concat_rows(order_rows);
  fd.bck = broadcast_decode(c, m.dec_bck, t.concat_cols({z_bck, z_view_t}),
                            H, H);
  return fd;
}

Var compose_weights(Ctx& c, Var shapes, Var order, Var z_pres,
                    ComposeRule rule) {
  ad::Tape& t = c.t;
  const int HW = static_cast<int>(t.val(shapes).rows());
  const int K = static_cast<int>(t.val(shapes).cols());

  // q_k = z_pres_k * s_k, the effective per-pixel opacity.
  Var q = t.cmul(shapes, t.broadcast_row(t.transpose(z_pres), HW));

  // Background keeps whatever every object lets through. Column-wise
  // product instead of exp-log so fully opaque objects stay exact.
  Var pi0;
  for (int k = 0; k < K; ++k) {
    Var open = t.add_const(t.neg(t.block(q, 0, k, HW, 1)), 1.0);
    pi0 = k == 0 ? open : t.cmul(pi0, open);
  }
  Var fg = t.add_const(t.neg(pi0), 1.0);

  Var u;
  if (rule == ComposeRule::SoftmaxOrder) {
    Var w = t.softmax_rows(t.transpose(order));  // 1 x K
    u = t.cmul(q, t.broadcast_row(w, HW));
  } else {
    Var o = t.broadcast_row(t.transpose(order), HW);
    u = t.add_const(t.neg(t.cmul(q, o)), 1.0);
  }
  Var su = t.rowwise_sum(u);

  // Rows with zero total weight get a uniform split; the mask is a
  // constant, so the (measure-zero) branch carries no gradient.
  const Matrix& suv = t.val(su);
  Matrix mask = (suv.array() == 0.0).cast<real>();
  if (mask.sum() > 0.0) {
    u = t.add(u, t.broadcast_col(t.constant(mask / K), K));
    su = t.add(su, t.constant(mask));
  }
  Var pi_obj = t.cmul(t.broadcast_col(fg, K), t.cdiv(u, t.broadcast_col(su, K)));
  return t.concat_cols({pi0, pi_obj});
}

Var composite(Ctx& c, Var pi, const FrameDecode& fd) {
  ad::Tape& t = c.t;
  const int HW = static_cast<int>(t.val(pi).rows());
  const int C = static_cast<int>(t.val(fd.bck).cols());
  Var x = t.cmul(fd.bck, t.broadcast_col(t.block(pi, 0, 0, HW, 1), C));
  for (std::size_t k = 0; k < fd.app.size(); ++k) {
    Var w = t.broadcast_col(t.block(pi, 0, static_cast<int>(k) + 1, HW, 1), C);
    x = t.add(x, t.cmul(fd.app[k], w));
  }
  return x;
}

Var image_log_likelihood(ad::Tape& t, const Matrix& x, Var xhat,
                         real sigma_x) {
  const real n = static_cast<real>(x.size());
  Var sq = t.sum(t.square(t.sub(xhat, t.constant(x))));
  const real log_norm =
      -0.5 * n * std::log(2.0 * std::numbers::pi_v<real> * sigma_x * sigma_x);
  return t.add_const(t.scale(sq, -0.5 / (sigma_x * sigma_x)), log_norm);
}

Matrix sample_view_given_lambda(Model& m, const std::vector<Matrix>& lambda,
                                Rng& rng) {
  const int T = static_cast<int>(lambda.size());
  const int D = m.cfg.view_dim;
  Matrix z_view(T, D);
  ad::Tape tape;
  Ctx c{tape, m.ps};
  for (int d = 0; d < D; ++d) {
    Matrix lam_d(T, m.cfg.lambda_dim);
    for (int t = 0; t < T; ++t) lam_d.row(t) = lambda[t].row(d);
    Var K = gp::gram(c, m.gp_dims[d], tape.constant(lam_d));
    real jit = m.gp_dims[d].jitter(m.ps);
    Eigen::LLT<Matrix> llt = ad::Tape::factor(tape.val(K), jit, nullptr);
    Vector eps(T);
    for (int t = 0; t < T; ++t) eps(t) = rng.normal();
    z_view.col(d) = Matrix(llt.matrixL()) * eps;
  }
  return z_view;
}

LatentBundle sample_priors(Model& m, const std::vector<int>& timesteps,
                           Rng& rng) {
  const ModelConfig& cfg = m.cfg;
  const int T = static_cast<int>(timesteps.size());
  const int K = cfg.K;
  LatentBundle b;

  b.z_obj = Matrix(K, cfg.z_obj_dim);
  for (int k = 0; k < K; ++k)
    for (int j = 0; j < cfg.z_obj_dim; ++j) b.z_obj(k, j) = rng.normal();
  b.z_bck = Matrix(1, cfg.z_bck_dim);
  for (int j = 0; j < cfg.z_bck_dim; ++j) b.z_bck(0, j) = rng.normal();

  b.nu = Vector(K);
  b.z_pres = Vector(K);
  for (int k = 0; k < K; ++k) {
    b.nu(k) = rng.beta(cfg.alpha / K, 1.0);
    b.z_pres(k) = rng.uniform() < b.nu(k) ? 1.0 : 0.0;
  }

  const Matrix A = m.ps.at(m.A).value;  // D_lambda x 2
  b.lambda.resize(T);
  for (int t = 0; t < T; ++t) {
    Vector mean = A * encode_time(timesteps[t], cfg.T_max).transpose();
    b.lambda[t] = Matrix(cfg.view_dim, cfg.lambda_dim);
    for (int d = 0; d < cfg.view_dim; ++d)
      for (int j = 0; j < cfg.lambda_dim; ++j)
        b.lambda[t](d, j) = mean(j) + cfg.sigma_w * rng.normal();
  }
  b.z_view = sample_view_given_lambda(m, b.lambda, rng);
  return b;
}

Rollout generate_rollout(Model& m, const std::vector<int>& timesteps,
                         Rng& rng) {
  Rollout r;
  r.bundle = sample_priors(m, timesteps, rng);
  const int T = static_cast<int>(timesteps.size());
  r.order = Matrix(T, m.cfg.K);
  ad::Tape tape;
  Ctx c{tape, m.ps};
  Var z_obj = tape.constant(r.bundle.z_obj);
  Var z_bck = tape.constant(r.bundle.z_bck);
  Var z_pres = tape.constant(r.bundle.z_pres);
  for (int t = 0; t < T; ++t) {
    Var z_view_t = tape.constant(r.bundle.z_view.row(t));
    FrameDecode fd = decode_frame(c, m, z_obj, z_bck, z_view_t);
    Var pi = compose_weights(c, fd.shapes, fd.order, z_pres,
                             m.cfg.compose_rule);
    Var xhat = composite(c, pi, fd);
    r.images.push_back(tape.val(xhat));
    r.pi.push_back(tape.val(pi));
    r.shapes.push_back(tape.val(fd.shapes));
    r.order.row(t) = tape.val(fd.order).transpose();
  }
  return r;
}

}  // namespace occgen
