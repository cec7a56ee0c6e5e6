#include "occgen/model.hpp"

#include <cmath>

namespace occgen {

ComposeRule compose_rule_from_name(const std::string& name) {
  if (name == "softmax-order") return ComposeRule::SoftmaxOrder;
  if (name == "literal") return ComposeRule::Literal;
  throw ConfigError("unknown compose rule: " + name);
}

std::string compose_rule_name(ComposeRule r) {
  return r == ComposeRule::SoftmaxOrder ? "softmax-order" : "literal";
}

void ModelConfig::validate() const {
  if (K < 1) throw ConfigError("K must be >= 1");
  if (T_max < 1) throw ConfigError("T_max must be >= 1");
  if (!(sigma_x > 0 && sigma_w > 0 && alpha > 0))
    throw ConfigError("sigma_x, sigma_w, alpha must be positive");
  int s = image_size;
  if (s < 4) throw ConfigError("image_size must be >= 4");
  while (s > 4 && s % 2 == 0) s /= 2;
  if (s != 4) throw ConfigError("image_size must be 4 * 2^m");
  if (view_dim < 1 || lambda_dim < 1 || z_obj_dim < 1 || z_bck_dim < 1)
    throw ConfigError("latent dims must be positive");
}

Eigen::RowVector2d encode_time(int t, int T_max) {
  const real a = 2.0 * M_PI * static_cast<real>(t) / static_cast<real>(T_max);
  Eigen::RowVector2d w;
  w << std::cos(a), std::sin(a);
  return w;
}

Model Model::create(const ModelConfig& cfg) {
  cfg.validate();
  Model m;
  m.cfg = cfg;
  Rng rng(Rng::mix({cfg.param_seed, 0x70617261}));
  auto& ps = m.ps;
  const int cf = cfg.token_ch;

  // Encoder downsampling chain to a 4x4 token grid; image sizes below
  // 32 use the tail of the channel ladder.
  {
    int n_down = 0;
    for (int s = cfg.image_size; s > 4; s /= 2) ++n_down;
    std::vector<int> ladder = {32, 64, cf};
    std::vector<int> chans = {3};
    for (int i = 0; i < n_down; ++i) {
      std::ptrdiff_t idx =
          static_cast<std::ptrdiff_t>(ladder.size()) - n_down + i;
      chans.push_back(ladder[std::max<std::ptrdiff_t>(0, idx)]);
    }
    if (n_down == 0) chans.push_back(cf);
    for (std::size_t i = 0; i + 1 < chans.size(); ++i) {
      const int stride = n_down == 0 ? 1 : 2;
      m.feat_convs.push_back(
          nn::Conv2d::create(ps, "enc.conv" + std::to_string(i), chans[i],
                             chans[i + 1], 3, stride, 1, rng));
    }
  }
  m.pos_embed = nn::Linear::create(ps, "enc.pos", 4, cf, rng);
  for (int i = 0; i < 2; ++i)
    m.trunk.push_back(nn::TransformerBlock::create(
        ps, "enc.blk" + std::to_string(i), cf, 4, 2 * cf, rng));
  m.view_stem = nn::Linear::create(ps, "enc.view_stem", cf, cfg.view_feat_dim,
                                   rng);
  m.lam_down = nn::Conv2d::create(ps, "enc.lam_down", cf, cf, 3, 2, 1, rng);
  m.lam_trunk.push_back(
      nn::TransformerBlock::create(ps, "enc.lam_blk0", cf, 4, 2 * cf, rng));
  m.f_view = nn::Mlp::create(ps, "enc.f_view",
                             {cfg.view_feat_dim, 64, 64, 2 * cfg.view_dim},
                             rng);
  m.f_lambda = nn::Mlp::create(
      ps, "enc.f_lambda",
      {cf + 2, 64, 32, cfg.view_dim * cfg.lambda_dim}, rng);

  const int ds = cfg.slot_dim();
  m.proj_k = nn::Linear::create(ps, "sa.k", cf, 64, rng);
  m.proj_q = nn::Linear::create(ps, "sa.q", ds, 64, rng);
  m.proj_v = nn::Linear::create(ps, "sa.v", cf, ds, rng);
  m.gru = nn::GruCell::create(ps, "sa.gru", ds, ds, rng);
  m.slot_mu_obj = ps.add("sa.mu_obj", Matrix::Zero(1, cfg.attr_dim));
  m.slot_logsig_obj = ps.add("sa.logsig_obj", Matrix::Zero(1, cfg.attr_dim));
  m.slot_mu_bck = ps.add("sa.mu_bck", Matrix::Zero(1, cfg.attr_dim));
  m.slot_logsig_bck = ps.add("sa.logsig_bck", Matrix::Zero(1, cfg.attr_dim));
  m.f_obj = nn::Mlp::create(
      ps, "head.f_obj", {cfg.attr_dim, 256, 256, 2 * cfg.z_obj_dim + 3}, rng);
  m.f_bck = nn::Mlp::create(ps, "head.f_bck",
                            {cfg.attr_dim, 256, 256, 2 * cfg.z_bck_dim}, rng);

  {
    Matrix a0(cfg.lambda_dim, 2);
    for (int j = 0; j < 2; ++j)
      for (int i = 0; i < cfg.lambda_dim; ++i) a0(i, j) = rng.normal(0.0, 0.5);
    m.A = ps.add("gen.A", a0);
  }
  for (int d = 0; d < cfg.view_dim; ++d)
    m.gp_dims.push_back(gp::GpDim::create(
        ps, "gen.gp" + std::to_string(d), {cfg.lambda_dim, 16, 16, 8}, rng));

  auto make_decoder = [&](const std::string& name, int in_dim, int out_ch) {
    std::vector<nn::Conv2d> convs;
    convs.push_back(
        nn::Conv2d::create(ps, name + ".c0", in_dim + 2, 32, 3, 1, 1, rng));
    convs.push_back(nn::Conv2d::create(ps, name + ".c1", 32, 32, 3, 1, 1, rng));
    convs.push_back(nn::Conv2d::create(ps, name + ".c2", 32, 16, 3, 1, 1, rng));
    convs.push_back(
        nn::Conv2d::create(ps, name + ".out", 16, out_ch, 1, 1, 0, rng, 1.0));
    return convs;
  };
  m.dec_obj = make_decoder("dec.obj", cfg.z_obj_dim + cfg.view_dim, 4);
  m.dec_bck = make_decoder("dec.bck", cfg.z_bck_dim + cfg.view_dim, 3);
  m.g_ord = nn::Mlp::create(ps, "dec.ord",
                            {cfg.z_obj_dim + cfg.view_dim, 64, 64, 1}, rng);
  return m;
}

}  // namespace occgen
