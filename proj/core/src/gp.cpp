#include "occgen/gp.hpp"

#include <cmath>

namespace occgen::gp {

GpDim GpDim::create(ParamStore& ps, const std::string& name,
                    const std::vector<int>& dims, Rng& rng) {
  GpDim d;
  d.feat = nn::Mlp::create(ps, name + ".feat", dims, rng);
  d.log_l = ps.add(name + ".log_l", Matrix::Zero(1, 1));
  d.log_sigma = ps.add(name + ".log_sigma", Matrix::Zero(1, 1));
  return d;
}

real GpDim::jitter(const ParamStore& ps) const {
  return kJitterScale * std::exp(2.0 * ps.at(log_l).value(0, 0));
}

namespace {

// l^2 exp(-D2 / (2 sigma^2)) from squared feature distances.
Var kernel_of_d2(Ctx& c, const GpDim& d, Var d2) {
  ad::Tape& t = c.t;
  Var l2 = t.exp(t.scale(c.p(d.log_l), 2.0));
  Var neg_half_inv_s2 = t.scale(t.exp(t.scale(c.p(d.log_sigma), -2.0)), -0.5);
  return t.cmul_scalar(t.exp(t.cmul_scalar(d2, neg_half_inv_s2)), l2);
}

}  // namespace

Var gram(Ctx& c, const GpDim& d, Var lam) {
  ad::Tape& t = c.t;
  Var f = d.feat.apply(c, lam);
  const int n = static_cast<int>(t.val(f).rows());
  Var s = t.rowwise_sum(t.square(f));          // n x 1
  Var sc = t.broadcast_col(s, n);              // n x n, rows constant
  Var g = t.matmul(f, t.transpose(f));
  Var d2 = t.sub(t.add(sc, t.transpose(sc)), t.scale(g, 2.0));
  // Gram must be exactly symmetric for the Cholesky path, enforce it.
  Var d2s = t.scale(t.add(d2, t.transpose(d2)), 0.5);
  return kernel_of_d2(c, d, d2s);
}

Var cross_gram(Ctx& c, const GpDim& d, Var lam_a, Var lam_b) {
  ad::Tape& t = c.t;
  Var fa = d.feat.apply(c, lam_a);
  Var fb = d.feat.apply(c, lam_b);
  const int na = static_cast<int>(t.val(fa).rows());
  const int nb = static_cast<int>(t.val(fb).rows());
  Var sa = t.rowwise_sum(t.square(fa));
  Var sb = t.rowwise_sum(t.square(fb));
  Var d2 = t.sub(t.add(t.broadcast_col(sa, nb),
                       t.transpose(t.broadcast_col(sb, na))),
                 t.scale(t.matmul(fa, t.transpose(fb)), 2.0));
  return kernel_of_d2(c, d, d2);
}

Var sub_block(ad::Tape& t, Var K, const std::vector<int>& rows,
              const std::vector<int>& cols) {
  return t.transpose(t.gather_rows(t.transpose(t.gather_rows(K, rows)), cols));
}

std::pair<Var, Var> condition(Ctx& c, Var C_T, Var R_QT, Var C_Q, Var z_T,
                              real jitter) {
  ad::Tape& t = c.t;
  const Eigen::Index q = t.val(C_Q).rows();
  if (q == 0) {
    return {t.constant(Matrix::Zero(0, 1)), t.constant(Matrix::Zero(0, 0))};
  }
  Var s1 = t.chol_solve(C_T, z_T, jitter);                  // C_T^-1 z
  Var s2 = t.chol_solve(C_T, t.transpose(R_QT), jitter);    // C_T^-1 R^T
  Var mu = t.matmul(R_QT, s1);
  Var sigma = t.sub(C_Q, t.matmul(R_QT, s2));
  Var sym = t.scale(t.add(sigma, t.transpose(sigma)), 0.5);
  return {mu, sym};
}

Var sample_conditional(Ctx& c, Var mu, Var Sigma, const Vector& eps,
                       real jitter) {
  ad::Tape& t = c.t;
  if (t.val(mu).rows() == 0) return mu;
  Var e = t.constant(eps);
  return t.add(mu, t.chol_matvec(Sigma, e, jitter));
}

}  // namespace occgen::gp
