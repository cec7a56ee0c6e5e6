#include "occgen/losses.hpp"

#include <cmath>
#include <numbers>

#include "occgen/gp.hpp"

namespace occgen {

Var kl_gaussian_std(ad::Tape& t, Var mu, Var sigma) {
  Var inner = t.sub(t.add(t.square(mu), t.square(sigma)),
                    t.add_const(t.scale(t.log(sigma), 2.0), 1.0));
  return t.scale(t.sum(inner), 0.5);
}

Var kl_lambda(ad::Tape& t, Var mu_q, Var mu_p, real sigma_w) {
  return t.scale(t.sum(t.square(t.sub(mu_q, mu_p))),
                 0.5 / (sigma_w * sigma_w));
}

Var kl_beta(ad::Tape& t, Var tau1, Var tau2, real a) {
  // KL = logG(s) - logG(t1) - logG(t2) - log a
  //      + (t1 - a) psi(t1) + (t2 - 1) psi(t2) + (a + 1 - s) psi(s)
  // with s = t1 + t2; the prior normalizer collapses to -log a for
  // Beta(a, 1).
  Var s = t.add(tau1, tau2);
  Var kl = t.sub(t.lgamma(s), t.add(t.lgamma(tau1), t.lgamma(tau2)));
  kl = t.add_const(kl, -std::log(a));
  kl = t.add(kl, t.cmul(t.add_const(tau1, -a), t.digamma(tau1)));
  kl = t.add(kl, t.cmul(t.add_const(tau2, -1.0), t.digamma(tau2)));
  kl = t.add(kl, t.cmul(t.add_const(t.neg(s), a + 1.0), t.digamma(s)));
  return t.sum(kl);
}

Var kl_pres_under_beta(ad::Tape& t, Var kappa, Var tau1, Var tau2) {
  Var s = t.add(tau1, tau2);
  Var one_m = t.add_const(t.neg(kappa), 1.0);
  Var kl = t.digamma(s);
  kl = t.add(kl, t.cmul(kappa, t.sub(t.log(kappa), t.digamma(tau1))));
  kl = t.add(kl, t.cmul(one_m, t.sub(t.log(one_m), t.digamma(tau2))));
  return t.sum(kl);
}

Var gaussian_log_q(ad::Tape& t, Var mu, Var sigma, Var z) {
  const real n = static_cast<real>(t.val(mu).size());
  Var e = t.cdiv(t.sub(z, mu), sigma);
  Var per = t.sub(t.scale(t.square(e), -0.5), t.log(sigma));
  return t.add_const(t.sum(per),
                     -0.5 * n * std::log(2.0 * std::numbers::pi_v<real>));
}

Var kl_view_gp(Ctx& c, const Model& m, Var mu_view, Var sigma_view,
               Var z_view_T, Var lambda_T) {
  ad::Tape& t = c.t;
  const int T = static_cast<int>(t.val(z_view_T).rows());
  const int Dl = m.cfg.lambda_dim;
  Var acc;
  for (int d = 0; d < m.cfg.view_dim; ++d) {
    Var z_d = t.block(z_view_T, 0, d, T, 1);
    Var logq = gaussian_log_q(t, t.block(mu_view, 0, d, T, 1),
                              t.block(sigma_view, 0, d, T, 1), z_d);
    Var lam_d = t.block(lambda_T, 0, d * Dl, T, Dl);
    Var K = gp::gram(c, m.gp_dims[d], lam_d);
    Var logp = t.gauss_logpdf(K, z_d, m.gp_dims[d].jitter(m.ps));
    Var term = t.sub(logq, logp);
    acc = d == 0 ? term : t.add(acc, term);
  }
  return acc;
}

}  // namespace occgen
