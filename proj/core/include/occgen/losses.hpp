#pragma once

#include "occgen/model.hpp"

namespace occgen {

using ad::Var;
using nn::Ctx;

// All KL terms are summed over the entries of their inputs and return
// 1x1 nodes.

// KL(N(mu, diag sigma^2) || N(0, I)) = 1/2 sum(mu^2 + sigma^2
// - log sigma^2 - 1).
Var kl_gaussian_std(ad::Tape& t, Var mu, Var sigma);

// Equal-covariance Gaussians: ||mu_q - mu_p||^2 / (2 sigma_w^2).
Var kl_lambda(ad::Tape& t, Var mu_q, Var mu_p, real sigma_w);

// Exact KL(Beta(tau1, tau2) || Beta(a, 1)) per entry.
Var kl_beta(ad::Tape& t, Var tau1, Var tau2, real a);

// E_{nu ~ Beta(tau1, tau2)} KL(Bernoulli(kappa) || Bernoulli(nu)).
Var kl_pres_under_beta(ad::Tape& t, Var kappa, Var tau1, Var tau2);

// Diagonal Gaussian log density of z under N(mu, diag sigma^2).
Var gaussian_log_q(ad::Tape& t, Var mu, Var sigma, Var z);

// Single-sample KL between the view posterior and the GP prior over
// the observed frames: sum_d [log q_d(z) - log N(z | 0, K_d)] with K_d
// built from the observed lambda block. The query-side terms cancel
// because the posterior over query views is the GP conditional itself.
Var kl_view_gp(Ctx& c, const Model& m, Var mu_view, Var sigma_view,
               Var z_view_T, Var lambda_T);

}  // namespace occgen
