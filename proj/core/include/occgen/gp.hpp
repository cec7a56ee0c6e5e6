#pragma once

#include <utility>
#include <vector>

#include "occgen/nn.hpp"

namespace occgen::gp {

using ad::Var;
using nn::Ctx;
using nn::ParamStore;

// One view dimension gets its own deep RBF kernel: a small feature net
// g plus log amplitude and log bandwidth. k(a, b) =
// l^2 exp(-||g(a) - g(b)||^2 / (2 sigma^2)), strictly positive and
// bounded by l^2.
struct GpDim {
  nn::Mlp feat;
  int log_l = -1;
  int log_sigma = -1;

  static GpDim create(ParamStore& ps, const std::string& name,
                      const std::vector<int>& dims, Rng& rng);

  // Numerical stabilizer for factorizations, scales with the kernel.
  real jitter(const ParamStore& ps) const;
};

// Full Gram matrix over the rows of lam (n x D_lambda) -> n x n.
// Exactly symmetric by construction.
Var gram(Ctx& c, const GpDim& d, Var lam);

// Cross covariance between two row sets -> |a| x |b|.
Var cross_gram(Ctx& c, const GpDim& d, Var lam_a, Var lam_b);

// K[rows, cols] for an already-built Gram matrix.
Var sub_block(ad::Tape& t, Var K, const std::vector<int>& rows,
              const std::vector<int>& cols);

// Exact Gaussian conditional of the query block given observed values.
// mu = R C_T^-1 z, Sigma = C_Q - R C_T^-1 R^T symmetrized; Cholesky
// solves only. Empty query gives empty outputs.
std::pair<Var, Var> condition(Ctx& c, Var C_T, Var R_QT, Var C_Q, Var z_T,
                              real jitter);

// mu + chol(Sigma + jitter I) eps; eps is treated as a constant.
Var sample_conditional(Ctx& c, Var mu, Var Sigma, const Vector& eps,
                       real jitter);

// log N(z | 0, C) through the tape (differentiable in both arguments).
inline Var log_density(Ctx& c, Var C, Var z, real jitter) {
  return c.t.gauss_logpdf(C, z, jitter);
}

inline constexpr real kJitterScale = 1e-6;

}  // namespace occgen::gp
