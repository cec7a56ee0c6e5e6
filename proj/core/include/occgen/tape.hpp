#pragma once

#include <functional>
#include <vector>

#include "occgen/common.hpp"

namespace occgen::ad {

// Reverse-mode automatic differentiation over dense double matrices.
// A Tape records one forward computation; backward() runs the adjoint
// sweep in reverse creation order. Tapes are cheap to discard, one is
// built per scene per step.
//
// Shape conventions are documented per op. Spatial tensors are stored
// as (H*W) x C with row index y*W + x.

class Tape;

struct Var {
  int id = -1;
  bool valid() const { return id >= 0; }
};

class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // ---- leaves ----
  Var constant(Matrix v);
  // Differentiable leaf. `slot` tags the parameter store index, -1 for
  // plain inputs that only need a gradient (finite difference probes).
  Var leaf(Matrix v, int slot = -1);

  const Matrix& val(Var x) const { return nodes_[x.id].val; }
  // Zero matrix when the node was never touched by backward.
  Matrix grad(Var x) const;
  bool requires_grad(Var x) const { return nodes_[x.id].req; }

  // (slot, var) for every parameter leaf, in creation order.
  const std::vector<std::pair<int, Var>>& param_leaves() const {
    return param_leaves_;
  }

  std::size_t size() const { return nodes_.size(); }

  // Root must be 1x1. Clears previous gradients.
  void backward(Var root);

  // ---- elementwise and scalar ----
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var neg(Var a);
  Var cmul(Var a, Var b);
  Var cdiv(Var a, Var b);
  Var scale(Var a, real c);
  Var add_const(Var a, real c);
  Var square(Var a);
  Var exp(Var a);
  Var log(Var a);
  Var sqrt(Var a);
  Var tanh(Var a);
  Var sigmoid(Var a);
  Var relu(Var a);
  Var softplus(Var a);
  Var lgamma(Var a);
  Var digamma(Var a);
  // s is 1x1; broadcast multiply / add over all entries of a.
  Var cmul_scalar(Var a, Var s);
  Var add_scalar(Var a, Var s);

  // ---- linear algebra ----
  Var matmul(Var a, Var b);
  Var transpose(Var a);

  // ---- structure ----
  Var block(Var a, int i, int j, int rows, int cols);
  Var concat_rows(const std::vector<Var>& parts);
  Var concat_cols(const std::vector<Var>& parts);
  Var gather_rows(Var a, std::vector<int> rows);
  // v is n x 1, result n x cols with v in every column.
  Var broadcast_col(Var v, int cols);
  // v is 1 x m, result rows x m with v in every row.
  Var broadcast_row(Var v, int rows);

  // ---- reductions ----
  Var sum(Var a);
  Var mean(Var a);
  Var rowwise_sum(Var a);
  Var colwise_sum(Var a);

  // ---- row-wise normalizations ----
  Var softmax_rows(Var a);
  Var log_softmax_rows(Var a);
  Var layer_norm_rows(Var x, Var gamma, Var beta, real eps = 1e-5);

  // ---- convolution stack ----
  // x: (H*W) x Cin. w: (kh*kw*Cin) x Cout with row index
  // ky*(kw*Cin) + kx*Cin + ci. b: 1 x Cout. Zero padding.
  Var conv2d(Var x, Var w, Var b, int H, int W, int kh, int kw, int stride,
             int pad);
  Var upsample2x(Var x, int H, int W);

  // ---- Cholesky-backed ops ----
  // All three factor (A + jitter I) with doubling escalation and throw
  // CholeskyFailure when kCholMaxAttempts rescues fail.
  // X = A^-1 B for symmetric positive definite A.
  Var chol_solve(Var A, Var B, real jitter);
  // L eps for L = chol(Sigma + jitter I); the sampling half of a
  // reparameterized Gaussian draw.
  Var chol_matvec(Var Sigma, Var eps, real jitter);
  // log N(z | 0, C), 1x1.
  Var gauss_logpdf(Var C, Var z, real jitter);

  static constexpr int kCholMaxAttempts = 8;
  // Factor A + j I, escalating j by doubling. Returns the factor; sets
  // *used to the jitter that succeeded.
  static Eigen::LLT<Matrix> factor(const Matrix& A, real jitter, real* used);

 private:
  struct Node {
    Matrix val;
    Matrix grad;
    bool req = false;
    std::function<void()> back;
  };

  Var push(Matrix v, bool req, std::function<void()> back = {});
  void acc(int id, const Matrix& g);
  bool req(Var a) const { return nodes_[a.id].req; }

  // Unary elementwise helper: dval receives (x, y) entrywise.
  Var unary(Var a, const std::function<real(real)>& f,
            const std::function<real(real, real)>& dval);

  std::vector<Node> nodes_;
  std::vector<std::pair<int, Var>> param_leaves_;

  friend struct TapeTestAccess;
};

// Column layout helper shared by conv2d forward and backward.
void im2col(const Matrix& x, int H, int W, int kh, int kw, int stride, int pad,
            Matrix& out, int* oh, int* ow);

}  // namespace occgen::ad
