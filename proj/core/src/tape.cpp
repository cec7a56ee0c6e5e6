#include "occgen/tape.hpp"

#include <boost/math/special_functions/digamma.hpp>
#include <boost/math/special_functions/trigamma.hpp>
#include <cmath>
#include <memory>
#include <utility>

namespace occgen::ad {

namespace {
void check(bool ok, const char* what) {
  if (!ok) throw std::logic_error(std::string("tape: ") + what);
}
}  // namespace

Var Tape::push(Matrix v, bool r, std::function<void()> back) {
  Node n;
  n.val = std::move(v);
  n.req = r;
  if (r) n.back = std::move(back);
  nodes_.push_back(std::move(n));
  return Var{static_cast<int>(nodes_.size()) - 1};
}

void Tape::acc(int id, const Matrix& g) {
  Node& n = nodes_[id];
  if (!n.req) return;
  if (n.grad.size() == 0) {
    n.grad = g;
  } else {
    n.grad += g;
  }
}

Var Tape::constant(Matrix v) { return push(std::move(v), false); }

Var Tape::leaf(Matrix v, int slot) {
  Var out = push(std::move(v), true);
  if (slot >= 0) param_leaves_.emplace_back(slot, out);
  return out;
}

Matrix Tape::grad(Var x) const {
  const Node& n = nodes_[x.id];
  if (n.grad.size() == 0) return Matrix::Zero(n.val.rows(), n.val.cols());
  return n.grad;
}

void Tape::backward(Var root) {
  check(nodes_[root.id].val.size() == 1, "backward root must be 1x1");
  for (auto& n : nodes_) n.grad.resize(0, 0);
  nodes_[root.id].grad = Matrix::Ones(1, 1);
  for (int i = root.id; i >= 0; --i) {
    Node& n = nodes_[i];
    if (n.grad.size() != 0 && n.back) n.back();
  }
}

// ---- elementwise ----

Var Tape::add(Var a, Var b) {
  check(val(a).rows() == val(b).rows() && val(a).cols() == val(b).cols(),
        "add shape");
  Var out = push(val(a) + val(b), req(a) || req(b));
  if (!nodes_[out.id].req) return out;
  nodes_[out.id].back = [this, a, b, out] {
    const Matrix& g = nodes_[out.id].grad;
    acc(a.id, g);
    acc(b.id, g);
  };
  return out;
}

Var Tape::sub(Var a, Var b) {
  check(val(a).rows() == val(b).rows() && val(a).cols() == val(b).cols(),
        "sub shape");
  Var out = push(val(a) - val(b), req(a) || req(b));
  if (!nodes_[out.id].req) return out;
  nodes_[out.id].back = [this, a, b, out] {
    const Matrix& g = nodes_[out.id].grad;
    acc(a.id, g);
    acc(b.id, -g);
  };
  return out;
}

Var Tape::neg(Var a) { return scale(a, -1.0); }

Var Tape::cmul(Var a, Var b) {
  check(val(a).rows() == val(b).rows() && val(a).cols() == val(b).cols(),
        "cmul shape");
  Var out = push(val(a).cwiseProduct(val(b)), req(a) || req(b));
  if (!nodes_[out.id].req) return out;
  nodes_[out.id].back = [this, a, b, out] {
    const Matrix& g = nodes_[out.id].grad;
    acc(a.id, g.cwiseProduct(val(b)));
    acc(b.id, g.cwiseProduct(val(a)));
  };
  return out;
}

Var Tape::cdiv(Var a, Var b) {
  check(val(a).rows() == val(b).rows() && val(a).cols() == val(b).cols(),
        "cdiv shape");
  Var out = push(val(a).cwiseQuotient(val(b)), req(a) || req(b));
  if (!nodes_[out.id].req) return out;
  nodes_[out.id].back = [this, a, b, out] {
    const Matrix& g = nodes_[out.id].grad;
    acc(a.id, g.cwiseQuotient(val(b)));
    acc(b.id, -g.cwiseProduct(val(out)).cwiseQuotient(val(b)));
  };
  return out;
}

Var Tape::scale(Var a, real c) {
  Var out = push(val(a) * c, req(a));
  if (!nodes_[out.id].req) return out;
  nodes_[out.id].back = [this, a, c, out] {
    acc(a.id, nodes_[out.id].grad * c);
  };
  return out;
}

Var Tape::add_const(Var a, real c) {
  Var out = push(val(a).array() + c, req(a));
  if (!nodes_[out.id].req) return out;
  nodes_[out.id].back = [this, a, out] { acc(a.id, nodes_[out.id].grad); };
  return out;
}

Var Tape::square(Var a) {
  Var out = push(val(a).cwiseProduct(val(a)), req(a));
  if (!nodes_[out.id].req) return out;
  nodes_[out.id].back = [this, a, out] {
    acc(a.id, 2.0 * nodes_[out.id].grad.cwiseProduct(val(a)));
  };
  return out;
}

Var Tape::exp(Var a) {
  Var out = push(val(a).array().exp(), req(a));
  if (!nodes_[out.id].req) return out;
  nodes_[out.id].back = [this, a, out] {
    acc(a.id, nodes_[out.id].grad.cwiseProduct(val(out)));
  };
  return out;
}

Var Tape::log(Var a) {
  Var out = push(val(a).array().log(), req(a));
  if (!nodes_[out.id].req) return out;
  nodes_[out.id].back = [this, a, out] {
    acc(a.id, nodes_[out.id].grad.cwiseQuotient(val(a)));
  };
  return out;
}

Var Tape::sqrt(Var a) {
  Var out = push(val(a).array().sqrt(), req(a));
  if (!nodes_[out.id].req) return out;
  nodes_[out.id].back = [this, a, out] {
    acc(a.id,
        (nodes_[out.id].grad.array() * 0.5 / val(out).array()).matrix());
  };
  return out;
}

Var Tape::tanh(Var a) {
  Var out = push(val(a).array().tanh(), req(a));
  if (!nodes_[out.id].req) return out;
  nodes_[out.id].back = [this, a, out] {
    acc(a.id, (nodes_[out.id].grad.array() * (1.0 - val(out).array().square()))
                  .matrix());
  };
  return out;
}

Var Tape::sigmoid(Var a) {
  Matrix y = val(a).unaryExpr([](real x) { return occgen::sigmoid(x); });
  Var out = push(std::move(y), req(a));
  if (!nodes_[out.id].req) return out;
  nodes_[out.id].back = [this, a, out] {
    const auto& y = val(out).array();
    acc(a.id, (nodes_[out.id].grad.array() * y * (1.0 - y)).matrix());
  };
  return out;
}

Var Tape::relu(Var a) {
  Var out = push(val(a).cwiseMax(0.0), req(a));
  if (!nodes_[out.id].req) return out;
  nodes_[out.id].back = [this, a, out] {
    const Matrix mask =
        (val(a).array() > 0.0).cast<real>().matrix();
    acc(a.id, nodes_[out.id].grad.cwiseProduct(mask));
  };
  return out;
}

Var Tape::softplus(Var a) {
  Matrix y = val(a).unaryExpr([](real x) { return occgen::softplus(x); });
  Var out = push(std::move(y), req(a));
  if (!nodes_[out.id].req) return out;
  nodes_[out.id].back = [this, a, out] {
    const Matrix d =
        val(a).unaryExpr([](real x) { return occgen::sigmoid(x); });
    acc(a.id, nodes_[out.id].grad.cwiseProduct(d));
  };
  return out;
}

Var Tape::unary(Var a, const std::function<real(real)>& f,
                const std::function<real(real, real)>& dval) {
  Matrix y = val(a).unaryExpr([&](real x) { return f(x); });
  Var out = push(std::move(y), req(a));
  if (!nodes_[out.id].req) return out;
  nodes_[out.id].back = [this, a, out, dval] {
    const Matrix& x = val(a);
    const Matrix& y = val(out);
    Matrix d(x.rows(), x.cols());
    for (Eigen::Index j = 0; j < x.cols(); ++j)
      for (Eigen::Index i = 0; i < x.rows(); ++i)
        d(i, j) = dval(x(i, j), y(i, j));
    acc(a.id, nodes_[out.id].grad.cwiseProduct(d));
  };
  return out;
}

Var Tape::lgamma(Var a) {
  return unary(
      a, [](real x) { return std::lgamma(x); },
      [](real x, real) { return boost::math::digamma(x); });
}

Var Tape::digamma(Var a) {
  return unary(
      a, [](real x) { return boost::math::digamma(x); },
      [](real x, real) { return boost::math::trigamma(x); });
}

Var Tape::cmul_scalar(Var a, Var s) {
  check(val(s).size() == 1, "cmul_scalar needs 1x1 scalar");
  Var out = push(val(a) * val(s)(0, 0), req(a) || req(s));
  if (!nodes_[out.id].req) return out;
  nodes_[out.id].back = [this, a, s, out] {
    const Matrix& g = nodes_[out.id].grad;
    acc(a.id, g * val(s)(0, 0));
    Matrix gs(1, 1);
    gs(0, 0) = g.cwiseProduct(val(a)).sum();
    acc(s.id, gs);
  };
  return out;
}

Var Tape::add_scalar(Var a, Var s) {
  check(val(s).size() == 1, "add_scalar needs 1x1 scalar");
  Var out = push(val(a).array() + val(s)(0, 0), req(a) || req(s));
  if (!nodes_[out.id].req) return out;
  nodes_[out.id].back = [this, a, s, out] {
    const Matrix& g = nodes_[out.id].grad;
    acc(a.id, g);
    Matrix gs(1, 1);
    gs(0, 0) = g.sum();
    acc(s.id, gs);
  };
  return out;
}

// ---- linear algebra ----

Var Tape::matmul(Var a, Var b) {
  check(val(a).cols() == val(b).rows(), "matmul inner dim");
  Var out = push(val(a) * val(b), req(a) || req(b));
  if (!nodes_[out.id].req) return out;
  nodes_[out.id].back = [this, a, b, out] {
    const Matrix& g = nodes_[out.id].grad;
    acc(a.id, g * val(b).transpose());
    acc(b.id, val(a).transpose() * g);
  };
  return out;
}

Var Tape::transpose(Var a) {
  Var out = push(val(a).transpose(), req(a));
  if (!nodes_[out.id].req) return out;
  nodes_[out.id].back = [this, a, out] {
    acc(a.id, nodes_[out.id].grad.transpose());
  };
  return out;
}

// ---- structure ----

Var Tape::block(Var a, int i, int j, int rows, int cols) {
  check(i >= 0 && j >= 0 && i + rows <= val(a).rows() &&
            j + cols <= val(a).cols(),
        "block bounds");
  Var out = push(val(a).block(i, j, rows, cols), req(a));
  if (!nodes_[out.id].req) return out;
  nodes_[out.id].back = [this, a, i, j, rows, cols, out] {
    Matrix g = Matrix::Zero(val(a).rows(), val(a).cols());
    g.block(i, j, rows, cols) = nodes_[out.id].grad;
    acc(a.id, g);
  };
  return out;
}

Var Tape::concat_rows(const std::vector<Var>& parts) {
  check(!parts.empty(), "concat_rows empty");
  Eigen::Index rows = 0;
  const Eigen::Index cols = val(parts[0]).cols();
  bool r = false;
  for (Var p : parts) {
    check(val(p).cols() == cols, "concat_rows col mismatch");
    rows += val(p).rows();
    r = r || req(p);
  }
  Matrix v(rows, cols);
  Eigen::Index at = 0;
  for (Var p : parts) {
    v.middleRows(at, val(p).rows()) = val(p);
    at += val(p).rows();
  }
  Var out = push(std::move(v), r);
  if (!nodes_[out.id].req) return out;
  std::vector<Var> ps = parts;
  nodes_[out.id].back = [this, ps, out] {
    const Matrix& g = nodes_[out.id].grad;
    Eigen::Index at = 0;
    for (Var p : ps) {
      acc(p.id, g.middleRows(at, val(p).rows()));
      at += val(p).rows();
    }
  };
  return out;
}

Var Tape::concat_cols(const std::vector<Var>& parts) {
  check(!parts.empty(), "concat_cols empty");
  Eigen::Index cols = 0;
  const Eigen::Index rows = val(parts[0]).rows();
  bool r = false;
  for (Var p : parts) {
    check(val(p).rows() == rows, "concat_cols row mismatch");
    cols += val(p).cols();
    r = r || req(p);
  }
  Matrix v(rows, cols);
  Eigen::Index at = 0;
  for (Var p : parts) {
    v.middleCols(at, val(p).cols()) = val(p);
    at += val(p).cols();
  }
  Var out = push(std::move(v), r);
  if (!nodes_[out.id].req) return out;
  std::vector<Var> ps = parts;
  nodes_[out.id].back = [this, ps, out] {
    const Matrix& g = nodes_[out.id].grad;
    Eigen::Index at = 0;
    for (Var p : ps) {
      acc(p.id, g.middleCols(at, val(p).cols()));
      at += val(p).cols();
    }
  };
  return out;
}

Var Tape::gather_rows(Var a, std::vector<int> rows) {
  Matrix v(static_cast<Eigen::Index>(rows.size()), val(a).cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    check(rows[i] >= 0 && rows[i] < val(a).rows(), "gather_rows bounds");
    v.row(static_cast<Eigen::Index>(i)) = val(a).row(rows[i]);
  }
  Var out = push(std::move(v), req(a));
  if (!nodes_[out.id].req) return out;
  nodes_[out.id].back = [this, a, rows = std::move(rows), out] {
    Matrix g = Matrix::Zero(val(a).rows(), val(a).cols());
    const Matrix& go = nodes_[out.id].grad;
    for (std::size_t i = 0; i < rows.size(); ++i)
      g.row(rows[i]) += go.row(static_cast<Eigen::Index>(i));
    acc(a.id, g);
  };
  return out;
}

Var Tape::broadcast_col(Var v, int cols) {
  check(val(v).cols() == 1, "broadcast_col needs n x 1");
  Var out = push(val(v).replicate(1, cols), req(v));
  if (!nodes_[out.id].req) return out;
  nodes_[out.id].back = [this, v, out] {
    acc(v.id, nodes_[out.id].grad.rowwise().sum());
  };
  return out;
}

Var Tape::broadcast_row(Var v, int rows) {
  check(val(v).rows() == 1, "broadcast_row needs 1 x m");
  Var out = push(val(v).replicate(rows, 1), req(v));
  if (!nodes_[out.id].req) return out;
  nodes_[out.id].back = [this, v, out] {
    acc(v.id, nodes_[out.id].grad.colwise().sum());
  };
  return out;
}

// ---- reductions ----

Var Tape::sum(Var a) {
  Matrix v(1, 1);
  v(0, 0) = val(a).sum();
  Var out = push(std::move(v), req(a));
  if (!nodes_[out.id].req) return out;
  nodes_[out.id].back = [this, a, out] {
    acc(a.id, Matrix::Constant(val(a).rows(), val(a).cols(),
                               nodes_[out.id].grad(0, 0)));
  };
  return out;
}

Var Tape::mean(Var a) { return scale(sum(a), 1.0 / val(a).size()); }

Var Tape::rowwise_sum(Var a) {
  Var out = push(val(a).rowwise().sum(), req(a));
  if (!nodes_[out.id].req) return out;
  nodes_[out.id].back = [this, a, out] {
    acc(a.id, nodes_[out.id].grad.replicate(1, val(a).cols()));
  };
  return out;
}

Var Tape::colwise_sum(Var a) {
  Var out = push(val(a).colwise().sum(), req(a));
  if (!nodes_[out.id].req) return out;
  nodes_[out.id].back = [this, a, out] {
    acc(a.id, nodes_[out.id].grad.replicate(val(a).rows(), 1));
  };
  return out;
}

// ---- normalizations ----

Var Tape::softmax_rows(Var a) {
  const Matrix& x = val(a);
  Matrix y(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const real m = x.row(i).maxCoeff();
    y.row(i) = (x.row(i).array() - m).exp();
    y.row(i) /= y.row(i).sum();
  }
  Var out = push(std::move(y), req(a));
  if (!nodes_[out.id].req) return out;
  nodes_[out.id].back = [this, a, out] {
    const Matrix& y = val(out);
    const Matrix& g = nodes_[out.id].grad;
    const Matrix dot = g.cwiseProduct(y).rowwise().sum();
    acc(a.id, y.cwiseProduct(g - dot.replicate(1, y.cols())));
  };
  return out;
}

Var Tape::log_softmax_rows(Var a) {
  const Matrix& x = val(a);
  Matrix y(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const real m = x.row(i).maxCoeff();
    const real lse = m + std::log((x.row(i).array() - m).exp().sum());
    y.row(i) = x.row(i).array() - lse;
  }
  Var out = push(std::move(y), req(a));
  if (!nodes_[out.id].req) return out;
  nodes_[out.id].back = [this, a, out] {
    const Matrix& y = val(out);
    const Matrix& g = nodes_[out.id].grad;
    const Matrix rs = g.rowwise().sum();
    acc(a.id, g - y.array().exp().matrix().cwiseProduct(
                      rs.replicate(1, y.cols())));
  };
  return out;
}

Var Tape::layer_norm_rows(Var x, Var gamma, Var beta, real eps) {
  const Matrix& xv = val(x);
  const Eigen::Index n = xv.rows(), m = xv.cols();
  check(val(gamma).rows() == 1 && val(gamma).cols() == m, "layer_norm gamma");
  check(val(beta).rows() == 1 && val(beta).cols() == m, "layer_norm beta");
  auto xhat = std::make_shared<Matrix>(n, m);
  auto sd = std::make_shared<Vector>(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const real mu = xv.row(i).mean();
    const real var = (xv.row(i).array() - mu).square().mean();
    (*sd)(i) = std::sqrt(var + eps);
    xhat->row(i) = (xv.row(i).array() - mu) / (*sd)(i);
  }
  Matrix y = xhat->cwiseProduct(val(gamma).replicate(n, 1)) +
             val(beta).replicate(n, 1);
  Var out = push(std::move(y), req(x) || req(gamma) || req(beta));
  if (!nodes_[out.id].req) return out;
  nodes_[out.id].back = [this, x, gamma, beta, out, xhat, sd, n, m] {
    const Matrix& g = nodes_[out.id].grad;
    acc(gamma.id, g.cwiseProduct(*xhat).colwise().sum());
    acc(beta.id, g.colwise().sum());
    const Matrix gg = g.cwiseProduct(val(gamma).replicate(n, 1));
    const Matrix m1 = gg.rowwise().mean();
    const Matrix m2 = gg.cwiseProduct(*xhat).rowwise().mean();
    Matrix dx = gg - m1.replicate(1, m) -
                xhat->cwiseProduct(m2.replicate(1, m));
    dx.array().colwise() /= sd->array();
    acc(x.id, dx);
  };
  return out;
}

// ---- convolution ----

void im2col(const Matrix& x, int H, int W, int kh, int kw, int stride, int pad,
            Matrix& out, int* ohp, int* owp) {
  const int cin = static_cast<int>(x.cols());
  const int oh = (H + 2 * pad - kh) / stride + 1;
  const int ow = (W + 2 * pad - kw) / stride + 1;
  out.setZero(static_cast<Eigen::Index>(oh) * ow,
              static_cast<Eigen::Index>(kh) * kw * cin);
  for (int oy = 0; oy < oh; ++oy) {
    for (int ox = 0; ox < ow; ++ox) {
      const Eigen::Index r = static_cast<Eigen::Index>(oy) * ow + ox;
      for (int ky = 0; ky < kh; ++ky) {
        const int iy = oy * stride - pad + ky;
        if (iy < 0 || iy >= H) continue;
        for (int kx = 0; kx < kw; ++kx) {
          const int ix = ox * stride - pad + kx;
          if (ix < 0 || ix >= W) continue;
          out.block(r, (static_cast<Eigen::Index>(ky) * kw + kx) * cin, 1,
                    cin) = x.block(static_cast<Eigen::Index>(iy) * W + ix, 0,
                                   1, cin);
        }
      }
    }
  }
  *ohp = oh;
  *owp = ow;
}

namespace {
Matrix col2im(const Matrix& cols, int H, int W, int cin, int kh, int kw,
              int stride, int pad, int oh, int ow) {
  Matrix dx = Matrix::Zero(static_cast<Eigen::Index>(H) * W, cin);
  for (int oy = 0; oy < oh; ++oy) {
    for (int ox = 0; ox < ow; ++ox) {
      const Eigen::Index r = static_cast<Eigen::Index>(oy) * ow + ox;
      for (int ky = 0; ky < kh; ++ky) {
        const int iy = oy * stride - pad + ky;
        if (iy < 0 || iy >= H) continue;
        for (int kx = 0; kx < kw; ++kx) {
          const int ix = ox * stride - pad + kx;
          if (ix < 0 || ix >= W) continue;
          dx.block(static_cast<Eigen::Index>(iy) * W + ix, 0, 1, cin) +=
              cols.block(r, (static_cast<Eigen::Index>(ky) * kw + kx) * cin,
                         1, cin);
        }
      }
    }
  }
  return dx;
}
}  // namespace

Var Tape::conv2d(Var x, Var w, Var b, int H, int W, int kh, int kw, int stride,
                 int pad) {
  const int cin = static_cast<int>(val(x).cols());
  check(val(x).rows() == static_cast<Eigen::Index>(H) * W, "conv2d x rows");
  check(val(w).rows() == static_cast<Eigen::Index>(kh) * kw * cin,
        "conv2d w rows");
  check(val(b).rows() == 1 && val(b).cols() == val(w).cols(), "conv2d bias");
  Matrix cols;
  int oh = 0, ow = 0;
  im2col(val(x), H, W, kh, kw, stride, pad, cols, &oh, &ow);
  Matrix y = cols * val(w);
  y.rowwise() += val(b).row(0);
  Var out = push(std::move(y), req(x) || req(w) || req(b));
  if (!nodes_[out.id].req) return out;
  // im2col is recomputed in the adjoint instead of stored; x values are
  // cheap to re-expand and the tape stays small.
  nodes_[out.id].back = [this, x, w, b, H, W, kh, kw, stride, pad, cin, oh,
                         ow, out] {
    const Matrix& g = nodes_[out.id].grad;
    Matrix cols;
    int oh2, ow2;
    im2col(val(x), H, W, kh, kw, stride, pad, cols, &oh2, &ow2);
    acc(w.id, cols.transpose() * g);
    acc(b.id, g.colwise().sum());
    if (req(x)) {
      const Matrix gcols = g * val(w).transpose();
      acc(x.id, col2im(gcols, H, W, cin, kh, kw, stride, pad, oh, ow));
    }
  };
  return out;
}

Var Tape::upsample2x(Var x, int H, int W) {
  const Eigen::Index c = val(x).cols();
  check(val(x).rows() == static_cast<Eigen::Index>(H) * W, "upsample2x rows");
  Matrix y(static_cast<Eigen::Index>(4) * H * W, c);
  for (int iy = 0; iy < H; ++iy)
    for (int ix = 0; ix < W; ++ix)
      for (int dy = 0; dy < 2; ++dy)
        for (int dx = 0; dx < 2; ++dx)
          y.row(static_cast<Eigen::Index>(2 * iy + dy) * (2 * W) + 2 * ix +
                dx) = val(x).row(static_cast<Eigen::Index>(iy) * W + ix);
  Var out = push(std::move(y), req(x));
  if (!nodes_[out.id].req) return out;
  nodes_[out.id].back = [this, x, H, W, out] {
    const Matrix& g = nodes_[out.id].grad;
    Matrix dx = Matrix::Zero(val(x).rows(), val(x).cols());
    for (int iy = 0; iy < H; ++iy)
      for (int ix = 0; ix < W; ++ix)
        for (int dy = 0; dy < 2; ++dy)
          for (int ddx = 0; ddx < 2; ++ddx)
            dx.row(static_cast<Eigen::Index>(iy) * W + ix) +=
                g.row(static_cast<Eigen::Index>(2 * iy + dy) * (2 * W) +
                      2 * ix + ddx);
    acc(x.id, dx);
  };
  return out;
}

// ---- Cholesky ----

Eigen::LLT<Matrix> Tape::factor(const Matrix& A, real jitter, real* used) {
  // The input is treated as symmetric; matrix gradients of the Cholesky
  // ops are symmetrized to match.
  const Matrix sym = 0.5 * (A + A.transpose());
  real j = jitter;
  for (int attempt = 0; attempt < kCholMaxAttempts; ++attempt) {
    Matrix aj = sym;
    if (j > 0) aj.diagonal().array() += j;
    Eigen::LLT<Matrix> llt(aj);
    if (llt.info() == Eigen::Success) {
      bool finite = llt.matrixLLT().diagonal().allFinite();
      if (finite) {
        if (used) *used = j;
        return llt;
      }
    }
    j = (j <= 0) ? 1e-12 * (A.diagonal().cwiseAbs().mean() + 1.0) : 2.0 * j;
  }
  throw CholeskyFailure("factorization failed after " +
                        std::to_string(kCholMaxAttempts) +
                        " jitter escalations, last jitter " +
                        std::to_string(j));
}

Var Tape::chol_solve(Var A, Var B, real jitter) {
  check(val(A).rows() == val(A).cols(), "chol_solve A square");
  check(val(A).rows() == val(B).rows(), "chol_solve dims");
  auto llt = std::make_shared<Eigen::LLT<Matrix>>(
      factor(val(A), jitter, nullptr));
  Var out = push(llt->solve(val(B)), req(A) || req(B));
  if (!nodes_[out.id].req) return out;
  nodes_[out.id].back = [this, A, B, llt, out] {
    const Matrix& g = nodes_[out.id].grad;
    const Matrix db = llt->solve(g);
    acc(B.id, db);
    if (req(A)) {
      const Matrix ga = -db * val(out).transpose();
      acc(A.id, 0.5 * (ga + ga.transpose()));
    }
  };
  return out;
}

Var Tape::chol_matvec(Var Sigma, Var eps, real jitter) {
  check(val(Sigma).rows() == val(Sigma).cols(), "chol_matvec Sigma square");
  check(val(eps).cols() == 1 && val(eps).rows() == val(Sigma).rows(),
        "chol_matvec eps");
  auto L = std::make_shared<Matrix>(
      factor(val(Sigma), jitter, nullptr).matrixL());
  Var out = push(*L * val(eps), req(Sigma) || req(eps));
  if (!nodes_[out.id].req) return out;
  nodes_[out.id].back = [this, Sigma, eps, L, out] {
    const Matrix& g = nodes_[out.id].grad;
    acc(eps.id, L->transpose() * g);
    if (!req(Sigma)) return;
    Matrix dl = (g * val(eps).transpose())
                    .triangularView<Eigen::Lower>();
    // Reverse through the factorization: Phi takes the lower triangle
    // with halved diagonal, dSigma = L^-T Phi(L^T dL) L^-1, symmetrized.
    Matrix p = L->transpose() * dl;
    Matrix phi = p.triangularView<Eigen::Lower>();
    phi.diagonal() *= 0.5;
    auto lt = L->triangularView<Eigen::Lower>();
    Matrix m1 = lt.transpose().solve(phi);
    Matrix ds = lt.transpose().solve(m1.transpose()).transpose();
    acc(Sigma.id, 0.5 * (ds + ds.transpose()));
  };
  return out;
}

Var Tape::gauss_logpdf(Var C, Var z, real jitter) {
  check(val(C).rows() == val(C).cols(), "gauss_logpdf C square");
  check(val(z).cols() == 1 && val(z).rows() == val(C).rows(),
        "gauss_logpdf z");
  auto llt = std::make_shared<Eigen::LLT<Matrix>>(
      factor(val(C), jitter, nullptr));
  const Eigen::Index n = val(C).rows();
  const Matrix alpha = llt->solve(val(z));
  const real logdet =
      2.0 * Matrix(llt->matrixL()).diagonal().array().log().sum();
  Matrix v(1, 1);
  v(0, 0) = -0.5 * (val(z).transpose() * alpha)(0, 0) - 0.5 * logdet -
            0.5 * static_cast<real>(n) * std::log(2.0 * M_PI);
  Var out = push(std::move(v), req(C) || req(z));
  if (!nodes_[out.id].req) return out;
  nodes_[out.id].back = [this, C, z, llt, n, out] {
    const real g = nodes_[out.id].grad(0, 0);
    const Matrix alpha = llt->solve(val(z));
    acc(z.id, -g * alpha);
    if (!req(C)) return;
    const Matrix cinv = llt->solve(Matrix::Identity(n, n));
    acc(C.id, g * 0.5 * (alpha * alpha.transpose() - cinv));
  };
  return out;
}

}  // namespace occgen::ad
