#include <doctest.h>

#include <cmath>
#include <functional>

#include "occgen/nn.hpp"

using namespace occgen;
using nn::Ctx;
using nn::GradBuffer;
using nn::ParamStore;
using ad::Tape;
using ad::Var;

namespace {

Matrix randn(int r, int c, Rng& rng, real scale = 1.0) {
  Matrix m(r, c);
  for (int j = 0; j < c; ++j)
    for (int i = 0; i < r; ++i) m(i, j) = rng.normal() * scale;
  return m;
}

// Finite differences over every parameter scalar in the store.
void check_param_grads(ParamStore& ps, const std::function<Var(Ctx&)>& build,
                       real h = 1e-5, real tol = 1e-5) {
  Tape t;
  Ctx c(t, ps);
  Var root = build(c);
  t.backward(root);
  GradBuffer gb(ps);
  gb.accumulate(t);

  for (int i = 0; i < ps.count(); ++i) {
    Matrix& v = ps.at(i).value;
    for (int col = 0; col < v.cols(); ++col) {
      for (int row = 0; row < v.rows(); ++row) {
        const real keep = v(row, col);
        auto eval = [&](real delta) {
          v(row, col) = keep + delta;
          Tape tt;
          Ctx cc(tt, ps);
          return tt.val(build(cc))(0, 0);
        };
        const real fd = (eval(h) - eval(-h)) / (2 * h);
        v(row, col) = keep;
        const real a = gb.g[i](row, col);
        const real ref = std::max({real(1), std::abs(fd), std::abs(a)});
        INFO("param ", ps.at(i).name, " (", row, ",", col, ")");
        CHECK(std::abs(fd - a) <= tol * ref);
      }
    }
  }
}

}  // namespace

TEST_CASE("parameter store rejects duplicates and keeps order") {
  ParamStore ps;
  const int a = ps.add("a", Matrix::Zero(2, 2));
  const int b = ps.add("b", Matrix::Zero(1, 3));
  CHECK(a == 0);
  CHECK(b == 1);
  CHECK(ps.find("a") == 0);
  CHECK(ps.find("missing") == -1);
  CHECK(ps.scalar_count() == 7);
  CHECK_THROWS(ps.add("a", Matrix::Zero(1, 1)));
}

TEST_CASE("linear and mlp gradients") {
  Rng rng(21);
  ParamStore ps;
  auto lin = nn::Linear::create(ps, "lin", 3, 2, rng);
  Matrix x = randn(4, 3, rng);
  check_param_grads(ps, [&](Ctx& c) {
    return c.t.sum(c.t.square(lin.apply(c, c.t.constant(x))));
  });

  ParamStore ps2;
  Rng rng2(22);
  auto mlp = nn::Mlp::create(ps2, "mlp", {3, 5, 4, 2}, rng2);
  check_param_grads(ps2, [&](Ctx& c) {
    return c.t.sum(c.t.square(mlp.apply(c, c.t.constant(x))));
  });
}

TEST_CASE("conv layer gradients") {
  Rng rng(23);
  ParamStore ps;
  auto conv = nn::Conv2d::create(ps, "c", 2, 3, 3, 2, 1, rng);
  Matrix x = randn(6 * 4, 2, rng);
  check_param_grads(ps, [&](Ctx& c) {
    return c.t.sum(c.t.square(conv.apply(c, c.t.constant(x), 6, 4)));
  });
  CHECK(nn::Conv2d::out_dim(32, 3, 2, 1) == 16);
  CHECK(nn::Conv2d::out_dim(4, 3, 1, 1) == 4);
}

TEST_CASE("gru cell gradients and gating behavior") {
  Rng rng(24);
  ParamStore ps;
  auto gru = nn::GruCell::create(ps, "g", 3, 4, rng);
  Matrix x = randn(2, 3, rng);
  Matrix h = randn(2, 4, rng);
  check_param_grads(ps, [&](Ctx& c) {
    return c.t.sum(
        c.t.square(gru.apply(c, c.t.constant(x), c.t.constant(h))));
  });
  // Zero update gate weights at strongly negative bias keep the state.
  ParamStore ps2;
  Rng rng2(25);
  auto g2 = nn::GruCell::create(ps2, "g", 3, 4, rng2);
  ps2.at(g2.xz.w).value.setZero();
  ps2.at(g2.hz.w).value.setZero();
  ps2.at(g2.xz.b).value.setConstant(-40.0);
  Tape t;
  Ctx c(t, ps2);
  Matrix kept = t.val(g2.apply(c, t.constant(x), t.constant(h)));
  CHECK((kept - h).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("transformer block gradients") {
  Rng rng(26);
  ParamStore ps;
  auto blk = nn::TransformerBlock::create(ps, "tb", 8, 2, 16, rng);
  Matrix x = randn(5, 8, rng);
  check_param_grads(
      ps,
      [&](Ctx& c) {
        return c.t.sum(c.t.square(blk.apply(c, c.t.constant(x))));
      },
      1e-5, 1e-4);
}

TEST_CASE("adam matches a hand-stepped reference") {
  ParamStore ps;
  const int id = ps.add("p", Matrix::Constant(1, 2, 1.0));
  nn::AdamConfig cfg;
  GradBuffer gb(ps);
  gb.g[id] << 0.5, -2.0;

  double m[2] = {0, 0}, v[2] = {0, 0}, p[2] = {1.0, 1.0};
  const double g[2] = {0.5, -2.0};
  const double lr = 1e-2;
  for (long step = 1; step <= 3; ++step) {
    nn::adam_step(ps, gb, cfg, step, lr);
    for (int i = 0; i < 2; ++i) {
      m[i] = 0.9 * m[i] + 0.1 * g[i];
      v[i] = 0.999 * v[i] + 0.001 * g[i] * g[i];
      const double mh = m[i] / (1 - std::pow(0.9, step));
      const double vh = v[i] / (1 - std::pow(0.999, step));
      p[i] -= lr * mh / (std::sqrt(vh) + cfg.eps);
      CHECK(ps.at(id).value(0, i) == doctest::Approx(p[i]).epsilon(1e-12));
    }
  }
}

TEST_CASE("grad buffer sums across tapes and detects non-finite") {
  ParamStore ps;
  Rng rng(27);
  auto lin = nn::Linear::create(ps, "l", 2, 1, rng);
  GradBuffer gb(ps);
  Matrix x = randn(3, 2, rng);
  for (int rep = 0; rep < 2; ++rep) {
    Tape t;
    Ctx c(t, ps);
    t.backward(c.t.sum(lin.apply(c, t.constant(x))));
    gb.accumulate(t);
  }
  // Two identical passes double the single-pass gradient.
  Tape t;
  Ctx c(t, ps);
  t.backward(t.sum(lin.apply(c, t.constant(x))));
  GradBuffer one(ps);
  one.accumulate(t);
  for (int i = 0; i < ps.count(); ++i)
    CHECK((gb.g[i] - 2.0 * one.g[i]).cwiseAbs().maxCoeff() < 1e-14);
  CHECK(gb.finite());
  gb.g[0](0, 0) = std::nan("");
  CHECK_FALSE(gb.finite());
}
