#include "occgen/nn.hpp"

#include <cmath>
#include <stdexcept>

namespace occgen::nn {

int ParamStore::add(const std::string& name, Matrix init) {
  if (by_name_.count(name))
    throw std::logic_error("duplicate parameter name: " + name);
  const int id = static_cast<int>(items_.size());
  items_.push_back(Entry{name, std::move(init), Matrix(), Matrix()});
  Entry& e = items_.back();
  e.m = Matrix::Zero(e.value.rows(), e.value.cols());
  e.v = Matrix::Zero(e.value.rows(), e.value.cols());
  by_name_[name] = id;
  return id;
}

int ParamStore::find(const std::string& name) const {
  auto it = by_name_.find(name);
  return it == by_name_.end() ? -1 : it->second;
}

std::size_t ParamStore::scalar_count() const {
  std::size_t n = 0;
  for (const auto& e : items_) n += static_cast<std::size_t>(e.value.size());
  return n;
}

Var Ctx::p(int slot) {
  auto it = cache_.find(slot);
  if (it != cache_.end()) return it->second;
  Var v = t.leaf(ps.at(slot).value, slot);
  cache_[slot] = v;
  return v;
}

GradBuffer::GradBuffer(const ParamStore& ps) {
  g.resize(ps.count());
  for (int i = 0; i < ps.count(); ++i)
    g[i] = Matrix::Zero(ps.at(i).value.rows(), ps.at(i).value.cols());
}

void GradBuffer::zero() {
  for (auto& m : g) m.setZero();
}

void GradBuffer::accumulate(const Tape& tape) {
  for (const auto& [slot, var] : tape.param_leaves()) g[slot] += tape.grad(var);
}

void GradBuffer::scale(real c) {
  for (auto& m : g) m *= c;
}

real GradBuffer::sq_norm() const {
  real s = 0;
  for (const auto& m : g) s += m.squaredNorm();
  return s;
}

bool GradBuffer::finite() const {
  for (const auto& m : g)
    if (!m.allFinite()) return false;
  return true;
}

void adam_step(ParamStore& ps, const GradBuffer& gb, const AdamConfig& cfg,
               long step, real lr) {
  const real c1 = 1.0 - std::pow(cfg.beta1, static_cast<real>(step));
  const real c2 = 1.0 - std::pow(cfg.beta2, static_cast<real>(step));
  for (int i = 0; i < ps.count(); ++i) {
    auto& e = ps.at(i);
    const Matrix& g = gb.g[i];
    e.m = cfg.beta1 * e.m + (1.0 - cfg.beta1) * g;
    e.v = cfg.beta2 * e.v + (1.0 - cfg.beta2) * g.cwiseProduct(g);
    const Matrix mhat = e.m / c1;
    const Matrix vhat = e.v / c2;
    e.value.array() -=
        lr * mhat.array() / (vhat.array().sqrt() + cfg.eps);
  }
}

namespace {
Matrix gaussian_init(int rows, int cols, real std, Rng& rng) {
  Matrix m(rows, cols);
  for (int j = 0; j < cols; ++j)
    for (int i = 0; i < rows; ++i) m(i, j) = rng.normal(0.0, std);
  return m;
}
}  // namespace

Linear Linear::create(ParamStore& ps, const std::string& name, int in, int out,
                      Rng& rng, real gain) {
  Linear l;
  const real std = gain / std::sqrt(static_cast<real>(in));
  l.w = ps.add(name + ".w", gaussian_init(in, out, std, rng));
  l.b = ps.add(name + ".b", Matrix::Zero(1, out));
  return l;
}

Var Linear::apply(Ctx& c, Var x) const {
  Var y = c.t.matmul(x, c.p(w));
  return c.t.add(y, c.t.broadcast_row(c.p(b),
                                      static_cast<int>(c.t.val(x).rows())));
}

Mlp Mlp::create(ParamStore& ps, const std::string& name,
                const std::vector<int>& dims, Rng& rng) {
  Mlp m;
  for (std::size_t i = 0; i + 1 < dims.size(); ++i) {
    const bool last = i + 2 == dims.size();
    m.layers.push_back(Linear::create(ps, name + ".l" + std::to_string(i),
                                      dims[i], dims[i + 1], rng,
                                      last ? 1.0 : std::sqrt(2.0)));
  }
  return m;
}

Var Mlp::apply(Ctx& c, Var x) const {
  Var h = x;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    h = layers[i].apply(c, h);
    if (i + 1 < layers.size()) h = c.t.relu(h);
  }
  return h;
}

LayerNorm LayerNorm::create(ParamStore& ps, const std::string& name, int dim) {
  LayerNorm ln;
  ln.gamma = ps.add(name + ".g", Matrix::Ones(1, dim));
  ln.beta = ps.add(name + ".b", Matrix::Zero(1, dim));
  return ln;
}

Var LayerNorm::apply(Ctx& c, Var x) const {
  return c.t.layer_norm_rows(x, c.p(gamma), c.p(beta));
}

Conv2d Conv2d::create(ParamStore& ps, const std::string& name, int cin,
                      int cout, int k, int stride, int pad, Rng& rng,
                      real gain) {
  Conv2d conv;
  conv.kh = conv.kw = k;
  conv.stride = stride;
  conv.pad = pad;
  const real std = gain / std::sqrt(static_cast<real>(k) * k * cin);
  conv.w = ps.add(name + ".w", gaussian_init(k * k * cin, cout, std, rng));
  conv.b = ps.add(name + ".b", Matrix::Zero(1, cout));
  return conv;
}

Var Conv2d::apply(Ctx& c, Var x, int H, int W) const {
  return c.t.conv2d(x, c.p(w), c.p(b), H, W, kh, kw, stride, pad);
}

GruCell GruCell::create(ParamStore& ps, const std::string& name, int in,
                        int hid, Rng& rng) {
  GruCell g;
  g.hid = hid;
  g.xz = Linear::create(ps, name + ".xz", in, hid, rng);
  g.hz = Linear::create(ps, name + ".hz", hid, hid, rng);
  g.xr = Linear::create(ps, name + ".xr", in, hid, rng);
  g.hr = Linear::create(ps, name + ".hr", hid, hid, rng);
  g.xh = Linear::create(ps, name + ".xh", in, hid, rng);
  g.hh = Linear::create(ps, name + ".hh", hid, hid, rng);
  return g;
}

Var GruCell::apply(Ctx& c, Var x, Var h) const {
  Tape& t = c.t;
  Var z = t.sigmoid(t.add(xz.apply(c, x), hz.apply(c, h)));
  Var r = t.sigmoid(t.add(xr.apply(c, x), hr.apply(c, h)));
  Var hcand = t.tanh(t.add(xh.apply(c, x), hh.apply(c, t.cmul(r, h))));
  Var one_minus_z = t.add_const(t.neg(z), 1.0);
  return t.add(t.cmul(one_minus_z, h), t.cmul(z, hcand));
}

TransformerBlock TransformerBlock::create(ParamStore& ps,
                                          const std::string& name, int dim,
                                          int heads, int ff_hidden, Rng& rng) {
  TransformerBlock b;
  b.dim = dim;
  b.heads = heads;
  b.ln1 = LayerNorm::create(ps, name + ".ln1", dim);
  b.ln2 = LayerNorm::create(ps, name + ".ln2", dim);
  b.wq = Linear::create(ps, name + ".wq", dim, dim, rng);
  b.wk = Linear::create(ps, name + ".wk", dim, dim, rng);
  b.wv = Linear::create(ps, name + ".wv", dim, dim, rng);
  b.wo = Linear::create(ps, name + ".wo", dim, dim, rng);
  b.ff = Mlp::create(ps, name + ".ff", {dim, ff_hidden, dim}, rng);
  return b;
}

Var TransformerBlock::apply(Ctx& c, Var x) const {
  Tape& t = c.t;
  const int n = static_cast<int>(t.val(x).rows());
  const int dh = dim / heads;
  Var xn = ln1.apply(c, x);
  Var q = wq.apply(c, xn);
  Var k = wk.apply(c, xn);
  Var v = wv.apply(c, xn);
  std::vector<Var> head_out;
  for (int h = 0; h < heads; ++h) {
    Var qh = t.block(q, 0, h * dh, n, dh);
    Var kh = t.block(k, 0, h * dh, n, dh);
    Var vh = t.block(v, 0, h * dh, n, dh);
    Var logits =
        t.scale(t.matmul(qh, t.transpose(kh)), 1.0 / std::sqrt(real(dh)));
    Var attn = t.softmax_rows(logits);
    head_out.push_back(t.matmul(attn, vh));
  }
  Var merged = wo.apply(c, t.concat_cols(head_out));
  Var x1 = t.add(x, merged);
  Var x2 = t.add(x1, ff.apply(c, ln2.apply(c, x1)));
  return x2;
}

}  // namespace occgen::nn
