#pragma once

#include <map>
#include <string>
#include <vector>

#include "occgen/rng.hpp"
#include "occgen/tape.hpp"

namespace occgen::nn {

using ad::Tape;
using ad::Var;

// Named parameter container. Creation order is the canonical order used
// by gradient buffers and checkpoints; lookups by name are used when
// restoring. Adam moments live next to the values so a checkpoint can
// resume optimization exactly.
class ParamStore {
 public:
  struct Entry {
    std::string name;
    Matrix value;
    Matrix m;
    Matrix v;
  };

  int add(const std::string& name, Matrix init);
  int find(const std::string& name) const;
  Entry& at(int i) { return items_[i]; }
  const Entry& at(int i) const { return items_[i]; }
  int count() const { return static_cast<int>(items_.size()); }
  std::size_t scalar_count() const;

 private:
  std::vector<Entry> items_;
  std::map<std::string, int> by_name_;
};

// Per-tape context. Caches one leaf per parameter so repeated layer
// applications on the same tape share a node and gradients accumulate.
class Ctx {
 public:
  Ctx(Tape& tape, ParamStore& store) : t(tape), ps(store) {}
  Var p(int slot);

  Tape& t;
  ParamStore& ps;

 private:
  std::map<int, Var> cache_;
};

struct GradBuffer {
  explicit GradBuffer(const ParamStore& ps);
  void zero();
  void accumulate(const Tape& tape);
  void scale(real c);
  real sq_norm() const;
  bool finite() const;
  std::vector<Matrix> g;
};

struct AdamConfig {
  real beta1 = 0.9;
  real beta2 = 0.999;
  real eps = 1e-8;
};

// step is 1-based; lr is the already-scheduled rate for this step.
void adam_step(ParamStore& ps, const GradBuffer& gb, const AdamConfig& cfg,
               long step, real lr);

// ---- layers ----
// Layers are parameter-id bundles; they do not own values. apply()
// fetches current values through the Ctx.

struct Linear {
  int w = -1, b = -1;
  static Linear create(ParamStore& ps, const std::string& name, int in,
                       int out, Rng& rng, real gain = 1.0);
  Var apply(Ctx& c, Var x) const;
};

// Dense stack with ReLU between layers, linear last layer.
struct Mlp {
  std::vector<Linear> layers;
  static Mlp create(ParamStore& ps, const std::string& name,
                    const std::vector<int>& dims, Rng& rng);
  Var apply(Ctx& c, Var x) const;
};

struct LayerNorm {
  int gamma = -1, beta = -1;
  static LayerNorm create(ParamStore& ps, const std::string& name, int dim);
  Var apply(Ctx& c, Var x) const;
};

struct Conv2d {
  int w = -1, b = -1;
  int kh = 0, kw = 0, stride = 1, pad = 0;
  static Conv2d create(ParamStore& ps, const std::string& name, int cin,
                       int cout, int k, int stride, int pad, Rng& rng,
                       real gain = 1.41421356237309515);
  Var apply(Ctx& c, Var x, int H, int W) const;
  static int out_dim(int in, int k, int stride, int pad) {
    return (in + 2 * pad - k) / stride + 1;
  }
};

struct GruCell {
  Linear xz, hz, xr, hr, xh, hh;
  int hid = 0;
  static GruCell create(ParamStore& ps, const std::string& name, int in,
                        int hid, Rng& rng);
  Var apply(Ctx& c, Var x, Var h) const;
};

// Pre-norm transformer encoder block, multi-head self attention plus a
// two-layer feed-forward.
struct TransformerBlock {
  LayerNorm ln1, ln2;
  Linear wq, wk, wv, wo;
  Mlp ff;
  int dim = 0, heads = 0;
  static TransformerBlock create(ParamStore& ps, const std::string& name,
                                 int dim, int heads, int ff_hidden, Rng& rng);
  Var apply(Ctx& c, Var x) const;
};

}  // namespace occgen::nn
