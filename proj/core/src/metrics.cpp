#include "occgen/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace occgen {

namespace {

int row_label(const Matrix& masks, Eigen::Index n) {
  int best = 0;
  real bv = masks(n, 0);
  for (int k = 1; k < masks.cols(); ++k) {
    if (masks(n, k) > bv) {
      bv = masks(n, k);
      best = k;
    }
  }
  return best;
}

bool in_scope(const SegmentationPair& p, PixelScope scope, int t,
              Eigen::Index n) {
  return scope == PixelScope::All || p.gt_masks[t](n, 0) == 0.0;
}

// Joint label counts; frame < 0 pools every frame.
Matrix contingency(const SegmentationPair& p, PixelScope scope, int frame) {
  Matrix table = Matrix::Zero(p.gt_objects() + 1, p.pred_objects() + 1);
  const int t0 = frame < 0 ? 0 : frame;
  const int t1 = frame < 0 ? p.frames() : frame + 1;
  for (int t = t0; t < t1; ++t) {
    const Eigen::Index N = p.gt_masks[t].rows();
    for (Eigen::Index n = 0; n < N; ++n) {
      if (!in_scope(p, scope, t, n)) continue;
      table(row_label(p.gt_masks[t], n), row_label(p.pred_masks[t], n)) += 1;
    }
  }
  return table;
}

real choose2(real x) { return x * (x - 1) / 2; }

// Expected mutual information of random labelings with the given
// margins, the exact sum over hypergeometric overlap counts. Log
// factorials come from a table so the cost stays linear in N per cell.
real expected_mi(const Vector& a, const Vector& b, real N) {
  const long n_int = static_cast<long>(N);
  std::vector<real> logfact(static_cast<std::size_t>(n_int) + 2, 0.0);
  for (std::size_t i = 1; i < logfact.size(); ++i)
    logfact[i] = logfact[i - 1] + std::log(static_cast<real>(i));
  auto lf = [&](real x) { return logfact[static_cast<std::size_t>(x)]; };

  real s = 0;
  for (Eigen::Index m = 0; m < a.size(); ++m) {
    if (a[m] == 0) continue;
    for (Eigen::Index n = 0; n < b.size(); ++n) {
      if (b[n] == 0) continue;
      const long lo = std::max<long>(1, static_cast<long>(a[m] + b[n] - N));
      const long hi = static_cast<long>(std::min(a[m], b[n]));
      const real base = lf(a[m]) + lf(b[n]) + lf(N - a[m]) + lf(N - b[n]) -
                        lf(N);
      for (long k = lo; k <= hi; ++k) {
        const real kk = static_cast<real>(k);
        const real logw = base - lf(kk) - lf(a[m] - kk) - lf(b[n] - kk) -
                          lf(N - a[m] - b[n] + kk);
        s += kk / N * std::log(N * kk / (a[m] * b[n])) * std::exp(logw);
      }
    }
  }
  return s;
}

real entropy(const Vector& margin, real N) {
  real h = 0;
  for (Eigen::Index i = 0; i < margin.size(); ++i) {
    if (margin[i] > 0) h -= margin[i] / N * std::log(margin[i] / N);
  }
  return h;
}

}  // namespace

real ari(const SegmentationPair& p, PixelScope scope) {
  const Matrix ct = contingency(p, scope, -1);
  const real total = ct.sum();
  if (total < 2) return 1.0;
  real b_all = 0;
  for (Eigen::Index i = 0; i < ct.rows(); ++i)
    for (Eigen::Index j = 0; j < ct.cols(); ++j) b_all += choose2(ct(i, j));
  real b_row = 0, b_col = 0;
  for (Eigen::Index i = 0; i < ct.rows(); ++i)
    b_row += choose2(ct.row(i).sum());
  for (Eigen::Index j = 0; j < ct.cols(); ++j)
    b_col += choose2(ct.col(j).sum());
  const real c = choose2(total);
  const real expected = b_row * b_col / c;
  const real den = (b_row + b_col) / 2 - expected;
  // Zero denominator means both labelings are one cluster (or all
  // singletons); either way they agree perfectly.
  if (den == 0) return 1.0;
  return (b_all - expected) / den;
}

real ami(const SegmentationPair& p, PixelScope scope) {
  real acc = 0;
  int counted = 0;
  for (int t = 0; t < p.frames(); ++t) {
    const Matrix ct = contingency(p, scope, t);
    const real N = ct.sum();
    if (N < 1) continue;
    const Vector a = ct.rowwise().sum();
    const Vector b = ct.colwise().sum().transpose();
    real mi = 0;
    for (Eigen::Index m = 0; m < ct.rows(); ++m)
      for (Eigen::Index n = 0; n < ct.cols(); ++n) {
        const real v = ct(m, n);
        if (v > 0) mi += v / N * std::log(v * N / (a[m] * b[n]));
      }
    const real emi = expected_mi(a, b, N);
    const real den = (entropy(a, N) + entropy(b, N)) / 2 - emi;
    // Degenerate margins make numerator and denominator both vanish;
    // the labelings then carry identical information.
    acc += std::abs(den) < 1e-12 ? 1.0 : (mi - emi) / den;
    ++counted;
  }
  return counted > 0 ? acc / counted : 1.0;
}

std::vector<int> assignment_exhaustive(const Matrix& score) {
  const int n = static_cast<int>(score.rows());
  std::vector<int> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  std::vector<int> best = perm;
  real best_score = -std::numeric_limits<real>::infinity();
  do {
    real s = 0;
    for (int i = 0; i < n; ++i) s += score(i, perm[i]);
    if (s > best_score) {
      best_score = s;
      best = perm;
    }
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

std::vector<int> assignment_hungarian(const Matrix& score) {
  // Shortest-augmenting-path minimization with potentials, run on the
  // negated scores. Indices are offset by one; row 0 / column 0 are
  // the virtual source.
  const int n = static_cast<int>(score.rows());
  const real inf = std::numeric_limits<real>::infinity();
  std::vector<real> u(n + 1, 0), v(n + 1, 0);
  std::vector<int> p(n + 1, 0), way(n + 1, 0);
  for (int i = 1; i <= n; ++i) {
    p[0] = i;
    int j0 = 0;
    std::vector<real> minv(n + 1, inf);
    std::vector<char> used(n + 1, 0);
    do {
      used[j0] = 1;
      const int i0 = p[j0];
      int j1 = -1;
      real delta = inf;
      for (int j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const real cur = -score(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const int j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0);
  }
  std::vector<int> out(n, -1);
  for (int j = 1; j <= n; ++j)
    if (p[j] > 0) out[p[j] - 1] = j - 1;
  return out;
}

std::vector<int> match_objects(const SegmentationPair& p) {
  const int kg = p.gt_objects();
  const int kp = p.pred_objects();
  if (kg == 0) return {};
  const int n = std::max(kg, kp);
  Matrix S = Matrix::Zero(n, n);
  for (int t = 0; t < p.frames(); ++t) {
    const Eigen::Index N = p.gt_masks[t].rows();
    for (Eigen::Index px = 0; px < N; ++px) {
      const int g = row_label(p.gt_masks[t], px);
      const int q = row_label(p.pred_masks[t], px);
      if (g > 0 && q > 0) S(g - 1, q - 1) += 1;
    }
  }
  std::vector<int> xi =
      n <= 6 ? assignment_exhaustive(S) : assignment_hungarian(S);
  xi.resize(static_cast<std::size_t>(kg));
  for (int& x : xi)
    if (x >= kp) x = -1;  // landed on a padding column
  return xi;
}

namespace {

std::optional<real> overlap_score(const SegmentationPair& p, bool harmonic) {
  const std::vector<int> xi = match_objects(p);
  const int kg = p.gt_objects();
  real acc = 0;
  int counted = 0;
  for (int k = 0; k < kg; ++k) {
    real smin = 0, smax = 0, gt_mass = 0;
    for (int t = 0; t < p.frames(); ++t) {
      const Eigen::Index N = p.gt_shapes[t].rows();
      for (Eigen::Index n = 0; n < N; ++n) {
        const real g = p.gt_shapes[t](n, k);
        const real q = xi[static_cast<std::size_t>(k)] >= 0
                           ? p.pred_shapes[t](n, xi[static_cast<std::size_t>(k)])
                           : 0.0;
        smin += std::min(g, q);
        smax += std::max(g, q);
        gt_mass += g;
      }
    }
    if (gt_mass == 0) continue;  // object never visible in the truth
    acc += harmonic ? 2 * smin / (smin + smax) : smin / smax;
    ++counted;
  }
  if (counted == 0) return std::nullopt;
  return acc / counted;
}

}  // namespace

std::optional<real> iou(const SegmentationPair& p) {
  return overlap_score(p, false);
}

std::optional<real> f1(const SegmentationPair& p) {
  return overlap_score(p, true);
}

bool count_match(const SegmentationPair& p) {
  return p.gt_count == p.pred_count;
}

std::optional<real> ooa(const SegmentationPair& p) {
  const std::vector<int> xi = match_objects(p);
  const int kg = p.gt_objects();
  real acc = 0;
  int counted = 0;
  for (int t = 0; t < p.frames(); ++t) {
    real wsum = 0, agree = 0;
    for (int k1 = 0; k1 < kg; ++k1) {
      for (int k2 = k1 + 1; k2 < kg; ++k2) {
        const int m1 = xi[static_cast<std::size_t>(k1)];
        const int m2 = xi[static_cast<std::size_t>(k2)];
        if (m1 < 0 || m2 < 0) continue;
        const real w = p.gt_shapes[t].col(k1).dot(p.gt_shapes[t].col(k2));
        if (w <= 0) continue;
        const bool gt_closer = p.gt_order(t, k1) > p.gt_order(t, k2);
        const bool pred_closer = p.pred_order(t, m1) > p.pred_order(t, m2);
        wsum += w;
        if (gt_closer == pred_closer) agree += w;
      }
    }
    if (wsum > 0) {
      acc += agree / wsum;
      ++counted;
    }
  }
  if (counted == 0) return std::nullopt;
  return acc / counted;
}

}  // namespace occgen
