#include "occgen/scene.hpp"

#include <algorithm>
#include <cmath>

namespace occgen {

ShapeKind shape_from_name(const std::string& name) {
  if (name == "disk") return ShapeKind::Disk;
  if (name == "square") return ShapeKind::Square;
  if (name == "triangle") return ShapeKind::Triangle;
  throw ConfigError("unknown shape: " + name);
}

std::string shape_name(ShapeKind k) {
  switch (k) {
    case ShapeKind::Disk: return "disk";
    case ShapeKind::Square: return "square";
    case ShapeKind::Triangle: return "triangle";
  }
  return "?";
}

void SceneConfig::validate() const {
  if (image_size < 4) throw ConfigError("image_size must be >= 4");
  if (num_views < 2) throw ConfigError("num_views must be >= 2");
  if (count_min < 1 || count_min > count_max || count_max > max_objects)
    throw ConfigError("need 1 <= count_min <= count_max <= max_objects");
  if (shape_catalog.empty()) throw ConfigError("shape_catalog empty");
  if (palette.size() < static_cast<std::size_t>(count_max))
    throw ConfigError("palette smaller than count_max");
  for (const auto& c : palette)
    for (real v : c)
      if (v < 0.0 || v > 1.0) throw ConfigError("palette values must be in [0,1]");
  if (!(rho_min > 0 && rho_min <= rho_max)) throw ConfigError("bad rho range");
  if (!(phi_min >= 0 && phi_min <= phi_max && phi_max <= M_PI))
    throw ConfigError("bad phi range");
}

std::array<real, 3> camera_position(int t, int T, real rho, real phi) {
  const real theta = 2.0 * M_PI * static_cast<real>(t) / static_cast<real>(T);
  return {rho * std::sin(phi) * std::cos(theta),
          rho * std::sin(phi) * std::sin(theta), rho * std::cos(phi)};
}

namespace {

struct Sprite {
  ShapeKind kind;
  real x, y, z;      // world position
  real size;         // screen-space half extent
  std::array<real, 3> color;
};

bool inside_sprite(const Sprite& s, real u, real v, real cu, real cv) {
  const real du = u - cu, dv = v - cv;
  switch (s.kind) {
    case ShapeKind::Disk:
      return du * du + dv * dv <= s.size * s.size;
    case ShapeKind::Square:
      return std::max(std::abs(du), std::abs(dv)) <= s.size * 0.9;
    case ShapeKind::Triangle: {
      // Upright triangle: apex (0, size), base corners (+-0.9 size, -0.55 size).
      const real ax = 0.0, ay = s.size;
      const real bx = -0.9 * s.size, by = -0.55 * s.size;
      const real cx = 0.9 * s.size, cy = -0.55 * s.size;
      auto side = [](real px, real py, real qx, real qy, real rx, real ry) {
        return (qx - px) * (ry - py) - (qy - py) * (rx - px);
      };
      const real d1 = side(ax, ay, bx, by, du, dv);
      const real d2 = side(bx, by, cx, cy, du, dv);
      const real d3 = side(cx, cy, ax, ay, du, dv);
      const bool has_neg = d1 < 0 || d2 < 0 || d3 < 0;
      const bool has_pos = d1 > 0 || d2 > 0 || d3 > 0;
      return !(has_neg && has_pos);
    }
  }
  return false;
}

struct ViewBasis {
  real rx, ry;       // screen-x = p . r, r = (-sin th, cos th, 0)
  real ux, uy, uz;   // screen-y axis
  real dx, dy, dz;   // closeness = p . d
};

ViewBasis view_basis(int t, int T, real phi) {
  const real theta = 2.0 * M_PI * static_cast<real>(t) / static_cast<real>(T);
  ViewBasis b;
  b.rx = -std::sin(theta);
  b.ry = std::cos(theta);
  b.ux = -std::cos(theta) * std::cos(phi);
  b.uy = -std::sin(theta) * std::cos(phi);
  b.uz = std::sin(phi);
  b.dx = std::sin(phi) * std::cos(theta);
  b.dy = std::sin(phi) * std::sin(theta);
  b.dz = std::cos(phi);
  return b;
}

Matrix rasterize_shapes(const std::vector<Sprite>& sprites, int count,
                        const ViewBasis& b, int H, int W) {
  const Eigen::Index n = static_cast<Eigen::Index>(H) * W;
  Matrix shapes = Matrix::Zero(n, static_cast<Eigen::Index>(sprites.size()));
  std::vector<std::pair<real, real>> centers(count);
  for (int k = 0; k < count; ++k) {
    const Sprite& s = sprites[k];
    centers[k] = {s.x * b.rx + s.y * b.ry,
                  s.x * b.ux + s.y * b.uy + s.z * b.uz};
  }
  for (int py = 0; py < H; ++py) {
    // Pixel centers map to screen coords in [-1, 1], y axis pointing up.
    const real v = -(2.0 * (py + 0.5) / H - 1.0);
    for (int px = 0; px < W; ++px) {
      const real u = 2.0 * (px + 0.5) / W - 1.0;
      const Eigen::Index p = static_cast<Eigen::Index>(py) * W + px;
      for (int k = 0; k < count; ++k)
        if (inside_sprite(sprites[k], u, v, centers[k].first,
                          centers[k].second))
          shapes(p, k) = 1.0;
    }
  }
  return shapes;
}

}  // namespace

Matrix painter_masks(const Matrix& shapes, const Eigen::RowVectorXd& closeness,
                     int live_objects) {
  const Eigen::Index n = shapes.rows();
  const Eigen::Index kg = shapes.cols();
  Matrix m = Matrix::Zero(n, kg + 1);
  for (Eigen::Index p = 0; p < n; ++p) {
    int best = -1;
    real best_close = 0;
    for (int k = 0; k < live_objects; ++k) {
      if (shapes(p, k) <= 0.5) continue;
      if (best < 0 || closeness(k) > best_close) {
        best = k;
        best_close = closeness(k);
      }
    }
    if (best < 0) {
      m(p, 0) = 1.0;
    } else {
      m(p, best + 1) = 1.0;
    }
  }
  return m;
}

Scene generate_scene(const SceneConfig& cfg, uint64_t seed) {
  cfg.validate();
  const int H = cfg.image_size, W = cfg.image_size;
  const int T = cfg.num_views;
  const int kg = cfg.max_objects;
  Rng rng(seed);

  Scene sc;
  sc.H = H;
  sc.W = W;
  sc.K_gt = kg;
  sc.count = cfg.count_min +
             static_cast<int>(rng.uniform_int(
                 static_cast<uint64_t>(cfg.count_max - cfg.count_min + 1)));
  const real phi = rng.uniform(cfg.phi_min, cfg.phi_max);
  const real rho = rng.uniform(cfg.rho_min, cfg.rho_max);
  (void)rho;  // orthographic projection; radius only shifts closeness uniformly.

  // Background: flat color with a mild horizontal gradient.
  std::array<real, 3> bg;
  for (auto& v : bg) v = rng.uniform(0.10, 0.35);
  const real bg_slope = rng.uniform(-0.08, 0.08);

  // Distinct palette colors per object.
  std::vector<int> color_idx(cfg.palette.size());
  for (std::size_t i = 0; i < color_idx.size(); ++i)
    color_idx[i] = static_cast<int>(i);
  for (int i = 0; i < sc.count; ++i) {
    const int j =
        i + static_cast<int>(rng.uniform_int(color_idx.size() - i));
    std::swap(color_idx[i], color_idx[j]);
  }

  std::vector<Sprite> sprites(sc.count);
  for (int k = 0; k < sc.count; ++k) {
    sprites[k].kind =
        cfg.shape_catalog[rng.uniform_int(cfg.shape_catalog.size())];
    sprites[k].size = rng.uniform(0.16, 0.26);
    sprites[k].color = cfg.palette[color_idx[k]];
  }

  // Placement with the overlap requirement: when count >= 2, at least
  // one pixel in at least one view must carry two complete shapes.
  // Checked on the actual raster, not a geometric proxy, so thin
  // overlaps that fall between pixel centers do not count.
  const int max_attempts = 100;
  bool placed = false;
  for (int attempt = 0; attempt < max_attempts && !placed; ++attempt) {
    for (int k = 0; k < sc.count; ++k) {
      sprites[k].x = rng.uniform(-0.55, 0.55);
      sprites[k].y = rng.uniform(-0.55, 0.55);
      sprites[k].z = rng.uniform(0.0, 0.4);
    }
    if (sc.count < 2) {
      placed = true;
      break;
    }
    for (int t = 0; t < T && !placed; ++t) {
      const Matrix shp =
          rasterize_shapes(sprites, sc.count, view_basis(t, T, phi), H, W);
      if ((shp.rowwise().sum().array() >= 2.0).any()) placed = true;
    }
  }
  if (!placed)
    throw PlacementFailure("no overlapping placement found in " +
                           std::to_string(max_attempts) + " attempts");

  sc.images.resize(T);
  sc.masks.resize(T);
  sc.shapes.resize(T);
  sc.depth_order = Matrix::Zero(T, kg);
  sc.timesteps.resize(T);

  const Eigen::Index n = static_cast<Eigen::Index>(H) * W;
  for (int t = 0; t < T; ++t) {
    sc.timesteps[t] = t;
    const ViewBasis b = view_basis(t, T, phi);
    Matrix shapes(n, kg);
    {
      Matrix live = rasterize_shapes(sprites, sc.count, b, H, W);
      shapes.setZero();
      shapes.leftCols(live.cols()) = live;
    }
    Eigen::RowVectorXd closeness = Eigen::RowVectorXd::Zero(kg);
    for (int k = 0; k < sc.count; ++k) {
      const Sprite& s = sprites[k];
      closeness(k) = s.x * b.dx + s.y * b.dy + s.z * b.dz;
    }
    sc.shapes[t] = shapes;
    sc.depth_order.row(t) = closeness;
    sc.masks[t] = painter_masks(shapes, closeness, sc.count);

    Matrix img(n, 3);
    for (int py = 0; py < H; ++py) {
      for (int px = 0; px < W; ++px) {
        const Eigen::Index p = static_cast<Eigen::Index>(py) * W + px;
        const real g = bg_slope * (2.0 * (px + 0.5) / W - 1.0);
        for (int c = 0; c < 3; ++c)
          img(p, c) = std::clamp(bg[c] + g, 0.0, 1.0);
      }
    }
    for (Eigen::Index p = 0; p < n; ++p) {
      for (int k = 0; k < sc.count; ++k) {
        if (sc.masks[t](p, k + 1) > 0.5) {
          for (int c = 0; c < 3; ++c) img(p, c) = sprites[k].color[c];
        }
      }
    }
    sc.images[t] = img;
  }
  return sc;
}

}  // namespace occgen
