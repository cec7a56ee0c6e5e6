#pragma once

#include <array>
#include <string>
#include <vector>

#include "occgen/common.hpp"
#include "occgen/rng.hpp"

namespace occgen {

enum class ShapeKind { Disk, Square, Triangle };

ShapeKind shape_from_name(const std::string& name);
std::string shape_name(ShapeKind k);

struct SceneConfig {
  int image_size = 32;
  int num_views = 10;
  int count_min = 2;
  int count_max = 4;
  int max_objects = 4;
  std::vector<ShapeKind> shape_catalog = {ShapeKind::Disk, ShapeKind::Square,
                                          ShapeKind::Triangle};
  std::vector<std::array<real, 3>> palette = {
      {0.90, 0.20, 0.20}, {0.20, 0.75, 0.25}, {0.25, 0.35, 0.95},
      {0.95, 0.80, 0.20}, {0.85, 0.30, 0.85}, {0.25, 0.80, 0.85}};
  real rho_min = 2.0, rho_max = 3.0;
  real phi_min = 0.9, phi_max = 1.25;
  uint64_t seed = 0;

  void validate() const;
};

// One multi-view scene with complete ground truth.
//
// Layout conventions: every per-frame raster is (H*W) x channels with
// pixel index y*W + x. masks carries K_gt+1 layers, layer 0 is the
// background; unused object layers stay zero. depth_order holds the
// closeness score per (frame, object): LARGER means closer to the
// camera. timesteps are the frame indices the cameras were placed at.
struct Scene {
  int H = 0, W = 0, C = 3;
  int K_gt = 0;
  int count = 0;
  std::vector<Matrix> images;  // T of (H*W) x C, values in [0,1]
  std::vector<Matrix> masks;   // T of (H*W) x (K_gt+1), one-hot rows
  std::vector<Matrix> shapes;  // T of (H*W) x K_gt, complete silhouettes
  Matrix depth_order;          // T x K_gt closeness, ties broken by index
  std::vector<int> timesteps;  // T

  int T() const { return static_cast<int>(images.size()); }
};

// Camera on a sphere: radius rho, inclination phi, azimuth 2*pi*t/T.
std::array<real, 3> camera_position(int t, int T, real rho, real phi);

// Deterministic procedural scene. Objects are flat sprites at fixed 3D
// positions, projected orthographically per view; occlusion follows the
// painter rule on closeness. With two or more objects, placement is
// resampled until some pair of complete shapes overlaps in at least one
// view (at most 100 attempts, then PlacementFailure).
Scene generate_scene(const SceneConfig& cfg, uint64_t seed);

// Recompute per-pixel ownership from complete shapes and closeness.
// generate_scene's masks satisfy this identity by construction.
Matrix painter_masks(const Matrix& shapes, const Eigen::RowVectorXd& closeness,
                     int live_objects);

}  // namespace occgen
