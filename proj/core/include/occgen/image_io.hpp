#pragma once

#include <filesystem>
#include <vector>

#include "occgen/common.hpp"

namespace occgen {

// Binary PPM, 8 bits per channel. The image is (H*W) x 3 with pixel
// index y * W + x and values in [0, 1]; out-of-range values clamp.
void write_ppm(const std::filesystem::path& path, const Matrix& image, int W);

struct ImageGrid {
  Matrix pixels;  // (H*W) x 3
  int W = 0, H = 0;
};

// Row-major layout of equally sized cells with a one-pixel separator.
// Short final rows are padded with separator color.
ImageGrid compose_grid(const std::vector<Matrix>& cells, int cell_h,
                       int cell_w, int cols, real gap = 1.0);

// Hard layer assignment rendered with a fixed palette; layer 0 (the
// background) is dark gray, object layers cycle saturated colors.
Matrix colorize_segmentation(const Matrix& weights);

}  // namespace occgen
