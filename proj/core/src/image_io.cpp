#include "occgen/image_io.hpp"

#include <algorithm>
#include <array>
#include <fstream>

namespace occgen {

void write_ppm(const std::filesystem::path& path, const Matrix& image,
               int W) {
  if (W <= 0 || image.rows() % W != 0 || image.cols() != 3)
    throw FormatError("ppm image must be (H*W) x 3");
  const int H = static_cast<int>(image.rows()) / W;
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write " + path.string());
  out << "P6\n" << W << " " << H << "\n255\n";
  std::vector<unsigned char> row(static_cast<std::size_t>(W) * 3);
  for (int y = 0; y < H; ++y) {
    for (int x = 0; x < W; ++x)
      for (int c = 0; c < 3; ++c) {
        const real v = std::clamp(image(y * W + x, c), 0.0, 1.0);
        row[static_cast<std::size_t>(x) * 3 + static_cast<std::size_t>(c)] =
            static_cast<unsigned char>(std::lround(v * 255.0));
      }
    out.write(reinterpret_cast<const char*>(row.data()),
              static_cast<std::streamsize>(row.size()));
  }
  if (!out) throw FormatError("short write to " + path.string());
}

ImageGrid compose_grid(const std::vector<Matrix>& cells, int cell_h,
                       int cell_w, int cols, real gap) {
  if (cells.empty() || cols <= 0)
    throw FormatError("grid needs cells and a positive column count");
  for (const Matrix& c : cells)
    if (c.rows() != static_cast<Eigen::Index>(cell_h) * cell_w ||
        c.cols() != 3)
      throw FormatError("grid cell size mismatch");
  const int rows =
      (static_cast<int>(cells.size()) + cols - 1) / cols;
  ImageGrid g;
  g.W = cols * cell_w + (cols - 1);
  g.H = rows * cell_h + (rows - 1);
  g.pixels = Matrix::Constant(static_cast<Eigen::Index>(g.W) * g.H, 3, gap);
  for (std::size_t i = 0; i < cells.size(); ++i) {
    const int r = static_cast<int>(i) / cols;
    const int c = static_cast<int>(i) % cols;
    const int y0 = r * (cell_h + 1);
    const int x0 = c * (cell_w + 1);
    for (int y = 0; y < cell_h; ++y)
      for (int x = 0; x < cell_w; ++x)
        g.pixels.row(static_cast<Eigen::Index>(y0 + y) * g.W + x0 + x) =
            cells[i].row(static_cast<Eigen::Index>(y) * cell_w + x);
  }
  return g;
}

Matrix colorize_segmentation(const Matrix& weights) {
  static const std::array<std::array<real, 3>, 8> palette = {{
      {0.90, 0.25, 0.20},
      {0.20, 0.65, 0.90},
      {0.95, 0.80, 0.20},
      {0.35, 0.80, 0.35},
      {0.80, 0.35, 0.85},
      {0.95, 0.55, 0.20},
      {0.30, 0.85, 0.75},
      {0.85, 0.45, 0.55},
  }};
  Matrix out(weights.rows(), 3);
  for (Eigen::Index n = 0; n < weights.rows(); ++n) {
    Eigen::Index layer = 0;
    weights.row(n).maxCoeff(&layer);
    if (layer == 0) {
      out.row(n) << 0.15, 0.15, 0.15;
    } else {
      const auto& c = palette[static_cast<std::size_t>(layer - 1) %
                              palette.size()];
      out.row(n) << c[0], c[1], c[2];
    }
  }
  return out;
}

}  // namespace occgen
