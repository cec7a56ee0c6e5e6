#include "occgen/svg.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>

namespace occgen {

namespace {

constexpr int kWidth = 640;
constexpr int kHeight = 420;
constexpr int kMarginL = 70;
constexpr int kMarginR = 24;
constexpr int kMarginT = 48;
constexpr int kMarginB = 56;

const std::array<const char*, 6> kColors = {"#c0392b", "#2980b9", "#27ae60",
                                            "#8e44ad", "#d68910", "#16a085"};

std::string fmt(real v) {
  std::ostringstream os;
  os << std::setprecision(4) << v;
  return os.str();
}

}  // namespace

void write_line_plot(const std::filesystem::path& path,
                     const std::string& title, const std::string& x_label,
                     const std::vector<real>& x,
                     const std::vector<PlotSeries>& series) {
  if (x.empty() || series.empty())
    throw FormatError("plot needs at least one point and one series");
  for (const PlotSeries& s : series)
    if (s.y.size() != x.size())
      throw FormatError("plot series length mismatch");

  real x_lo = *std::min_element(x.begin(), x.end());
  real x_hi = *std::max_element(x.begin(), x.end());
  real y_lo = std::numeric_limits<real>::infinity(), y_hi = -y_lo;
  for (const PlotSeries& s : series)
    for (real v : s.y) {
      y_lo = std::min(y_lo, v);
      y_hi = std::max(y_hi, v);
    }
  if (x_hi == x_lo) x_hi = x_lo + 1;
  if (y_hi == y_lo) y_hi = y_lo + 1;
  // A little headroom so lines stay off the frame.
  const real pad = 0.05 * (y_hi - y_lo);
  y_lo -= pad;
  y_hi += pad;

  const real plot_w = kWidth - kMarginL - kMarginR;
  const real plot_h = kHeight - kMarginT - kMarginB;
  auto px = [&](real v) {
    return kMarginL + (v - x_lo) / (x_hi - x_lo) * plot_w;
  };
  auto py = [&](real v) {
    return kMarginT + (y_hi - v) / (y_hi - y_lo) * plot_h;
  };

  std::ofstream out(path);
  if (!out) throw FormatError("cannot write " + path.string());
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth
      << "\" height=\"" << kHeight << "\" font-family=\"sans-serif\">\n";
  out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  out << "<text x=\"" << kWidth / 2 << "\" y=\"24\" text-anchor=\"middle\" "
      << "font-size=\"16\">" << title << "</text>\n";

  // Frame and grid with value labels.
  out << "<rect x=\"" << kMarginL << "\" y=\"" << kMarginT << "\" width=\""
      << plot_w << "\" height=\"" << plot_h
      << "\" fill=\"none\" stroke=\"#444\"/>\n";
  const int ticks = 5;
  for (int i = 0; i <= ticks; ++i) {
    const real fy = y_lo + (y_hi - y_lo) * i / ticks;
    const real yy = py(fy);
    out << "<line x1=\"" << kMarginL << "\" y1=\"" << yy << "\" x2=\""
        << kMarginL + plot_w << "\" y2=\"" << yy
        << "\" stroke=\"#ddd\"/>\n";
    out << "<text x=\"" << kMarginL - 6 << "\" y=\"" << yy + 4
        << "\" text-anchor=\"end\" font-size=\"11\">" << fmt(fy)
        << "</text>\n";
  }
  for (std::size_t i = 0; i < x.size(); ++i) {
    const real xx = px(x[i]);
    out << "<text x=\"" << xx << "\" y=\"" << kMarginT + plot_h + 18
        << "\" text-anchor=\"middle\" font-size=\"11\">" << fmt(x[i])
        << "</text>\n";
  }
  out << "<text x=\"" << kMarginL + plot_w / 2 << "\" y=\""
      << kHeight - 12 << "\" text-anchor=\"middle\" font-size=\"13\">"
      << x_label << "</text>\n";

  for (std::size_t s = 0; s < series.size(); ++s) {
    const char* color = kColors[s % kColors.size()];
    out << "<polyline fill=\"none\" stroke=\"" << color
        << "\" stroke-width=\"2\" points=\"";
    for (std::size_t i = 0; i < x.size(); ++i)
      out << px(x[i]) << "," << py(series[s].y[i]) << " ";
    out << "\"/>\n";
    for (std::size_t i = 0; i < x.size(); ++i)
      out << "<circle cx=\"" << px(x[i]) << "\" cy=\"" << py(series[s].y[i])
          << "\" r=\"3\" fill=\"" << color << "\"/>\n";
    out << "<text x=\"" << kMarginL + plot_w - 8 << "\" y=\""
        << kMarginT + 18 + 16 * static_cast<int>(s)
        << "\" text-anchor=\"end\" font-size=\"12\" fill=\"" << color
        << "\">" << series[s].label << "</text>\n";
  }
  out << "</svg>\n";
  if (!out) throw FormatError("short write to " + path.string());
}

}  // namespace occgen
