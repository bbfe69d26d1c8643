#pragma once

// Tiny raster renderer for scatter plots, heatmaps and line charts, written
// as PNG through libpng. Images are derived artifacts only; no text labels.

#include <png.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <string>
#include <vector>

#include "ncsn/error.hpp"
#include "ncsn/tensor.hpp"

namespace ncsn::plot {

using Rgb = std::array<std::uint8_t, 3>;

inline constexpr Rgb kWhite{255, 255, 255};
inline constexpr Rgb kBlack{0, 0, 0};
inline constexpr Rgb kGrey{200, 200, 200};
inline constexpr Rgb kBlue{31, 119, 180};
inline constexpr Rgb kOrange{255, 127, 14};
inline constexpr Rgb kRed{214, 39, 40};

struct Bounds {
  double x_min = 0, x_max = 1, y_min = 0, y_max = 1;
};

class Canvas {
public:
  Canvas(int width, int height, Rgb background = kWhite)
      : width_(width), height_(height), pixels_(static_cast<std::size_t>(width * height) * 3) {
    for (int y = 0; y < height_; ++y)
      for (int x = 0; x < width_; ++x) set(x, y, background);
  }

  int width() const { return width_; }
  int height() const { return height_; }

  void set(int x, int y, Rgb c) {
    if (x < 0 || y < 0 || x >= width_ || y >= height_) return;
    auto* p = &pixels_[(static_cast<std::size_t>(y) * static_cast<std::size_t>(width_) + static_cast<std::size_t>(x)) * 3];
    p[0] = c[0];
    p[1] = c[1];
    p[2] = c[2];
  }

  void dot(int cx, int cy, int radius, Rgb c) {
    for (int dy = -radius; dy <= radius; ++dy)
      for (int dx = -radius; dx <= radius; ++dx)
        if (dx * dx + dy * dy <= radius * radius) set(cx + dx, cy + dy, c);
  }

  void line(int x0, int y0, int x1, int y1, Rgb c) {
    const int dx = std::abs(x1 - x0), sx = x0 < x1 ? 1 : -1;
    const int dy = -std::abs(y1 - y0), sy = y0 < y1 ? 1 : -1;
    int err = dx + dy;
    while (true) {
      set(x0, y0, c);
      if (x0 == x1 && y0 == y1) break;
      const int e2 = 2 * err;
      if (e2 >= dy) {
        err += dy;
        x0 += sx;
      }
      if (e2 <= dx) {
        err += dx;
        y0 += sy;
      }
    }
  }

  void rect(int x0, int y0, int x1, int y1, Rgb c) {
    line(x0, y0, x1, y0, c);
    line(x1, y0, x1, y1, c);
    line(x1, y1, x0, y1, c);
    line(x0, y1, x0, y0, c);
  }

  void fill(int x0, int y0, int x1, int y1, Rgb c) {
    for (int y = std::min(y0, y1); y <= std::max(y0, y1); ++y)
      for (int x = std::min(x0, x1); x <= std::max(x0, x1); ++x) set(x, y, c);
  }

  void write_png(const std::filesystem::path& path) const {
    std::error_code ec;
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path(), ec);
    png_image image{};
    image.version = PNG_IMAGE_VERSION;
    image.width = static_cast<png_uint_32>(width_);
    image.height = static_cast<png_uint_32>(height_);
    image.format = PNG_FORMAT_RGB;
    if (!png_image_write_to_file(&image, path.string().c_str(), 0, pixels_.data(), 0, nullptr))
      throw IoError("plot: cannot write " + path.string() + ": " + image.message);
  }

private:
  int width_;
  int height_;
  std::vector<std::uint8_t> pixels_;
};

// Maps data coordinates into a plotting frame with a fixed margin.
class Frame {
public:
  Frame(Canvas& canvas, Bounds b, int margin = 20) : canvas_(canvas), b_(b), margin_(margin) {
    if (!(b_.x_max > b_.x_min)) b_.x_max = b_.x_min + 1.0;
    if (!(b_.y_max > b_.y_min)) b_.y_max = b_.y_min + 1.0;
  }

  int px(double x) const {
    const double w = canvas_.width() - 2 * margin_;
    return margin_ + static_cast<int>(std::lround((x - b_.x_min) / (b_.x_max - b_.x_min) * w));
  }
  int py(double y) const {
    const double h = canvas_.height() - 2 * margin_;
    return canvas_.height() - margin_ - static_cast<int>(std::lround((y - b_.y_min) / (b_.y_max - b_.y_min) * h));
  }

  void border() { canvas_.rect(margin_, margin_, canvas_.width() - margin_, canvas_.height() - margin_, kBlack); }
  void axes_through_origin() {
    if (b_.x_min < 0 && b_.x_max > 0) canvas_.line(px(0), margin_, px(0), canvas_.height() - margin_, kGrey);
    if (b_.y_min < 0 && b_.y_max > 0) canvas_.line(margin_, py(0), canvas_.width() - margin_, py(0), kGrey);
  }

  Canvas& canvas() { return canvas_; }

private:
  Canvas& canvas_;
  Bounds b_;
  int margin_;
};

// Perceptually ordered blue-to-yellow ramp for t in [0, 1].
inline Rgb colormap(double t) {
  if (!std::isfinite(t)) return kGrey;
  t = std::clamp(t, 0.0, 1.0);
  static constexpr std::array<Rgb, 5> stops{{{68, 1, 84}, {59, 82, 139}, {33, 145, 140}, {94, 201, 98}, {253, 231, 37}}};
  const double pos = t * (stops.size() - 1);
  const std::size_t i = std::min<std::size_t>(static_cast<std::size_t>(pos), stops.size() - 2);
  const double f = pos - static_cast<double>(i);
  Rgb c{};
  for (int k = 0; k < 3; ++k)
    c[static_cast<std::size_t>(k)] = static_cast<std::uint8_t>(
        std::lround((1 - f) * stops[i][static_cast<std::size_t>(k)] + f * stops[i + 1][static_cast<std::size_t>(k)]));
  return c;
}

// 2-D scatter of the first two columns of `points`.
inline void scatter(const std::filesystem::path& path, const Tensor& points, Bounds bounds, Rgb color = kBlue,
                    int size = 512) {
  Canvas canvas(size, size);
  Frame frame(canvas, bounds);
  frame.axes_through_origin();
  frame.border();
  for (std::size_t i = 0; i < points.rows(); ++i) canvas.dot(frame.px(points(i, 0)), frame.py(points(i, 1)), 1, color);
  canvas.write_png(path);
}

// values is rows x cols, row 0 drawn at the bottom; colour scaled to [min, max].
inline void heatmap(const std::filesystem::path& path, const Tensor& values, int cell = 8) {
  const int rows = static_cast<int>(values.rows()), cols = static_cast<int>(values.cols());
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (double v : values.values())
    if (std::isfinite(v)) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  const double span = hi > lo ? hi - lo : 1.0;
  Canvas canvas(cols * cell, rows * cell);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) {
      const double v = values(static_cast<std::size_t>(r), static_cast<std::size_t>(c));
      const int y0 = (rows - 1 - r) * cell;
      canvas.fill(c * cell, y0, c * cell + cell - 1, y0 + cell - 1, colormap((v - lo) / span));
    }
  canvas.write_png(path);
}

// One or more series against their index.
inline void lines(const std::filesystem::path& path, const std::vector<std::vector<double>>& series,
                  const std::vector<Rgb>& colors, int width = 640, int height = 400) {
  Bounds b{0, 1, std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity()};
  for (const auto& s : series) {
    b.x_max = std::max(b.x_max, static_cast<double>(s.size() > 0 ? s.size() - 1 : 1));
    for (double v : s)
      if (std::isfinite(v)) {
        b.y_min = std::min(b.y_min, v);
        b.y_max = std::max(b.y_max, v);
      }
  }
  if (!std::isfinite(b.y_min)) b = {0, 1, 0, 1};
  Canvas canvas(width, height);
  Frame frame(canvas, b);
  frame.axes_through_origin();
  frame.border();
  for (std::size_t k = 0; k < series.size(); ++k) {
    const auto& s = series[k];
    const Rgb col = colors.empty() ? kBlue : colors[k % colors.size()];
    for (std::size_t i = 1; i < s.size(); ++i) {
      if (!std::isfinite(s[i - 1]) || !std::isfinite(s[i])) continue;
      canvas.line(frame.px(static_cast<double>(i - 1)), frame.py(s[i - 1]), frame.px(static_cast<double>(i)),
                  frame.py(s[i]), col);
    }
  }
  canvas.write_png(path);
}

}  // namespace ncsn::plot
