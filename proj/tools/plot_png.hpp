// Copyright 2026 The ECFT Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Minimal line-chart rasterizer written out with libpng. Axis extents are
// labelled with a 3x5 digit font; exact values live in the companion CSV.

#ifndef ECFT_TOOLS_PLOT_PNG_HPP
#define ECFT_TOOLS_PLOT_PNG_HPP

#include <png.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

namespace ecft::plot {

struct Rgb {
  std::uint8_t r, g, b;
};

struct Series {
  std::vector<double> x, y;
};

class Canvas {
 public:
  Canvas(int w, int h) : w_(w), h_(h), px_(static_cast<std::size_t>(w * h), Rgb{255, 255, 255}) {}

  void set(int x, int y, Rgb c) {
    if (x >= 0 && x < w_ && y >= 0 && y < h_) px_[static_cast<std::size_t>(y * w_ + x)] = c;
  }

  void line(int x0, int y0, int x1, int y1, Rgb c) {
    const int dx = std::abs(x1 - x0), sx = x0 < x1 ? 1 : -1;
    const int dy = -std::abs(y1 - y0), sy = y0 < y1 ? 1 : -1;
    int err = dx + dy;
    for (;;) {
      set(x0, y0, c);
      set(x0, y0 + 1, c);
      if (x0 == x1 && y0 == y1) break;
      const int e2 = 2 * err;
      if (e2 >= dy) err += dy, x0 += sx;
      if (e2 <= dx) err += dx, y0 += sy;
    }
  }

  /// Digits, '.', '-' and '+' in a 3x5 bitmap font scaled by `s`.
  void text(int x, int y, const std::string& str, Rgb c, int s = 2) {
    for (char ch : str) {
      const auto& g = glyph(ch);
      for (int r = 0; r < 5; ++r)
        for (int col = 0; col < 3; ++col)
          if (g[static_cast<std::size_t>(r)] & (4 >> col))
            for (int a = 0; a < s; ++a)
              for (int b = 0; b < s; ++b) set(x + col * s + a, y + r * s + b, c);
      x += 4 * s;
    }
  }

  void write(const std::filesystem::path& path) const {
    FILE* f = std::fopen(path.string().c_str(), "wb");
    if (f == nullptr) throw std::runtime_error("cannot open " + path.string());
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (png == nullptr || info == nullptr || setjmp(png_jmpbuf(png))) {
      png_destroy_write_struct(&png, &info);
      std::fclose(f);
      throw std::runtime_error("libpng failed writing " + path.string());
    }
    png_init_io(png, f);
    png_set_IHDR(png, info, static_cast<png_uint_32>(w_), static_cast<png_uint_32>(h_), 8, PNG_COLOR_TYPE_RGB,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    std::vector<std::uint8_t> row(static_cast<std::size_t>(w_) * 3);
    for (int y = 0; y < h_; ++y) {
      for (int x = 0; x < w_; ++x) {
        const Rgb& p = px_[static_cast<std::size_t>(y * w_ + x)];
        row[static_cast<std::size_t>(3 * x)] = p.r;
        row[static_cast<std::size_t>(3 * x + 1)] = p.g;
        row[static_cast<std::size_t>(3 * x + 2)] = p.b;
      }
      png_write_row(png, row.data());
    }
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
    std::fclose(f);
  }

 private:
  static const std::array<std::uint8_t, 5>& glyph(char c) {
    static const std::array<std::array<std::uint8_t, 5>, 10> digits{{{7, 5, 5, 5, 7},
                                                                     {2, 6, 2, 2, 7},
                                                                     {7, 1, 7, 4, 7},
                                                                     {7, 1, 7, 1, 7},
                                                                     {5, 5, 7, 1, 1},
                                                                     {7, 4, 7, 1, 7},
                                                                     {7, 4, 7, 5, 7},
                                                                     {7, 1, 1, 1, 1},
                                                                     {7, 5, 7, 5, 7},
                                                                     {7, 5, 7, 1, 7}}};
    static const std::array<std::uint8_t, 5> dot{0, 0, 0, 0, 2}, minus{0, 0, 7, 0, 0}, plus{0, 2, 7, 2, 0},
        blank{0, 0, 0, 0, 0};
    if (c >= '0' && c <= '9') return digits[static_cast<std::size_t>(c - '0')];
    if (c == '.') return dot;
    if (c == '-') return minus;
    if (c == '+') return plus;
    return blank;
  }

  int w_, h_;
  std::vector<Rgb> px_;
};

inline std::string short_number(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, std::fabs(v) >= 100 ? "%.0f" : "%.1f", v);
  return buf;
}

/// One polyline per series over shared axes; y starts at 0.
inline void line_chart(const std::filesystem::path& path, const std::vector<Series>& series, int w = 640,
                       int h = 400) {
  static const std::vector<Rgb> palette{{31, 119, 180}, {214, 39, 40}, {44, 160, 44}, {148, 103, 189}, {255, 127, 14}};
  double xmin = 0, xmax = 1, ymax = 1;
  bool any = false;
  for (const auto& s : series)
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      xmin = any ? std::min(xmin, s.x[i]) : s.x[i];
      xmax = any ? std::max(xmax, s.x[i]) : std::max(s.x[i], s.x[i] + 1e-9);
      ymax = std::max(ymax, s.y[i]);
      any = true;
    }
  if (xmax <= xmin) xmax = xmin + 1;
  const int left = 60, right = 20, top = 20, bottom = 40;
  auto sx = [&](double x) { return left + static_cast<int>(std::lround((x - xmin) / (xmax - xmin) * (w - left - right))); };
  auto sy = [&](double y) { return h - bottom - static_cast<int>(std::lround(y / ymax * (h - top - bottom))); };
  Canvas c(w, h);
  const Rgb axis{0, 0, 0};
  c.line(left, top, left, h - bottom, axis);
  c.line(left, h - bottom, w - right, h - bottom, axis);
  c.text(8, top, short_number(ymax), axis);
  c.text(8, h - bottom - 10, "0", axis);
  c.text(left, h - bottom + 12, short_number(xmin), axis);
  const std::string xm = short_number(xmax);
  c.text(w - right - static_cast<int>(xm.size()) * 8, h - bottom + 12, xm, axis);
  for (std::size_t k = 0; k < series.size(); ++k) {
    const auto& s = series[k];
    const Rgb col = palette[k % palette.size()];
    for (std::size_t i = 0; i + 1 < s.x.size(); ++i) c.line(sx(s.x[i]), sy(s.y[i]), sx(s.x[i + 1]), sy(s.y[i + 1]), col);
    for (std::size_t i = 0; i < s.x.size(); ++i)
      for (int d = -2; d <= 2; ++d) c.set(sx(s.x[i]) + d, sy(s.y[i]), col), c.set(sx(s.x[i]), sy(s.y[i]) + d, col);
  }
  c.write(path);
}

}  // namespace ecft::plot

#endif  // ECFT_TOOLS_PLOT_PNG_HPP
