/* Copyright 2026 the bspg authors.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License. */

#include "bspg/chart.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <string>

#include "bspg/errors.hpp"
#include "bspg/png_io.hpp"

namespace bspg {

namespace {

// 3x5 glyphs, row-major bits, for "0123456789.-".
constexpr std::uint16_t kGlyphs[12] = {
    0b111101101101111,  // 0
    0b010110010010111,  // 1
    0b111001111100111,  // 2
    0b111001111001111,  // 3
    0b101101111001001,  // 4
    0b111100111001111,  // 5
    0b111100111101111,  // 6
    0b111001001001001,  // 7
    0b111101111101111,  // 8
    0b111101111001111,  // 9
    0b000000000000010,  // .
    0b000000111000000,  // -
};

int glyph_index(char c) {
  if (c >= '0' && c <= '9') return c - '0';
  if (c == '.') return 10;
  if (c == '-') return 11;
  return -1;
}

void draw_glyph(Canvas& canvas, int x0, int y0, int g, const Rgb& color) {
  for (int row = 0; row < 5; ++row)
    for (int col = 0; col < 3; ++col)
      if (kGlyphs[g] >> ((4 - row) * 3 + (2 - col)) & 1) {
        const int x = x0 + col;
        const int y = y0 + row;
        if (x >= 0 && x < canvas.width && y >= 0 && y < canvas.height) canvas.set(x, y, color);
      }
}

void draw_text(Canvas& canvas, int x0, int y0, const std::string& text, const Rgb& color) {
  int x = x0;
  for (char c : text) {
    const int g = glyph_index(c);
    if (g >= 0) draw_glyph(canvas, x, y0, g, color);
    x += 4;
  }
}

std::string format_tick(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.3g", v);
  return buf;
}

void draw_line(Canvas& canvas, double x0, double y0, double x1, double y1, const Rgb& color) {
  const double dx = x1 - x0;
  const double dy = y1 - y0;
  const int steps = std::max(1, static_cast<int>(std::ceil(std::max(std::abs(dx), std::abs(dy)))));
  for (int i = 0; i <= steps; ++i) {
    const double t = static_cast<double>(i) / steps;
    const int x = static_cast<int>(std::lround(x0 + t * dx));
    const int y = static_cast<int>(std::lround(y0 + t * dy));
    if (x >= 0 && x < canvas.width && y >= 0 && y < canvas.height) canvas.set(x, y, color);
  }
}

void draw_dot(Canvas& canvas, int cx, int cy, const Rgb& color) {
  for (int dy = -1; dy <= 1; ++dy)
    for (int dx = -1; dx <= 1; ++dx) {
      const int x = cx + dx;
      const int y = cy + dy;
      if (x >= 0 && x < canvas.width && y >= 0 && y < canvas.height) canvas.set(x, y, color);
    }
}

}  // namespace

Image render_line_chart(const std::vector<ChartSeries>& series, int width, int height) {
  require(width >= 120 && height >= 90, ErrorKind::config, "chart size too small");
  require(!series.empty(), ErrorKind::input, "chart needs at least one series");

  double xmin = std::numeric_limits<double>::infinity(), xmax = -xmin;
  double ymin = xmin, ymax = -xmin;
  for (const ChartSeries& s : series) {
    require(s.xs.size() == s.ys.size() && !s.xs.empty(), ErrorKind::input,
            "chart series needs matching non-empty xs/ys");
    for (double v : s.xs) {
      xmin = std::min(xmin, v);
      xmax = std::max(xmax, v);
    }
    for (double v : s.ys) {
      ymin = std::min(ymin, v);
      ymax = std::max(ymax, v);
    }
  }
  if (xmax - xmin < 1e-12) {
    xmin -= 0.5;
    xmax += 0.5;
  }
  if (ymax - ymin < 1e-12) {
    ymin -= 0.5;
    ymax += 0.5;
  }
  // A little headroom keeps markers off the frame.
  const double ypad = 0.08 * (ymax - ymin);
  ymin -= ypad;
  ymax += ypad;

  const Rgb bg = {1.f, 1.f, 1.f};
  const Rgb frame = {0.25f, 0.25f, 0.25f};
  const Rgb grid = {0.88f, 0.88f, 0.88f};
  Canvas canvas(width, height, bg);

  const int left = 42, right = 12, top = 12, bottom = 26;
  const int px0 = left, px1 = width - right;
  const int py0 = top, py1 = height - bottom;
  auto sx = [&](double x) { return px0 + (x - xmin) / (xmax - xmin) * (px1 - px0); };
  auto sy = [&](double y) { return py1 - (y - ymin) / (ymax - ymin) * (py1 - py0); };

  const int ticks = 5;
  for (int t = 0; t <= ticks; ++t) {
    const double fy = ymin + (ymax - ymin) * t / ticks;
    const int y = static_cast<int>(std::lround(sy(fy)));
    draw_line(canvas, px0, y, px1, y, grid);
    draw_text(canvas, 2, y - 2, format_tick(fy), frame);
    const double fx = xmin + (xmax - xmin) * t / ticks;
    const int x = static_cast<int>(std::lround(sx(fx)));
    draw_line(canvas, x, py0, x, py1, grid);
    draw_text(canvas, x - 6, py1 + 6, format_tick(fx), frame);
  }
  draw_line(canvas, px0, py0, px0, py1, frame);
  draw_line(canvas, px0, py1, px1, py1, frame);

  for (const ChartSeries& s : series) {
    for (std::size_t i = 1; i < s.xs.size(); ++i)
      draw_line(canvas, sx(s.xs[i - 1]), sy(s.ys[i - 1]), sx(s.xs[i]), sy(s.ys[i]), s.color);
    for (std::size_t i = 0; i < s.xs.size(); ++i)
      draw_dot(canvas, static_cast<int>(std::lround(sx(s.xs[i]))),
               static_cast<int>(std::lround(sy(s.ys[i]))), s.color);
  }
  return canvas.quantize();
}

void write_line_chart(const std::string& path, const std::vector<ChartSeries>& series, int width,
                      int height) {
  write_png(path, render_line_chart(series, width, height));
}

}  // namespace bspg
