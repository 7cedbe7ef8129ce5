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

#include "bspg/image.hpp"

#include <algorithm>
#include <cmath>

#include "bspg/errors.hpp"

namespace bspg {

Canvas::Canvas(int w, int h, Rgb fill)
    : width(w), height(h), rgb(static_cast<std::size_t>(w) * h * 3) {
  for (std::size_t i = 0; i < rgb.size(); i += 3) {
    rgb[i] = fill[0];
    rgb[i + 1] = fill[1];
    rgb[i + 2] = fill[2];
  }
}

void Canvas::set(int x, int y, const Rgb& c) {
  if (x < 0 || y < 0 || x >= width || y >= height) return;
  float* p = px(x, y);
  p[0] = c[0];
  p[1] = c[1];
  p[2] = c[2];
}

Image Canvas::quantize() const {
  Image img(width, height);
  for (std::size_t i = 0; i < rgb.size(); ++i) {
    const float v = std::clamp(rgb[i], 0.0f, 1.0f);
    img.pixels[i] = static_cast<std::uint8_t>(std::lround(v * 255.0f));
  }
  return img;
}

Image crop(const Image& img, int x1, int y1, int x2, int y2) {
  require(0 <= x1 && x1 < x2 && x2 <= img.width && 0 <= y1 && y1 < y2 && y2 <= img.height,
          ErrorKind::input, "crop rect outside image");
  Image out(x2 - x1, y2 - y1);
  for (int y = y1; y < y2; ++y) {
    const std::uint8_t* src = img.px(x1, y);
    std::uint8_t* dst = out.px(0, y - y1);
    std::copy(src, src + static_cast<std::size_t>(out.width) * 3, dst);
  }
  return out;
}

Image resize_bilinear(const Image& img, int out_w, int out_h) {
  require(out_w > 0 && out_h > 0 && img.width > 0 && img.height > 0, ErrorKind::input,
          "resize with empty image");
  Image out(out_w, out_h);
  const double sx = static_cast<double>(img.width) / out_w;
  const double sy = static_cast<double>(img.height) / out_h;
  for (int y = 0; y < out_h; ++y) {
    double fy = (y + 0.5) * sy - 0.5;
    fy = std::clamp(fy, 0.0, static_cast<double>(img.height - 1));
    const int y0 = static_cast<int>(fy);
    const int y1 = std::min(y0 + 1, img.height - 1);
    const double wy = fy - y0;
    for (int x = 0; x < out_w; ++x) {
      double fx = (x + 0.5) * sx - 0.5;
      fx = std::clamp(fx, 0.0, static_cast<double>(img.width - 1));
      const int x0 = static_cast<int>(fx);
      const int x1 = std::min(x0 + 1, img.width - 1);
      const double wx = fx - x0;
      for (int c = 0; c < 3; ++c) {
        const double v = (1 - wy) * ((1 - wx) * img.px(x0, y0)[c] + wx * img.px(x1, y0)[c]) +
                         wy * ((1 - wx) * img.px(x0, y1)[c] + wx * img.px(x1, y1)[c]);
        out.px(x, y)[c] = static_cast<std::uint8_t>(std::lround(v));
      }
    }
  }
  return out;
}

}  // namespace bspg
