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

#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "bspg/tensor.hpp"

namespace bspg {

/// 8-bit RGB image, row-major, interleaved channels.
struct Image {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;  // height * width * 3

  Image() = default;
  Image(int w, int h) : width(w), height(h), pixels(static_cast<std::size_t>(w) * h * 3, 0) {}

  std::uint8_t* px(int x, int y) { return &pixels[(static_cast<std::size_t>(y) * width + x) * 3]; }
  const std::uint8_t* px(int x, int y) const {
    return &pixels[(static_cast<std::size_t>(y) * width + x) * 3];
  }
  bool operator==(const Image& o) const = default;
};

using Rgb = std::array<float, 3>;

/// Float RGB canvas used by the scene renderer; values clamped to [0,1]
/// only on quantization.
struct Canvas {
  int width = 0;
  int height = 0;
  std::vector<float> rgb;  // height * width * 3

  Canvas(int w, int h, Rgb fill = {0, 0, 0});
  float* px(int x, int y) { return &rgb[(static_cast<std::size_t>(y) * width + x) * 3]; }
  void set(int x, int y, const Rgb& c);
  Image quantize() const;
};

/// Integer-rect crop; the rect must lie inside the image.
Image crop(const Image& img, int x1, int y1, int x2, int y2);

/// Bilinear resize with half-pixel centers (src = (dst + 0.5) * scale - 0.5),
/// the same sampling convention as roi_align.
Image resize_bilinear(const Image& img, int out_w, int out_h);

/// Image -> (3,H,W) tensor with values in [0,1].
template <typename S>
Tensor<S> image_to_tensor(const Image& img) {
  Tensor<S> t({3, img.height, img.width});
  const std::size_t plane = static_cast<std::size_t>(img.height) * img.width;
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x) {
      const std::uint8_t* p = img.px(x, y);
      const std::size_t i = static_cast<std::size_t>(y) * img.width + x;
      t[i] = static_cast<S>(p[0] / 255.0);
      t[plane + i] = static_cast<S>(p[1] / 255.0);
      t[2 * plane + i] = static_cast<S>(p[2] / 255.0);
    }
  return t;
}

/// (H,W) map with values in [0,1] -> grayscale image.
template <typename S>
Image gray_to_image(const Tensor<S>& map) {
  Image img(map.dim(1), map.dim(0));
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x) {
      double v = static_cast<double>(map.at(y, x));
      v = v < 0 ? 0 : (v > 1 ? 1 : v);
      const auto g = static_cast<std::uint8_t>(v * 255.0 + 0.5);
      std::uint8_t* p = img.px(x, y);
      p[0] = p[1] = p[2] = g;
    }
  return img;
}

}  // namespace bspg
