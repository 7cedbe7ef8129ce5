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

#include <cmath>
#include <vector>

#include "bspg/boxes.hpp"
#include "bspg/errors.hpp"
#include "bspg/tensor.hpp"

namespace bspg {

template <typename S>
struct RoiAlignSpec {
  int out_size = 7;
  int sampling = 2;        // sampling points per bin axis
  S spatial_scale = S(1);  // image coords * scale = feature coords
  // Zero-area boxes are widened to one image pixel around their center when
  // true; otherwise they raise an input error.
  bool clamp_degenerate = true;
};

namespace detail {

// Bilinear read at continuous boundary coordinate (px, py); cell (ix, iy)
// holds its value at center (ix + 0.5, iy + 0.5). The four neighbor indices
// and weights are shared between forward and backward.
template <typename S>
struct BilinearTaps {
  int x0, x1, y0, y1;
  S wx, wy;
};

template <typename S>
BilinearTaps<S> bilinear_taps(S px, S py, int w, int h) {
  S u = px - S(0.5);
  S v = py - S(0.5);
  u = std::min(std::max(u, S(0)), static_cast<S>(w - 1));
  v = std::min(std::max(v, S(0)), static_cast<S>(h - 1));
  BilinearTaps<S> t;
  t.x0 = static_cast<int>(std::floor(u));
  t.y0 = static_cast<int>(std::floor(v));
  if (t.x0 > w - 2) t.x0 = w >= 2 ? w - 2 : 0;
  if (t.y0 > h - 2) t.y0 = h >= 2 ? h - 2 : 0;
  t.x1 = std::min(t.x0 + 1, w - 1);
  t.y1 = std::min(t.y0 + 1, h - 1);
  t.wx = u - static_cast<S>(t.x0);
  t.wy = v - static_cast<S>(t.y0);
  return t;
}

template <typename S>
Box feature_box(const Box& b, const RoiAlignSpec<S>& spec) {
  Box box = b;
  if (box.x2 - box.x1 <= 0.f || box.y2 - box.y1 <= 0.f) {
    require(spec.clamp_degenerate, ErrorKind::input, "roi_align: zero-area box");
    const float cx = 0.5f * (box.x1 + box.x2);
    const float cy = 0.5f * (box.y1 + box.y2);
    if (box.x2 - box.x1 <= 0.f) {
      box.x1 = cx - 0.5f;
      box.x2 = cx + 0.5f;
    }
    if (box.y2 - box.y1 <= 0.f) {
      box.y1 = cy - 0.5f;
      box.y2 = cy + 0.5f;
    }
  }
  const float s = static_cast<float>(spec.spatial_scale);
  return {box.x1 * s, box.y1 * s, box.x2 * s, box.y2 * s};
}

}  // namespace detail

// (C,H,W) feature map + N boxes -> (N,C,out,out). Each bin averages
// sampling x sampling bilinear reads at evenly spaced interior points.
template <typename S>
Tensor<S> roi_align(const Tensor<S>& fm, const std::vector<Box>& boxes,
                    const RoiAlignSpec<S>& spec) {
  require(fm.rank() == 3, ErrorKind::shape, "roi_align expects a (C,H,W) feature map");
  require(spec.out_size >= 1 && spec.sampling >= 1, ErrorKind::config,
          "roi_align: out_size and sampling must be >= 1");
  const int c = fm.dim(0);
  const int h = fm.dim(1);
  const int w = fm.dim(2);
  const int n = static_cast<int>(boxes.size());
  const int os = spec.out_size;
  const int ns = spec.sampling;
  Tensor<S> out({n, c, os, os});
  const S inv = S(1) / static_cast<S>(ns * ns);
  for (int i = 0; i < n; ++i) {
    const Box fb = detail::feature_box(boxes[static_cast<std::size_t>(i)], spec);
    const S bin_w = (static_cast<S>(fb.x2) - static_cast<S>(fb.x1)) / os;
    const S bin_h = (static_cast<S>(fb.y2) - static_cast<S>(fb.y1)) / os;
    for (int by = 0; by < os; ++by)
      for (int bx = 0; bx < os; ++bx) {
        for (int sy = 0; sy < ns; ++sy)
          for (int sx = 0; sx < ns; ++sx) {
            const S py = static_cast<S>(fb.y1) +
                         bin_h * (static_cast<S>(by) + (static_cast<S>(sy) + S(0.5)) / ns);
            const S px = static_cast<S>(fb.x1) +
                         bin_w * (static_cast<S>(bx) + (static_cast<S>(sx) + S(0.5)) / ns);
            const auto t = detail::bilinear_taps(px, py, w, h);
            for (int ch = 0; ch < c; ++ch) {
              const S* plane = fm.data() + static_cast<std::size_t>(ch) * h * w;
              const S v00 = plane[t.y0 * w + t.x0];
              const S v01 = plane[t.y0 * w + t.x1];
              const S v10 = plane[t.y1 * w + t.x0];
              const S v11 = plane[t.y1 * w + t.x1];
              const S top = v00 + (v01 - v00) * t.wx;
              const S bot = v10 + (v11 - v10) * t.wx;
              out.at(i, ch, by, bx) += (top + (bot - top) * t.wy) * inv;
            }
          }
      }
  }
  return out;
}

// d(loss)/d(fm) for the call that produced dy; boxes must be the same list.
template <typename S>
Tensor<S> roi_align_backward(const Tensor<S>& dy, const std::vector<int>& fm_shape,
                             const std::vector<Box>& boxes, const RoiAlignSpec<S>& spec) {
  require(fm_shape.size() == 3, ErrorKind::shape, "roi_align backward expects (C,H,W) shape");
  const int c = fm_shape[0];
  const int h = fm_shape[1];
  const int w = fm_shape[2];
  const int n = static_cast<int>(boxes.size());
  const int os = spec.out_size;
  const int ns = spec.sampling;
  require(dy.rank() == 4 && dy.dim(0) == n && dy.dim(1) == c && dy.dim(2) == os && dy.dim(3) == os,
          ErrorKind::shape, "roi_align backward dy shape mismatch");
  Tensor<S> dfm(fm_shape);
  const S inv = S(1) / static_cast<S>(ns * ns);
  for (int i = 0; i < n; ++i) {
    const Box fb = detail::feature_box(boxes[static_cast<std::size_t>(i)], spec);
    const S bin_w = (static_cast<S>(fb.x2) - static_cast<S>(fb.x1)) / os;
    const S bin_h = (static_cast<S>(fb.y2) - static_cast<S>(fb.y1)) / os;
    for (int by = 0; by < os; ++by)
      for (int bx = 0; bx < os; ++bx) {
        for (int sy = 0; sy < ns; ++sy)
          for (int sx = 0; sx < ns; ++sx) {
            const S py = static_cast<S>(fb.y1) +
                         bin_h * (static_cast<S>(by) + (static_cast<S>(sy) + S(0.5)) / ns);
            const S px = static_cast<S>(fb.x1) +
                         bin_w * (static_cast<S>(bx) + (static_cast<S>(sx) + S(0.5)) / ns);
            const auto t = detail::bilinear_taps(px, py, w, h);
            for (int ch = 0; ch < c; ++ch) {
              const S g = dy.at(i, ch, by, bx) * inv;
              S* plane = dfm.data() + static_cast<std::size_t>(ch) * h * w;
              plane[t.y0 * w + t.x0] += g * (S(1) - t.wx) * (S(1) - t.wy);
              plane[t.y0 * w + t.x1] += g * t.wx * (S(1) - t.wy);
              plane[t.y1 * w + t.x0] += g * (S(1) - t.wx) * t.wy;
              plane[t.y1 * w + t.x1] += g * t.wx * t.wy;
            }
          }
      }
  }
  return dfm;
}

}  // namespace bspg
