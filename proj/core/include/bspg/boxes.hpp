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
#include <vector>

namespace bspg {

// Axis-aligned box in continuous image coordinates; width is x2 - x1.
struct Box {
  float x1 = 0.f;
  float y1 = 0.f;
  float x2 = 0.f;
  float y2 = 0.f;
};

float box_area(const Box& b);
float iou(const Box& a, const Box& b);
Box clip_box(const Box& b, float width, float height);

// Greedy NMS. Candidates are visited by descending score, ties broken by
// lower index, so the kept set is independent of input permutation given
// distinct (score, index) pairs. Returns kept indices in visit order.
std::vector<int> nms(const std::vector<Box>& boxes, const std::vector<float>& scores,
                     float iou_thresh);

// One anchor per (cell, scale, ratio), centered at (x + 0.5) * stride.
// For ratio r the anchor is scale / sqrt(r) wide and scale * sqrt(r) tall.
std::vector<Box> make_anchors(int feat_h, int feat_w, int stride,
                              const std::vector<float>& scales,
                              const std::vector<float>& ratios);

// Standard box regression parameterization: center offsets scaled by anchor
// size, log size ratios. decode_delta clamps the log terms before exp.
std::array<float, 4> encode_delta(const Box& anchor, const Box& target);
Box decode_delta(const Box& anchor, const std::array<float, 4>& delta);

}  // namespace bspg

