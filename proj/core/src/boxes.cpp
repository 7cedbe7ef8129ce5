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

#include "bspg/boxes.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "bspg/errors.hpp"

namespace bspg {

float box_area(const Box& b) {
  float w = std::max(0.f, b.x2 - b.x1);
  float h = std::max(0.f, b.y2 - b.y1);
  return w * h;
}

float iou(const Box& a, const Box& b) {
  float ix1 = std::max(a.x1, b.x1);
  float iy1 = std::max(a.y1, b.y1);
  float ix2 = std::min(a.x2, b.x2);
  float iy2 = std::min(a.y2, b.y2);
  float inter = std::max(0.f, ix2 - ix1) * std::max(0.f, iy2 - iy1);
  if (inter <= 0.f) return 0.f;
  float uni = box_area(a) + box_area(b) - inter;
  return uni > 0.f ? inter / uni : 0.f;
}

Box clip_box(const Box& b, float width, float height) {
  Box out;
  out.x1 = std::clamp(b.x1, 0.f, width);
  out.y1 = std::clamp(b.y1, 0.f, height);
  out.x2 = std::clamp(b.x2, 0.f, width);
  out.y2 = std::clamp(b.y2, 0.f, height);
  return out;
}

std::vector<int> nms(const std::vector<Box>& boxes, const std::vector<float>& scores,
                     float iou_thresh) {
  require(boxes.size() == scores.size(), ErrorKind::shape, "nms: boxes/scores size mismatch");
  std::vector<int> order(boxes.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&scores](int a, int b) {
    return scores[static_cast<std::size_t>(a)] > scores[static_cast<std::size_t>(b)];
  });
  std::vector<int> kept;
  std::vector<char> dead(boxes.size(), 0);
  for (std::size_t oi = 0; oi < order.size(); ++oi) {
    int i = order[oi];
    if (dead[static_cast<std::size_t>(i)]) continue;
    kept.push_back(i);
    for (std::size_t oj = oi + 1; oj < order.size(); ++oj) {
      int j = order[oj];
      if (dead[static_cast<std::size_t>(j)]) continue;
      if (iou(boxes[static_cast<std::size_t>(i)], boxes[static_cast<std::size_t>(j)]) > iou_thresh)
        dead[static_cast<std::size_t>(j)] = 1;
    }
  }
  return kept;
}

std::vector<Box> make_anchors(int feat_h, int feat_w, int stride,
                              const std::vector<float>& scales,
                              const std::vector<float>& ratios) {
  require(feat_h > 0 && feat_w > 0 && stride > 0, ErrorKind::shape, "make_anchors: bad grid");
  require(!scales.empty() && !ratios.empty(), ErrorKind::config, "make_anchors: empty scales/ratios");
  std::vector<Box> anchors;
  anchors.reserve(static_cast<std::size_t>(feat_h) * static_cast<std::size_t>(feat_w) *
                  scales.size() * ratios.size());
  for (int y = 0; y < feat_h; ++y) {
    for (int x = 0; x < feat_w; ++x) {
      float cx = (static_cast<float>(x) + 0.5f) * static_cast<float>(stride);
      float cy = (static_cast<float>(y) + 0.5f) * static_cast<float>(stride);
      for (float scale : scales) {
        for (float ratio : ratios) {
          float w = scale / std::sqrt(ratio);
          float h = scale * std::sqrt(ratio);
          anchors.push_back({cx - 0.5f * w, cy - 0.5f * h, cx + 0.5f * w, cy + 0.5f * h});
        }
      }
    }
  }
  return anchors;
}

std::array<float, 4> encode_delta(const Box& anchor, const Box& target) {
  float aw = std::max(1e-3f, anchor.x2 - anchor.x1);
  float ah = std::max(1e-3f, anchor.y2 - anchor.y1);
  float acx = 0.5f * (anchor.x1 + anchor.x2);
  float acy = 0.5f * (anchor.y1 + anchor.y2);
  float tw = std::max(1e-3f, target.x2 - target.x1);
  float th = std::max(1e-3f, target.y2 - target.y1);
  float tcx = 0.5f * (target.x1 + target.x2);
  float tcy = 0.5f * (target.y1 + target.y2);
  return {(tcx - acx) / aw, (tcy - acy) / ah, std::log(tw / aw), std::log(th / ah)};
}

Box decode_delta(const Box& anchor, const std::array<float, 4>& delta) {
  // Caps blow-up from unconstrained regression outputs early in training.
  constexpr float kLogLimit = 4.135166556742356f;  // log(1000 / 16)
  float aw = std::max(1e-3f, anchor.x2 - anchor.x1);
  float ah = std::max(1e-3f, anchor.y2 - anchor.y1);
  float acx = 0.5f * (anchor.x1 + anchor.x2);
  float acy = 0.5f * (anchor.y1 + anchor.y2);
  float cx = acx + delta[0] * aw;
  float cy = acy + delta[1] * ah;
  float w = aw * std::exp(std::min(delta[2], kLogLimit));
  float h = ah * std::exp(std::min(delta[3], kLogLimit));
  return {cx - 0.5f * w, cy - 0.5f * h, cx + 0.5f * w, cy + 0.5f * h};
}

}  // namespace bspg
