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

#include <algorithm>
#include <numeric>

#include "doctest.h"

#include "bspg/boxes.hpp"
#include "bspg/rng.hpp"

using namespace bspg;

namespace {

Box random_box(Rng& rng, float side) {
  const float x1 = static_cast<float>(rng.uniform(0, side - 2));
  const float y1 = static_cast<float>(rng.uniform(0, side - 2));
  const float x2 = x1 + static_cast<float>(rng.uniform(1, side - x1));
  const float y2 = y1 + static_cast<float>(rng.uniform(1, side - y1));
  return {x1, y1, x2, y2};
}

// Quadratic-loop reference: keep the best-scored box, drop everything over
// the threshold against it, repeat.
std::vector<int> nms_oracle(const std::vector<Box>& boxes, const std::vector<float>& scores,
                            float thresh) {
  std::vector<int> order(boxes.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return scores[static_cast<std::size_t>(a)] >
                                              scores[static_cast<std::size_t>(b)]; });
  std::vector<char> dead(boxes.size(), 0);
  std::vector<int> keep;
  for (int i : order) {
    if (dead[static_cast<std::size_t>(i)]) continue;
    keep.push_back(i);
    for (int j : order)
      if (!dead[static_cast<std::size_t>(j)] && j != i &&
          iou(boxes[static_cast<std::size_t>(i)], boxes[static_cast<std::size_t>(j)]) > thresh)
        dead[static_cast<std::size_t>(j)] = 1;
  }
  return keep;
}

}  // namespace

TEST_CASE("iou closed forms") {
  Box a{0, 0, 10, 10};
  CHECK(iou(a, a) == doctest::Approx(1.0));
  CHECK(iou(a, Box{10, 10, 20, 20}) == doctest::Approx(0.0));
  CHECK(iou(a, Box{5, 0, 15, 10}) == doctest::Approx(50.0 / 150.0));
  CHECK(box_area(Box{1, 2, 4, 6}) == doctest::Approx(12.0));
}

TEST_CASE("clip_box clamps to the frame") {
  Box b = clip_box(Box{-5, -3, 300, 40}, 128, 64);
  CHECK(b.x1 == 0.f);
  CHECK(b.y1 == 0.f);
  CHECK(b.x2 == 128.f);
  CHECK(b.y2 == 40.f);
}

TEST_CASE("nms keeps the higher scored duplicate") {
  std::vector<Box> boxes{{0, 0, 10, 10}, {0, 0, 10, 10}};
  std::vector<float> scores{0.8f, 0.9f};
  auto keep = nms(boxes, scores, 0.5f);
  REQUIRE(keep.size() == 1);
  CHECK(keep[0] == 1);
}

TEST_CASE("nms equals quadratic oracle on random cases") {
  Rng rng(11);
  for (int trial = 0; trial < 200; ++trial) {
    const int n = rng.range(1, 40);
    std::vector<Box> boxes;
    std::vector<float> scores;
    for (int i = 0; i < n; ++i) {
      boxes.push_back(random_box(rng, 64));
      scores.push_back(static_cast<float>(rng.uniform()));
    }
    const float thresh = static_cast<float>(rng.uniform(0.2, 0.8));
    CHECK(nms(boxes, scores, thresh) == nms_oracle(boxes, scores, thresh));
  }
}

TEST_CASE("nms is permutation independent") {
  Rng rng(12);
  std::vector<Box> boxes;
  std::vector<float> scores;
  for (int i = 0; i < 25; ++i) {
    boxes.push_back(random_box(rng, 64));
    scores.push_back(static_cast<float>(rng.uniform()));
  }
  auto base = nms(boxes, scores, 0.5f);
  std::vector<Box> kept_base;
  for (int i : base) kept_base.push_back(boxes[static_cast<std::size_t>(i)]);

  std::vector<int> perm(boxes.size());
  std::iota(perm.begin(), perm.end(), 0);
  rng.shuffle(perm);
  std::vector<Box> pb(boxes.size());
  std::vector<float> ps(boxes.size());
  for (std::size_t i = 0; i < perm.size(); ++i) {
    pb[i] = boxes[static_cast<std::size_t>(perm[i])];
    ps[i] = scores[static_cast<std::size_t>(perm[i])];
  }
  auto permuted = nms(pb, ps, 0.5f);
  std::vector<Box> kept_perm;
  for (int i : permuted) kept_perm.push_back(pb[static_cast<std::size_t>(i)]);

  REQUIRE(kept_base.size() == kept_perm.size());
  for (std::size_t i = 0; i < kept_base.size(); ++i) {
    CHECK(kept_base[i].x1 == kept_perm[i].x1);
    CHECK(kept_base[i].y1 == kept_perm[i].y1);
  }
}

TEST_CASE("delta encode/decode round-trips") {
  // Decode caps the size growth at x62.5, so round-trips are exact only for
  // pairs inside that ratio; beyond it the decoded size saturates.
  const float log_cap = std::log(1000.0f / 16.0f);
  Rng rng(13);
  int exact = 0, capped = 0;
  for (int trial = 0; trial < 300; ++trial) {
    Box anchor = random_box(rng, 128);
    Box target = random_box(rng, 128);
    auto d = encode_delta(anchor, target);
    Box back = decode_delta(anchor, d);
    if (d[2] <= log_cap && d[3] <= log_cap) {
      ++exact;
      CHECK(back.x1 == doctest::Approx(target.x1).epsilon(1e-3));
      CHECK(back.y1 == doctest::Approx(target.y1).epsilon(1e-3));
      CHECK(back.x2 == doctest::Approx(target.x2).epsilon(1e-3));
      CHECK(back.y2 == doctest::Approx(target.y2).epsilon(1e-3));
    } else {
      ++capped;
      const float aw = anchor.x2 - anchor.x1;
      const float ah = anchor.y2 - anchor.y1;
      const float want_w = aw * std::exp(std::min(d[2], log_cap));
      const float want_h = ah * std::exp(std::min(d[3], log_cap));
      CHECK(back.x2 - back.x1 == doctest::Approx(want_w).epsilon(1e-4));
      CHECK(back.y2 - back.y1 == doctest::Approx(want_h).epsilon(1e-4));
    }
  }
  CHECK(exact > 250);  // the cap is the rare path
  CHECK(capped > 0);
}

TEST_CASE("zero deltas leave the box unchanged") {
  Box anchor{10, 20, 42, 50};
  Box out = decode_delta(anchor, {0, 0, 0, 0});
  CHECK(out.x1 == doctest::Approx(anchor.x1));
  CHECK(out.y1 == doctest::Approx(anchor.y1));
  CHECK(out.x2 == doctest::Approx(anchor.x2));
  CHECK(out.y2 == doctest::Approx(anchor.y2));
}

TEST_CASE("anchor grid geometry") {
  auto anchors = make_anchors(2, 3, 16, {32}, {1.0f});
  REQUIRE(anchors.size() == 6);
  // Cell (0,0) centered at (8,8), 32x32 box.
  CHECK(anchors[0].x1 == doctest::Approx(8 - 16));
  CHECK(anchors[0].y1 == doctest::Approx(8 - 16));
  CHECK(anchors[0].x2 == doctest::Approx(8 + 16));
  // Row-major cells: anchor 1 is cell (0,1) centered at x = 24.
  CHECK(anchors[1].x1 == doctest::Approx(24 - 16));

  auto wide = make_anchors(1, 1, 16, {32}, {0.5f});
  const float w = wide[0].x2 - wide[0].x1;
  const float h = wide[0].y2 - wide[0].y1;
  CHECK(w / h == doctest::Approx(2.0).epsilon(1e-3));
  CHECK(w * h == doctest::Approx(32.0 * 32.0).epsilon(1e-3));
}
