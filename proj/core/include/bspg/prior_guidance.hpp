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
#include <string>

#include "bspg/errors.hpp"
#include "bspg/roi_align.hpp"
#include "bspg/tensor.hpp"

namespace bspg {

// Where and how the class-agnostic prior modulates the target feature.
// The mult strategies own no parameters; the cat strategies add the prior
// as an extra channel and project back with a learned 1x1 convolution.
enum class GuidanceStrategy { mult_roi, mult_rpn, cat_roi, cat_rpn };

inline GuidanceStrategy parse_guidance(const std::string& name) {
  if (name == "mult-roi") return GuidanceStrategy::mult_roi;
  if (name == "mult-rpn") return GuidanceStrategy::mult_rpn;
  if (name == "cat-roi") return GuidanceStrategy::cat_roi;
  if (name == "cat-rpn") return GuidanceStrategy::cat_rpn;
  fail(ErrorKind::config, "unknown guidance strategy: " + name);
}

inline const char* to_string(GuidanceStrategy s) {
  switch (s) {
    case GuidanceStrategy::mult_roi: return "mult-roi";
    case GuidanceStrategy::mult_rpn: return "mult-rpn";
    case GuidanceStrategy::cat_roi: return "cat-roi";
    case GuidanceStrategy::cat_rpn: return "cat-rpn";
  }
  return "?";
}

inline bool guidance_at_rpn(GuidanceStrategy s) {
  return s == GuidanceStrategy::mult_rpn || s == GuidanceStrategy::cat_rpn;
}

inline bool guidance_is_mult(GuidanceStrategy s) {
  return s == GuidanceStrategy::mult_roi || s == GuidanceStrategy::mult_rpn;
}

// R[i, j] = cosine over channels between target position i and query
// position j; zero vectors give 0. Inputs come from the frozen high-level
// extractor, so no backward exists for this pipeline.
template <typename S>
Tensor<S> relation_map(const Tensor<S>& target_high, const Tensor<S>& query_high) {
  require(target_high.rank() == 3 && query_high.rank() == 3, ErrorKind::shape,
          "relation_map expects (C,H,W) inputs");
  require(target_high.dim(0) == query_high.dim(0), ErrorKind::shape,
          "relation_map channel mismatch");
  const int c = target_high.dim(0);
  const int nt = target_high.dim(1) * target_high.dim(2);
  const int nq = query_high.dim(1) * query_high.dim(2);

  // Rows of T/Q are L2-normalized per-position channel vectors.
  auto normalized_rows = [c](const Tensor<S>& fm, int n) {
    Tensor<S> rows({n, c});
    for (int i = 0; i < n; ++i) {
      double norm2 = 0;
      for (int ch = 0; ch < c; ++ch) {
        const S v = fm[static_cast<std::size_t>(ch) * n + i];
        norm2 += static_cast<double>(v) * v;
      }
      const S inv = norm2 == 0.0 ? S(0) : static_cast<S>(1.0 / std::sqrt(norm2));
      for (int ch = 0; ch < c; ++ch)
        rows.at(i, ch) = fm[static_cast<std::size_t>(ch) * n + i] * inv;
    }
    return rows;
  };
  Tensor<S> t = normalized_rows(target_high, nt);
  Tensor<S> q = normalized_rows(query_high, nq);
  Tensor<S> r({nt, nq});
  r.mat(nt, nq).noalias() = t.mat(nt, c) * q.mat(nq, c).transpose();
  return r;
}

// P[i] = max over query positions of R[i, j].
template <typename S>
Tensor<S> prior_from_relation(const Tensor<S>& r) {
  require(r.rank() == 2 && r.dim(0) > 0 && r.dim(1) > 0, ErrorKind::shape,
          "prior_from_relation expects a non-empty matrix");
  const int nt = r.dim(0);
  const int nq = r.dim(1);
  Tensor<S> p({nt});
  for (int i = 0; i < nt; ++i) {
    S mx = r.at(i, 0);
    for (int j = 1; j < nq; ++j) mx = std::max(mx, r.at(i, j));
    p[static_cast<std::size_t>(i)] = mx;
  }
  return p;
}

// Bilinear resize of a (H,W) map with half-pixel centers, matching the
// roi_align sampling convention.
template <typename S>
Tensor<S> resize_map(const Tensor<S>& map, int out_h, int out_w) {
  require(map.rank() == 2, ErrorKind::shape, "resize_map expects (H,W)");
  require(out_h >= 1 && out_w >= 1, ErrorKind::shape, "resize_map: bad output size");
  const int h = map.dim(0);
  const int w = map.dim(1);
  Tensor<S> out({out_h, out_w});
  const S sy = static_cast<S>(h) / out_h;
  const S sx = static_cast<S>(w) / out_w;
  for (int y = 0; y < out_h; ++y)
    for (int x = 0; x < out_w; ++x) {
      const S py = (static_cast<S>(y) + S(0.5)) * sy;
      const S px = (static_cast<S>(x) + S(0.5)) * sx;
      const auto t = detail::bilinear_taps(px, py, w, h);
      const S v00 = map.at(t.y0, t.x0);
      const S v01 = map.at(t.y0, t.x1);
      const S v10 = map.at(t.y1, t.x0);
      const S v11 = map.at(t.y1, t.x1);
      const S top = v00 + (v01 - v00) * t.wx;
      const S bot = v10 + (v11 - v10) * t.wx;
      out.at(y, x) = top + (bot - top) * t.wy;
    }
  return out;
}

// Min-max normalization of the raw prior (laid out as raw_h x raw_w),
// then bilinear resize to (out_h, out_w). A flat map has no ordering
// information and becomes all ones so that multiplicative guidance is a
// no-op rather than an annihilation.
template <typename S>
Tensor<S> normalize_and_resize(const Tensor<S>& raw, int raw_h, int raw_w, int out_h, int out_w) {
  require(raw.numel() == static_cast<std::size_t>(raw_h) * raw_w, ErrorKind::shape,
          "normalize_and_resize: raw prior size mismatch");
  Tensor<S> norm({raw_h, raw_w});
  S lo = raw[0];
  S hi = raw[0];
  for (std::size_t i = 1; i < raw.numel(); ++i) {
    lo = std::min(lo, raw[i]);
    hi = std::max(hi, raw[i]);
  }
  if (static_cast<double>(hi) - static_cast<double>(lo) < 1e-8) {
    norm.fill(S(1));
  } else {
    const S inv = S(1) / (hi - lo);
    for (std::size_t i = 0; i < raw.numel(); ++i) norm[i] = (raw[i] - lo) * inv;
  }
  return resize_map(norm, out_h, out_w);
}

// phat = prior (broadcast over channels) * feat. The prior is a constant
// in the gradient path.
template <typename S>
Tensor<S> apply_prior_mult(const Tensor<S>& feat, const Tensor<S>& prior) {
  require(feat.rank() == 3 && prior.rank() == 2, ErrorKind::shape,
          "apply_prior_mult expects (C,H,W) and (H,W)");
  require(feat.dim(1) == prior.dim(0) && feat.dim(2) == prior.dim(1), ErrorKind::shape,
          "apply_prior_mult spatial shape mismatch");
  Tensor<S> out = feat;
  const std::size_t hw = prior.numel();
  for (int c = 0; c < feat.dim(0); ++c) {
    S* plane = out.data() + static_cast<std::size_t>(c) * hw;
    for (std::size_t i = 0; i < hw; ++i) plane[i] *= prior[i];
  }
  return out;
}

template <typename S>
Tensor<S> apply_prior_mult_backward(const Tensor<S>& dy, const Tensor<S>& prior) {
  return apply_prior_mult(dy, prior);
}

// (C,H,W) + (H,W) -> (C+1,H,W) with the prior as the trailing channel.
template <typename S>
Tensor<S> concat_prior_channel(const Tensor<S>& feat, const Tensor<S>& prior) {
  require(feat.rank() == 3 && prior.rank() == 2, ErrorKind::shape,
          "concat_prior_channel expects (C,H,W) and (H,W)");
  require(feat.dim(1) == prior.dim(0) && feat.dim(2) == prior.dim(1), ErrorKind::shape,
          "concat_prior_channel spatial shape mismatch");
  Tensor<S> out({feat.dim(0) + 1, feat.dim(1), feat.dim(2)});
  std::copy(feat.data(), feat.data() + feat.numel(), out.data());
  std::copy(prior.data(), prior.data() + prior.numel(), out.data() + feat.numel());
  return out;
}

// Gradient of concat_prior_channel w.r.t. feat: drop the prior channel.
template <typename S>
Tensor<S> strip_prior_channel(const Tensor<S>& dcat) {
  require(dcat.rank() == 3 && dcat.dim(0) >= 2, ErrorKind::shape,
          "strip_prior_channel expects (C+1,H,W)");
  Tensor<S> out({dcat.dim(0) - 1, dcat.dim(1), dcat.dim(2)});
  std::copy(dcat.data(), dcat.data() + out.numel(), out.data());
  return out;
}

}  // namespace bspg
