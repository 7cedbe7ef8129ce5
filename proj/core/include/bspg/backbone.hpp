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

#include <string>
#include <vector>

#include "bspg/errors.hpp"
#include "bspg/nn.hpp"
#include "bspg/roi_align.hpp"
#include "bspg/tensor.hpp"

namespace bspg {

// One backbone stage: 3x3 convolution plus ReLU.
template <typename S>
struct ConvRelu {
  Conv2d<S> conv;

  struct Cache {
    typename Conv2d<S>::Cache conv_c;
    Tensor<S> out;
  };

  ConvRelu() = default;
  ConvRelu(int in_ch, int out_ch, int stride, Rng& rng) : conv(in_ch, out_ch, 3, stride, 1, rng) {}

  Tensor<S> forward(const Tensor<S>& x, Cache* cache = nullptr) const {
    Tensor<S> y = relu(conv.forward(x, cache ? &cache->conv_c : nullptr));
    if (cache) cache->out = y;
    return y;
  }

  Tensor<S> backward(Cache& cache, const Tensor<S>& dy) {
    return conv.backward(cache.conv_c, relu_backward(dy, cache.out));
  }

  void collect_params(const std::string& prefix, std::vector<Param<S>*>& into) {
    conv.w.name = prefix + ".w";
    conv.b.name = prefix + ".b";
    into.push_back(&conv.w);
    into.push_back(&conv.b);
  }
};

// The shared early trunk (three stride-2 stages). In stage 2 it is frozen
// and runs without caches; gradients never reach it.
template <typename S>
struct Trunk {
  ConvRelu<S> s1, s2, s3;

  struct Cache {
    typename ConvRelu<S>::Cache c1, c2, c3;
  };

  Trunk() = default;
  Trunk(int in_ch, int c1, int c2, int c3, Rng& rng)
      : s1(in_ch, c1, 2, rng), s2(c1, c2, 2, rng), s3(c2, c3, 2, rng) {}

  Tensor<S> forward(const Tensor<S>& x, Cache* cache = nullptr) const {
    require(x.all_finite(), ErrorKind::input, "backbone input has non-finite pixels");
    Tensor<S> a = s1.forward(x, cache ? &cache->c1 : nullptr);
    Tensor<S> b = s2.forward(a, cache ? &cache->c2 : nullptr);
    return s3.forward(b, cache ? &cache->c3 : nullptr);
  }

  Tensor<S> backward(Cache& cache, const Tensor<S>& dy) {
    Tensor<S> d3 = s3.backward(cache.c3, dy);
    Tensor<S> d2 = s2.backward(cache.c2, d3);
    return s1.backward(cache.c1, d2);
  }

  void collect_params(const std::string& prefix, std::vector<Param<S>*>& into) {
    s1.collect_params(prefix + ".s1", into);
    s2.collect_params(prefix + ".s2", into);
    s3.collect_params(prefix + ".s3", into);
  }
};

// RPN head: 3x3 trunk, then 1x1 objectness (one logit per anchor) and 1x1
// box deltas (four per anchor).
template <typename S>
struct RpnHead {
  ConvRelu<S> trunk;
  Conv2d<S> obj;
  Conv2d<S> reg;

  struct Cache {
    typename ConvRelu<S>::Cache trunk_c;
    typename Conv2d<S>::Cache obj_c, reg_c;
  };

  RpnHead() = default;
  RpnHead(int channels, int anchors, Rng& rng)
      : trunk(channels, channels, 1, rng),
        obj(channels, anchors, 1, 1, 0, rng),
        reg(channels, 4 * anchors, 1, 1, 0, rng) {
    // Small head init keeps early objectness near uniform.
    obj.w.value *= S(0.1);
    reg.w.value *= S(0.1);
  }

  int anchors_per_cell() const { return obj.out_channels(); }

  // Returns (objectness logits (A,H,W), deltas (4A,H,W)).
  std::pair<Tensor<S>, Tensor<S>> forward(const Tensor<S>& fm, Cache* cache = nullptr) const {
    Tensor<S> t = trunk.forward(fm, cache ? &cache->trunk_c : nullptr);
    Tensor<S> o = obj.forward(t, cache ? &cache->obj_c : nullptr);
    Tensor<S> r = reg.forward(t, cache ? &cache->reg_c : nullptr);
    return {std::move(o), std::move(r)};
  }

  Tensor<S> backward(Cache& cache, const Tensor<S>& dobj, const Tensor<S>& dreg) {
    Tensor<S> dt = obj.backward(cache.obj_c, dobj);
    dt += reg.backward(cache.reg_c, dreg);
    return trunk.backward(cache.trunk_c, dt);
  }

  void collect_params(const std::string& prefix, std::vector<Param<S>*>& into) {
    trunk.collect_params(prefix + ".trunk", into);
    obj.w.name = prefix + ".obj.w";
    obj.b.name = prefix + ".obj.b";
    reg.w.name = prefix + ".reg.w";
    reg.b.name = prefix + ".reg.b";
    into.push_back(&obj.w);
    into.push_back(&obj.b);
    into.push_back(&reg.w);
    into.push_back(&reg.b);
  }
};

// RoI feature extractor: roi_align to a fixed grid, then one stride-2 stage
// (the res5 analog). The same instance serves proposal and query paths, so
// the siamese contract is parameter identity by construction.
template <typename S>
struct RoiExtractor {
  ConvRelu<S> stage;
  RoiAlignSpec<S> spec;

  struct Cache {
    std::vector<Box> boxes;
    std::vector<int> fm_shape;
    typename ConvRelu<S>::Cache stage_c;
  };

  RoiExtractor() = default;
  RoiExtractor(int channels, int roi_size, S spatial_scale, Rng& rng)
      : stage(channels, channels, 2, rng) {
    spec.out_size = roi_size;
    spec.sampling = 2;
    spec.spatial_scale = spatial_scale;
  }

  // fm (C,H,W) + boxes -> (N,C,h,w); single box convenience below.
  Tensor<S> forward(const Tensor<S>& fm, const std::vector<Box>& boxes,
                    Cache* cache = nullptr) const {
    Tensor<S> pooled = roi_align(fm, boxes, spec);
    if (cache) {
      cache->boxes = boxes;
      cache->fm_shape = fm.shape();
    }
    return stage.forward(pooled, cache ? &cache->stage_c : nullptr);
  }

  Tensor<S> forward_one(const Tensor<S>& fm, const Box& box, Cache* cache = nullptr) const {
    Tensor<S> batch = forward(fm, {box}, cache);
    return batch.reshaped({batch.dim(1), batch.dim(2), batch.dim(3)});
  }

  // Returns d(loss)/d(fm).
  Tensor<S> backward(Cache& cache, const Tensor<S>& dy) {
    Tensor<S> dy4 = dy;
    if (dy.rank() == 3) dy4 = dy.reshaped({1, dy.dim(0), dy.dim(1), dy.dim(2)});
    Tensor<S> dpooled = stage.backward(cache.stage_c, dy4);
    return roi_align_backward(dpooled, cache.fm_shape, cache.boxes, spec);
  }

  void collect_params(const std::string& prefix, std::vector<Param<S>*>& into) {
    stage.collect_params(prefix, into);
  }
};

}  // namespace bspg
