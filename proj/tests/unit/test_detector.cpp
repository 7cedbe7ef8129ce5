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
#include <cmath>
#include <vector>

#include "bspg/detector.hpp"
#include "bspg/errors.hpp"
#include "doctest.h"
#include "test_support.hpp"

using namespace bspg;
using bspg::test::random_tensor;

namespace {

ModelConfig tiny_config() {
  ModelConfig mc;
  mc.image_size = 64;
  mc.query_size = 32;
  mc.base_class_count = 3;
  mc.proposal_count = 8;
  mc.roi_size = 2;
  mc.novel_hidden = 16;
  mc.nonlocal_embed = 8;
  mc.anchor_scales = {16.f, 32.f};
  mc.anchor_ratios = {1.f};
  return mc;
}

template <typename S>
void episode_inputs(Rng& rng, const ModelConfig& mc, Tensor<S>& target,
                    std::vector<Tensor<S>>& queries, int query_count = 1) {
  target = random_tensor<S>(rng, {3, mc.image_size, mc.image_size}, 0.0, 1.0);
  queries.clear();
  for (int i = 0; i < query_count; ++i)
    queries.push_back(random_tensor<S>(rng, {3, mc.query_size, mc.query_size}, 0.0, 1.0));
}

std::vector<Box> pinned_boxes(Rng& rng, int k, int image_size) {
  std::vector<Box> boxes;
  for (int i = 0; i < k; ++i) {
    const float x = static_cast<float>(rng.uniform(0.0, image_size - 24.0));
    const float y = static_cast<float>(rng.uniform(0.0, image_size - 24.0));
    const float w = static_cast<float>(rng.uniform(12.0, 24.0));
    const float h = static_cast<float>(rng.uniform(12.0, 24.0));
    boxes.push_back({x, y, x + w, y + h});
  }
  return boxes;
}

}  // namespace

TEST_CASE("propose ranks by objectness and caps at K") {
  const int image = 32;
  auto anchors = make_anchors(2, 2, 16, {16.f}, {1.f});
  REQUIRE(anchors.size() == 4);
  Tensor<float> logits({1, 2, 2});
  logits[0] = 0.5f;
  logits[1] = 2.0f;
  logits[2] = 1.0f;
  logits[3] = -1.0f;
  Tensor<float> deltas({4, 2, 2});  // zero: proposals are the clipped anchors

  auto set = propose(logits, deltas, anchors, image, 2, 100, 0.5f);
  REQUIRE(set.boxes.size() == 2);
  CHECK_FALSE(set.padded);
  Box a1 = clip_box(anchors[1], 32.f, 32.f);
  Box a2 = clip_box(anchors[2], 32.f, 32.f);
  CHECK(set.boxes[0].x1 == doctest::Approx(a1.x1));
  CHECK(set.boxes[0].y2 == doctest::Approx(a1.y2));
  CHECK(set.boxes[1].x1 == doctest::Approx(a2.x1));
  CHECK(set.objectness[0] == doctest::Approx(sigmoid(2.0f)));
  CHECK(set.objectness[1] == doctest::Approx(sigmoid(1.0f)));
}

TEST_CASE("propose pads by duplicating the last survivor") {
  auto anchors = make_anchors(2, 2, 16, {16.f}, {1.f});
  Tensor<float> logits({1, 2, 2});
  logits[0] = 3.0f;
  logits[1] = 2.0f;
  logits[2] = 1.0f;
  logits[3] = 0.5f;
  // All four decode onto the first anchor's box: NMS keeps exactly one.
  Tensor<float> deltas({4, 2, 2});
  for (std::size_t i = 0; i < anchors.size(); ++i) {
    auto d = encode_delta(anchors[i], anchors[0]);
    for (int j = 0; j < 4; ++j) deltas[static_cast<std::size_t>(j) * 4 + i] = d[static_cast<std::size_t>(j)];
  }
  auto set = propose(logits, deltas, anchors, 32, 4, 100, 0.5f);
  REQUIRE(set.boxes.size() == 4);
  CHECK(set.padded);
  for (const Box& b : set.boxes) {
    CHECK(b.x1 == doctest::Approx(set.boxes[0].x1));
    CHECK(b.y2 == doctest::Approx(set.boxes[0].y2));
  }
}

TEST_CASE("propose honors the pre-NMS cap") {
  auto anchors = make_anchors(2, 2, 16, {16.f}, {1.f});
  Tensor<float> logits({1, 2, 2});
  logits[0] = 0.1f;
  logits[1] = 5.0f;  // only this one survives the cap
  logits[2] = 4.0f;
  logits[3] = 3.0f;
  Tensor<float> deltas({4, 2, 2});
  auto set = propose(logits, deltas, anchors, 32, 2, 1, 0.5f);
  CHECK(set.padded);
  Box a1 = clip_box(anchors[1], 32.f, 32.f);
  CHECK(set.boxes[0].x1 == doctest::Approx(a1.x1));
  CHECK(set.boxes[1].x1 == doctest::Approx(a1.x1));
}

TEST_CASE("propose validates shapes") {
  auto anchors = make_anchors(2, 2, 16, {16.f}, {1.f});
  Tensor<float> logits({1, 2, 2});
  Tensor<float> bad_deltas({3, 2, 2});
  CHECK_THROWS_AS(propose(logits, bad_deltas, anchors, 32, 2, 10, 0.5f), Error);
  Tensor<float> deltas({4, 2, 2});
  anchors.pop_back();
  CHECK_THROWS_AS(propose(logits, deltas, anchors, 32, 2, 10, 0.5f), Error);
}

TEST_CASE("base-object selection is a strict threshold on non-background confidence") {
  Tensor<double> yb({3, 3});
  // rows: (background, class1, class2)
  yb.at(0, 0) = 0.2;
  yb.at(0, 1) = 0.5;
  yb.at(0, 2) = 0.3;
  yb.at(1, 0) = 0.1;
  yb.at(1, 1) = 0.2;
  yb.at(1, 2) = 0.7;
  yb.at(2, 0) = 0.9;
  yb.at(2, 1) = 0.05;
  yb.at(2, 2) = 0.05;
  Tensor<double> conf;
  std::vector<char> mask;
  select_base_objects(yb, 0.5, conf, mask);
  CHECK(conf[0] == doctest::Approx(0.5));
  CHECK(conf[1] == doctest::Approx(0.7));
  CHECK(conf[2] == doctest::Approx(0.05));
  CHECK(mask[0] == 0);  // exactly at the threshold: strict comparison
  CHECK(mask[1] == 1);
  CHECK(mask[2] == 0);

  CHECK_THROWS_AS(select_base_objects(yb, 0.0, conf, mask), Error);
  CHECK_THROWS_AS(select_base_objects(yb, 1.0, conf, mask), Error);
  Tensor<double> flat({4});
  CHECK_THROWS_AS(select_base_objects(flat, 0.5, conf, mask), Error);
}

TEST_CASE("episode forward produces the documented score shapes") {
  Model<real> model(tiny_config(), 31);
  model.base_trained = true;
  Rng rng(100);
  Tensor<real> target;
  std::vector<Tensor<real>> queries;
  episode_inputs(rng, model.cfg, target, queries);

  EpisodeForward<real> f;
  model.run_episode(target, queries, false, nullptr, f);
  const int k = model.cfg.proposal_count;
  REQUIRE(f.yb.rank() == 2);
  CHECK(f.yb.dim(0) == k);
  CHECK(f.yb.dim(1) == 1 + model.cfg.base_class_count);
  CHECK(f.yn_logits.dim(0) == k);
  CHECK(f.yn_logits.dim(1) == 2);
  CHECK(f.yf_logits.dim(0) == k);
  CHECK(f.yf_logits.dim(1) == 2);
  CHECK(f.deltas.dim(1) == 4);
  CHECK(static_cast<int>(f.proposals.boxes.size()) == k);
  CHECK(f.m.numel() == static_cast<std::size_t>(k));
  CHECK(f.base_conf.numel() == static_cast<std::size_t>(k));
  // Base scores are probabilities over 1+S classes.
  for (int i = 0; i < k; ++i) {
    real row = 0;
    for (int j = 0; j < f.yb.dim(1); ++j) {
      CHECK(f.yb.at(i, j) >= real(0));
      row += f.yb.at(i, j);
    }
    CHECK(row == doctest::Approx(real(1)).epsilon(1e-4));
  }
  // Stock configuration keeps 128 proposals.
  CHECK(ModelConfig().proposal_count == 128);
}

TEST_CASE("suppressed and coarse logits coincide exactly at initialization") {
  Model<real> model(tiny_config(), 7);
  model.base_trained = true;
  Rng rng(55);
  for (int trial = 0; trial < 4; ++trial) {
    Tensor<real> target;
    std::vector<Tensor<real>> queries;
    episode_inputs(rng, model.cfg, target, queries, 1 + trial % 2);
    EpisodeForward<real> f;
    model.run_episode(target, queries, false, nullptr, f);
    for (std::size_t i = 0; i < f.yf_logits.numel(); ++i) CHECK(f.yf_logits[i] == f.yn_logits[i]);
  }
}

TEST_CASE("episode forward rejects bad preconditions") {
  Model<real> model(tiny_config(), 3);
  Rng rng(9);
  Tensor<real> target;
  std::vector<Tensor<real>> queries;
  episode_inputs(rng, model.cfg, target, queries);
  EpisodeForward<real> f;
  try {
    model.run_episode(target, queries, false, nullptr, f);  // base_trained unset
    FAIL("expected a state error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::state);
  }
  model.base_trained = true;
  std::vector<Tensor<real>> none;
  CHECK_THROWS_AS(model.run_episode(target, none, false, nullptr, f), Error);

  ModelConfig bad = tiny_config();
  bad.alpha = 1.5f;
  CHECK_THROWS_AS(Model<real>(bad, 0), Error);
  bad = tiny_config();
  bad.image_size = 50;  // not a multiple of 32
  CHECK_THROWS_AS(Model<real>(bad, 0), Error);
}

TEST_CASE("guidance strategies route the prior to the declared stream") {
  Rng rng(77);
  Tensor<real> target;
  std::vector<Tensor<real>> queries;

  auto run = [&](GuidanceStrategy s, EpisodeForward<real>& f) {
    ModelConfig mc = tiny_config();
    mc.strategy = s;
    Model<real> model(mc, 19);
    model.base_trained = true;
    Rng ep_rng(123);  // same inputs for every strategy
    episode_inputs(ep_rng, mc, target, queries);
    model.run_episode(target, queries, false, nullptr, f);
  };

  EpisodeForward<real> f;
  run(GuidanceStrategy::mult_roi, f);
  // RoI stream carries agg*prior, RPN stream the raw aggregate.
  for (std::size_t i = 0; i < f.agg.numel(); ++i) CHECK(f.rpn_src[i] == f.agg[i]);
  Tensor<real> expect = apply_prior_mult(f.agg, f.prior);
  REQUIRE(f.roi_src.numel() == expect.numel());
  for (std::size_t i = 0; i < expect.numel(); ++i) CHECK(f.roi_src[i] == expect[i]);

  EpisodeForward<real> g;
  run(GuidanceStrategy::mult_rpn, g);
  Tensor<real> expect_rpn = apply_prior_mult(g.agg, g.prior);
  for (std::size_t i = 0; i < expect_rpn.numel(); ++i) CHECK(g.rpn_src[i] == expect_rpn[i]);
  for (std::size_t i = 0; i < g.agg.numel(); ++i) CHECK(g.roi_src[i] == g.agg[i]);

  // cat starts as an identity projection, so the guided stream equals the
  // aggregate at init regardless of the prior.
  EpisodeForward<real> h;
  run(GuidanceStrategy::cat_roi, h);
  for (std::size_t i = 0; i < h.agg.numel(); ++i)
    CHECK(h.roi_src[i] == doctest::Approx(h.agg[i]).epsilon(1e-6));

  // Prior bounds: normalized to [0,1].
  for (std::size_t i = 0; i < f.prior.numel(); ++i) {
    CHECK(f.prior[i] >= real(0));
    CHECK(f.prior[i] <= real(1));
  }
}

TEST_CASE("disabling the components degenerates cleanly") {
  Rng rng(11);
  Tensor<real> target;
  std::vector<Tensor<real>> queries;

  ModelConfig mc = tiny_config();
  mc.bcs_enabled = false;
  Model<real> no_bcs(mc, 4);
  no_bcs.base_trained = true;
  episode_inputs(rng, mc, target, queries);
  EpisodeForward<real> f;
  no_bcs.run_episode(target, queries, true, nullptr, f);
  // Train mode with BcS off: the base branch never runs.
  CHECK_FALSE(f.base_branch);
  for (std::size_t i = 0; i < f.yf_logits.numel(); ++i) CHECK(f.yf_logits[i] == f.yn_logits[i]);

  mc = tiny_config();
  mc.pg_enabled = false;
  Model<real> no_pg(mc, 4);
  no_pg.base_trained = true;
  EpisodeForward<real> g;
  no_pg.run_episode(target, queries, false, nullptr, g);
  for (std::size_t i = 0; i < g.prior.numel(); ++i) CHECK(g.prior[i] == real(1));
}

TEST_CASE("ground-truth injection pins the proposal tail") {
  Model<real> model(tiny_config(), 13);
  model.base_trained = true;
  Rng rng(200);
  Tensor<real> target;
  std::vector<Tensor<real>> queries;
  episode_inputs(rng, model.cfg, target, queries);
  std::vector<Box> inject = {{4.f, 4.f, 20.f, 20.f}, {30.f, 30.f, 50.f, 52.f}};
  EpisodeForward<real> f;
  model.run_episode(target, queries, true, &inject, f);
  const std::size_t k = f.proposals.boxes.size();
  CHECK(f.proposals.boxes[k - 1].x1 == inject[0].x1);
  CHECK(f.proposals.boxes[k - 1].y2 == inject[0].y2);
  CHECK(f.proposals.boxes[k - 2].x1 == inject[1].x1);
  CHECK(f.proposals.objectness[k - 1] == real(1));
}

TEST_CASE("detections carry base-branch diagnostics") {
  Model<real> model(tiny_config(), 23);
  model.base_trained = true;
  Rng rng(300);
  Tensor<real> target;
  std::vector<Tensor<real>> queries;
  episode_inputs(rng, model.cfg, target, queries);
  EpisodeForward<real> f;
  model.run_episode(target, queries, false, nullptr, f);
  auto out = model.regress_and_nms(f);
  for (const auto& det : out.detections) {
    CHECK(det.score > model.cfg.score_threshold);
    CHECK(det.proposal >= 0);
    CHECK(det.proposal < model.cfg.proposal_count);
    CHECK(det.box.x1 >= 0.f);
    CHECK(det.box.x2 <= static_cast<float>(model.cfg.image_size));
    CHECK(det.yb_argmax >= 0);
    CHECK(det.yb_argmax <= model.cfg.base_class_count);
    CHECK(det.base_conf == f.base_conf[static_cast<std::size_t>(det.proposal)]);
    CHECK(det.similarity == f.m[static_cast<std::size_t>(det.proposal)]);
  }
  // Surviving detections are mutually below the NMS overlap.
  for (std::size_t i = 0; i < out.detections.size(); ++i)
    for (std::size_t j = i + 1; j < out.detections.size(); ++j)
      CHECK(iou(out.detections[i].box, out.detections[j].box) <= model.cfg.nms_iou + 1e-6f);
}

TEST_CASE("episode backward matches finite differences") {
  // Proposal boxes are pinned through injection: box selection is not a
  // differentiable path and must be held fixed for the comparison.
  for (GuidanceStrategy strat : {GuidanceStrategy::mult_roi, GuidanceStrategy::cat_rpn}) {
    ModelConfig mc = tiny_config();
    mc.strategy = strat;
    Model<double> model(mc, 41);
    model.base_trained = true;
    model.set_stage_trainable(2);

    Rng rng(500 + static_cast<std::uint64_t>(strat));
    // Generic position: every stage-2 trainable leaves its special init.
    auto params = model.params();
    for (Param<double>* p : params)
      if (p->trainable)
        for (std::size_t i = 0; i < p->value.numel(); ++i) p->value[i] += rng.uniform(-0.02, 0.02);

    Tensor<double> target;
    std::vector<Tensor<double>> queries;
    episode_inputs(rng, mc, target, queries);
    std::vector<Box> inject = pinned_boxes(rng, mc.proposal_count, mc.image_size);

    Tensor<double> wyn = random_tensor<double>(rng, {mc.proposal_count, 2});
    Tensor<double> wyf = random_tensor<double>(rng, {mc.proposal_count, 2});
    Tensor<double> wd = random_tensor<double>(rng, {mc.proposal_count, 4});
    EpisodeForward<double> probe;
    model.run_episode(target, queries, true, &inject, probe);
    Tensor<double> wobj = random_tensor<double>(rng, probe.rpn_obj.shape());
    Tensor<double> wreg = random_tensor<double>(rng, probe.rpn_reg.shape());

    auto loss = [&]() {
      EpisodeForward<double> f;
      model.run_episode(target, queries, true, &inject, f);
      double L = 0;
      for (std::size_t i = 0; i < wyn.numel(); ++i) L += wyn[i] * f.yn_logits[i];
      for (std::size_t i = 0; i < wyf.numel(); ++i) L += wyf[i] * f.yf_logits[i];
      for (std::size_t i = 0; i < wd.numel(); ++i) L += wd[i] * f.deltas[i];
      for (std::size_t i = 0; i < wobj.numel(); ++i) L += wobj[i] * f.rpn_obj[i];
      for (std::size_t i = 0; i < wreg.numel(); ++i) L += wreg[i] * f.rpn_reg[i];
      return L;
    };

    zero_grads(params);
    EpisodeForward<double> f;
    model.run_episode(target, queries, true, &inject, f);
    model.run_backward(f, wyn, wyf, wd, wobj, wreg);

    std::vector<std::string> focus = {"adj.w",       "adj.b",          "psi_b.w",
                                      "psi_f.w",     "novel_cls.w",    "novel_cls.b",
                                      "novel_fc1.b", "novel_reg.w",    "nonlocal.theta.w",
                                      "nonlocal.out.w", "rpn_novel.obj.b", "s4_novel.b"};
    if (strat == GuidanceStrategy::cat_rpn) focus.push_back("guide_proj.w");
    int checked = 0;
    for (Param<double>* p : params) {
      if (std::find(focus.begin(), focus.end(), p->name) == focus.end()) continue;
      ++checked;
      const int samples = p->value.numel() <= 8 ? static_cast<int>(p->value.numel()) : 8;
      for (int s = 0; s < samples; ++s) {
        const std::size_t i = p->value.numel() <= 8 ? static_cast<std::size_t>(s)
                                                    : rng.below(p->value.numel());
        const double save = p->value[i];
        const double eps = 1e-5;
        p->value[i] = save + eps;
        const double up = loss();
        p->value[i] = save - eps;
        const double dn = loss();
        p->value[i] = save;
        const double fd = (up - dn) / (2 * eps);
        const double denom =
            std::max({std::abs(fd), std::abs(p->grad[i]), 1e-6});
        const double err = std::abs(fd - p->grad[i]) / denom;
        INFO("param " << p->name << " entry " << i);
        CHECK(err < 1e-4);
      }
    }
    CHECK(checked == static_cast<int>(focus.size()));
  }
}

TEST_CASE("stage-2 freeze covers exactly the base predictor and trunk") {
  Model<real> model(tiny_config(), 2);
  model.set_stage_trainable(2);
  for (Param<real>* p : model.params()) {
    const bool frozen = !p->trainable;
    const bool base_side = p->name.rfind("trunk.", 0) == 0 || p->name.rfind("s4_base.", 0) == 0 ||
                           p->name.rfind("eb.", 0) == 0 || p->name.rfind("rpn_base.", 0) == 0 ||
                           p->name.rfind("base_cls.", 0) == 0 || p->name.rfind("base_reg.", 0) == 0;
    CHECK(frozen == base_side);
  }
  model.set_stage_trainable(1);
  for (Param<real>* p : model.params()) {
    const bool base_side = p->name.rfind("trunk.", 0) == 0 || p->name.rfind("s4_base.", 0) == 0 ||
                           p->name.rfind("eb.", 0) == 0 || p->name.rfind("rpn_base.", 0) == 0 ||
                           p->name.rfind("base_cls.", 0) == 0 || p->name.rfind("base_reg.", 0) == 0;
    CHECK(p->trainable == base_side);
  }
}

TEST_CASE("novel branch warm start copies the base weights") {
  Model<real> model(tiny_config(), 8);
  Rng rng(1);
  for (Param<real>* p : model.params())
    for (std::size_t i = 0; i < p->value.numel(); ++i) p->value[i] = rng.uniform(-1.0, 1.0);
  model.copy_base_to_novel();
  auto params = model.params();
  auto value_of = [&](const std::string& name) -> Tensor<real>* {
    for (Param<real>* p : params)
      if (p->name == name) return &p->value;
    return nullptr;
  };
  for (auto [a, b] : {std::pair<const char*, const char*>{"s4_base.w", "s4_novel.w"},
                      {"rpn_base.obj.w", "rpn_novel.obj.w"},
                      {"rpn_base.reg.b", "rpn_novel.reg.b"},
                      {"eb.w", "en.w"}}) {
    Tensor<real>* src = value_of(a);
    Tensor<real>* dst = value_of(b);
    REQUIRE(src != nullptr);
    REQUIRE(dst != nullptr);
    REQUIRE(src->numel() == dst->numel());
    for (std::size_t i = 0; i < src->numel(); ++i) CHECK((*src)[i] == (*dst)[i]);
  }
}
