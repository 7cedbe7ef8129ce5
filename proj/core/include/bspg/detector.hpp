/* Copyright 2026 the bspg authors.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License without WARRANTIES OR CONDITIONS OF ANY
 * KIND, either express or implied. See the License for the specific
 * language governing permissions and limitations under the License. */

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "bspg/backbone.hpp"
#include "bspg/boxes.hpp"
#include "bspg/correlation.hpp"
#include "bspg/errors.hpp"
#include "bspg/nn.hpp"
#include "bspg/prior_guidance.hpp"
#include "bspg/tensor.hpp"

namespace bspg {

// Stage widths are fixed; the four stride-2 stages mimic res1-4 and the RoI
// extractors play res5.
constexpr int kStageChannels[4] = {32, 64, 128, 256};
constexpr int kFeatureChannels = 256;
constexpr int kMidStride = 16;

struct ModelConfig {
  int image_size = 128;
  int query_size = 64;
  int base_class_count = 12;  // S
  int proposal_count = 128;   // K
  int roi_size = 7;
  int novel_hidden = 256;
  int nonlocal_embed = 128;
  std::vector<float> anchor_scales = {16.f, 32.f, 48.f};
  std::vector<float> anchor_ratios = {0.5f, 1.f, 2.f};
  float rpn_nms_iou = 0.7f;
  int train_pre_nms = 256;
  int eval_pre_nms = 300;
  float alpha = 0.7f;  // base-object confidence threshold
  GuidanceStrategy strategy = GuidanceStrategy::mult_roi;
  bool bcs_enabled = true;
  bool pg_enabled = true;
  float score_threshold = 0.05f;
  float nms_iou = 0.5f;
};

template <typename S>
struct ProposalSet {
  std::vector<Box> boxes;
  std::vector<S> objectness;  // sigmoid scores, aligned with boxes
  bool padded = false;        // fewer than K NMS survivors, tail duplicated
};

template <typename S>
struct Detection {
  Box box;
  S score = S(0);      // final foreground probability
  S yn_fg = S(0);      // coarse foreground probability
  S base_conf = S(0);  // max non-background base-class probability
  bool base_flag = false;
  S similarity = S(0);  // M
  int yb_argmax = 0;    // 0 = background, else 1 + base-class index
  int proposal = -1;
};

template <typename S>
struct DetectionOutcome {
  std::vector<Detection<S>> detections;
  bool proposal_padding = false;
};

// Everything one episode forward produced, including the layer caches the
// matching backward consumes. Frozen-path tensors carry no caches.
template <typename S>
struct EpisodeForward {
  bool train_mode = false;
  bool base_branch = false;  // base predictor ran (needed for BcS/diagnostics)

  // Frozen intermediates.
  Tensor<S> t3, q3;          // shared trunk outputs
  Tensor<S> fb, qb;          // base stride-16 maps
  Tensor<S> phi_t, phi_q;    // high-level maps (stride 32)
  Tensor<S> pb;              // (K,C,h,w) base RoI features
  Tensor<S> qb_roi;          // (C,h,w)
  Tensor<S> yb;              // (K,1+S) probabilities
  Tensor<S> base_conf;       // (K)
  std::vector<char> b_mask;  // (K)
  Tensor<S> m;               // (K) similarity

  // Trainable path.
  typename ConvRelu<S>::Cache s4n_t_c, s4n_q_c;
  Tensor<S> fn, qn;
  typename NonLocalBlock<S>::Cache agg_c;
  Tensor<S> agg;    // aggregated target feature
  Tensor<S> prior;  // normalized prior, spatial shape of agg
  typename Conv2d<S>::Cache guide_rpn_c, guide_roi_c;
  Tensor<S> rpn_src, roi_src;
  typename RpnHead<S>::Cache rpn_c;
  Tensor<S> rpn_obj, rpn_reg;
  std::vector<Box> anchors;
  ProposalSet<S> proposals;
  typename RoiExtractor<S>::Cache en_p_c, en_q_c;
  Tensor<S> pn;      // (K,C,h,w)
  Tensor<S> qn_roi;  // (C,h,w)

  Tensor<S> pair_feats;  // (K, 3C)
  typename Linear<S>::Cache fc1_c, cls_c, reg_c;
  Tensor<S> hidden;     // (K, hidden), post-ReLU
  Tensor<S> yn_logits;  // (K,2)
  Tensor<S> deltas;     // (K,4)

  typename Linear<S>::Cache adj_c, psib_c, psif_c;
  Tensor<S> adj_in;   // (K,2): (base_conf * B, M)
  Tensor<S> adj_out;  // (K,1)
  Tensor<S> yf_logits;  // (K,2)
};

// Top-K proposal selection: rank anchors by objectness (stable on ties),
// decode the highest pre_nms_top, clip, NMS, keep K. If fewer survive, the
// last survivor is duplicated and the set is flagged as padded.
template <typename S>
ProposalSet<S> propose(const Tensor<S>& obj_logits, const Tensor<S>& reg_deltas,
                       const std::vector<Box>& anchors, int image_size, int k, int pre_nms_top,
                       float nms_iou) {
  require(obj_logits.rank() == 3 && reg_deltas.rank() == 3, ErrorKind::shape,
          "propose expects (A,H,W) logits and (4A,H,W) deltas");
  const int a = obj_logits.dim(0);
  const int h = obj_logits.dim(1);
  const int w = obj_logits.dim(2);
  require(reg_deltas.dim(0) == 4 * a, ErrorKind::shape, "propose: delta channel mismatch");
  require(anchors.size() == static_cast<std::size_t>(a) * h * w, ErrorKind::shape,
          "propose: anchor count mismatch");
  require(k > 0, ErrorKind::config, "propose: K must be positive");

  // Anchor i = (y, x, a) in row-major cell order, matching make_anchors.
  const std::size_t n = anchors.size();
  std::vector<int> order(n);
  std::vector<S> logit(n);
  for (std::size_t i = 0; i < n; ++i) {
    order[i] = static_cast<int>(i);
    const int cell = static_cast<int>(i) / a;
    const int ai = static_cast<int>(i) % a;
    logit[i] = obj_logits[static_cast<std::size_t>(ai) * h * w + cell];
  }
  std::stable_sort(order.begin(), order.end(),
                   [&logit](int x, int y) { return logit[static_cast<std::size_t>(x)] > logit[static_cast<std::size_t>(y)]; });
  if (static_cast<int>(order.size()) > pre_nms_top) order.resize(static_cast<std::size_t>(pre_nms_top));

  std::vector<Box> cand;
  std::vector<float> cand_score;
  std::vector<S> cand_sig;
  cand.reserve(order.size());
  for (int idx : order) {
    const int cell = idx / a;
    const int ai = idx % a;
    std::array<float, 4> d;
    for (int j = 0; j < 4; ++j)
      d[static_cast<std::size_t>(j)] =
          static_cast<float>(reg_deltas[static_cast<std::size_t>(4 * ai + j) * h * w + cell]);
    Box b = clip_box(decode_delta(anchors[static_cast<std::size_t>(idx)], d),
                     static_cast<float>(image_size), static_cast<float>(image_size));
    cand.push_back(b);
    cand_score.push_back(static_cast<float>(logit[static_cast<std::size_t>(idx)]));
    cand_sig.push_back(sigmoid(logit[static_cast<std::size_t>(idx)]));
  }
  // Candidates are already sorted; scores passed through keep nms stable.
  std::vector<int> kept = nms(cand, cand_score, nms_iou);

  ProposalSet<S> set;
  for (int idx : kept) {
    if (static_cast<int>(set.boxes.size()) == k) break;
    set.boxes.push_back(cand[static_cast<std::size_t>(idx)]);
    set.objectness.push_back(cand_sig[static_cast<std::size_t>(idx)]);
  }
  require(!set.boxes.empty(), ErrorKind::state, "propose: no proposals survived");
  while (static_cast<int>(set.boxes.size()) < k) {
    set.boxes.push_back(set.boxes.back());
    set.objectness.push_back(set.objectness.back());
    set.padded = true;
  }
  return set;
}

// B_i = (max non-background base probability) > alpha, strict.
template <typename S>
void select_base_objects(const Tensor<S>& yb, S alpha, Tensor<S>& base_conf,
                         std::vector<char>& mask) {
  require(yb.rank() == 2 && yb.dim(1) >= 2, ErrorKind::shape,
          "select_base_objects expects (K,1+S) scores");
  require(alpha > S(0) && alpha < S(1), ErrorKind::config,
          "base-object threshold must lie in (0,1)");
  const int k = yb.dim(0);
  base_conf = Tensor<S>({k});
  mask.assign(static_cast<std::size_t>(k), 0);
  for (int i = 0; i < k; ++i) {
    S best = yb.at(i, 1);
    for (int j = 2; j < yb.dim(1); ++j) best = std::max(best, yb.at(i, j));
    base_conf[static_cast<std::size_t>(i)] = best;
    mask[static_cast<std::size_t>(i)] = best > alpha ? 1 : 0;
  }
}

template <typename S>
class Model {
 public:
  ModelConfig cfg;
  bool base_trained = false;

  Trunk<S> trunk;
  ConvRelu<S> s4_base, s4_novel;
  RoiExtractor<S> eb, en;
  RpnHead<S> rpn_base, rpn_novel;
  Linear<S> base_cls;  // GAP(E_B RoI) -> 1+S
  Linear<S> base_reg;  // stage-1 class-agnostic deltas
  NonLocalBlock<S> nonlocal;
  Linear<S> novel_fc1, novel_cls, novel_reg;
  Linear<S> adj, psi_b, psi_f;  // BcS head
  Conv2d<S> guide_proj;         // (C+1)->C, used by cat strategies

  Model(const ModelConfig& config, std::uint64_t init_seed) : cfg(config) {
    validate_config();
    Rng rng(stream_seed(init_seed, 0xb5b6u));
    const int c = kFeatureChannels;
    const int anchors = static_cast<int>(cfg.anchor_scales.size() * cfg.anchor_ratios.size());
    trunk = Trunk<S>(3, kStageChannels[0], kStageChannels[1], kStageChannels[2], rng);
    s4_base = ConvRelu<S>(kStageChannels[2], c, 2, rng);
    s4_novel = ConvRelu<S>(kStageChannels[2], c, 2, rng);
    eb = RoiExtractor<S>(c, cfg.roi_size, S(1) / S(kMidStride), rng);
    en = RoiExtractor<S>(c, cfg.roi_size, S(1) / S(kMidStride), rng);
    rpn_base = RpnHead<S>(c, anchors, rng);
    rpn_novel = RpnHead<S>(c, anchors, rng);
    base_cls = Linear<S>(c, 1 + cfg.base_class_count, rng, 0.01);
    base_reg = Linear<S>(c, 4, rng, 0.001);
    nonlocal = NonLocalBlock<S>(c, cfg.nonlocal_embed, rng);
    novel_fc1 = Linear<S>(3 * c, cfg.novel_hidden, rng, std::sqrt(2.0 / (3 * c)));
    novel_cls = Linear<S>(cfg.novel_hidden, 2, rng, 0.01);
    novel_reg = Linear<S>(3 * c, 4, rng, 0.001);

    // Suppression starts as an exact passthrough: the adjustment net is
    // zeroed so its output is exactly 0, and each Psi is identity on its own
    // coarse logit. The Psi adjustment weights must NOT start at zero: with
    // both the adjustment output and its mixing weight zeroed neither ever
    // receives gradient and the head is stuck at the saddle. +/-1 keeps the
    // passthrough exact (the adjustment term is 0 at step 0) while letting
    // gradient reach the adjustment net; signs encode "base-like raises the
    // background logit and lowers the foreground one".
    adj = Linear<S>(2, 1, rng, 0.0);
    psi_b = Linear<S>(2, 1, rng, 0.0);
    psi_f = Linear<S>(2, 1, rng, 0.0);
    psi_b.w.value.at(0, 0) = S(1);
    psi_f.w.value.at(0, 0) = S(1);
    psi_b.w.value.at(0, 1) = S(1);
    psi_f.w.value.at(0, 1) = S(-1);

    // cat guidance starts as an identity on the feature channels.
    guide_proj = Conv2d<S>(c + 1, c, 1, 1, 0, rng);
    guide_proj.w.value.zero();
    for (int i = 0; i < c; ++i) guide_proj.w.value.at(i, i, 0, 0) = S(1);
    guide_proj.b.value.zero();

    name_params();
  }

  void validate_config() const {
    require(cfg.proposal_count > 0, ErrorKind::config, "proposal_count must be positive");
    require(cfg.alpha > 0.f && cfg.alpha < 1.f, ErrorKind::config,
            "base-object threshold must lie in (0,1)");
    require(!cfg.anchor_scales.empty() && !cfg.anchor_ratios.empty(), ErrorKind::config,
            "anchor scales/ratios must be non-empty");
    require(cfg.image_size % (2 * kMidStride) == 0 && cfg.query_size % (2 * kMidStride) == 0,
            ErrorKind::config, "image and query sizes must be multiples of 32");
    require(cfg.roi_size >= 2, ErrorKind::config, "roi_size must be >= 2");
  }

  std::vector<Param<S>*> params() {
    std::vector<Param<S>*> out;
    trunk.collect_params("trunk", out);
    s4_base.collect_params("s4_base", out);
    s4_novel.collect_params("s4_novel", out);
    eb.collect_params("eb", out);
    en.collect_params("en", out);
    rpn_base.collect_params("rpn_base", out);
    rpn_novel.collect_params("rpn_novel", out);
    collect_linear("base_cls", base_cls, out);
    collect_linear("base_reg", base_reg, out);
    nonlocal.collect_params(out);
    name_nonlocal();
    collect_linear("novel_fc1", novel_fc1, out);
    collect_linear("novel_cls", novel_cls, out);
    collect_linear("novel_reg", novel_reg, out);
    collect_linear("adj", adj, out);
    collect_linear("psi_b", psi_b, out);
    collect_linear("psi_f", psi_f, out);
    guide_proj.w.name = "guide_proj.w";
    guide_proj.b.name = "guide_proj.b";
    out.push_back(&guide_proj.w);
    out.push_back(&guide_proj.b);
    return out;
  }

  // The frozen set in stage 2: everything the base predictor owns plus the
  // shared early trunk.
  static bool frozen_in_stage2(const std::string& name) {
    for (const char* prefix : {"trunk.", "s4_base.", "eb.", "rpn_base.", "base_cls.", "base_reg."})
      if (name.rfind(prefix, 0) == 0) return true;
    return false;
  }

  void set_stage_trainable(int stage) {
    for (Param<S>* p : params())
      p->trainable = stage == 1 ? !is_novel_only(p->name) : !frozen_in_stage2(p->name);
  }

  // Stage 1 never touches the novel branch.
  static bool is_novel_only(const std::string& name) {
    return !frozen_in_stage2(name);
  }

  // Novel branch starts from the base weights (backbone-style warm start).
  void copy_base_to_novel() {
    copy_values(s4_base.conv, s4_novel.conv);
    copy_values(eb.stage.conv, en.stage.conv);
    copy_values(rpn_base.trunk.conv, rpn_novel.trunk.conv);
    copy_values(rpn_base.obj, rpn_novel.obj);
    copy_values(rpn_base.reg, rpn_novel.reg);
  }

  // --- individual pipeline pieces (documented operations) ---

  Tensor<S> extract_mid(const Tensor<S>& image, bool novel_branch = true) const {
    Tensor<S> t = trunk.forward(image);
    return novel_branch ? s4_novel.forward(t) : s4_base.forward(t);
  }

  Tensor<S> extract_high(const Tensor<S>& image) const {
    require(base_trained, ErrorKind::state,
            "high-level extractor has no trained weights; run stage-1 training first");
    Tensor<S> t = trunk.forward(image);
    Tensor<S> f = s4_base.forward(t);
    return eb.stage.forward(f);
  }

  // Y_B for a batch of base RoI features (K,C,h,w).
  Tensor<S> classify_base(const Tensor<S>& pb_batch) const {
    Tensor<S> pooled = global_avg_pool(pb_batch);  // (K,C)
    return softmax_rows(base_cls.forward(pooled));
  }

  Box full_query_box() const {
    return {0.f, 0.f, static_cast<float>(cfg.query_size), static_cast<float>(cfg.query_size)};
  }

  // Forward pass over one episode. Caches for the trainable path are always
  // populated; run_backward consumes them. `inject_boxes`, when given,
  // replaces the tail of the proposal list (training-time ground-truth
  // injection so positives exist early in training).
  void run_episode(const Tensor<S>& target, const std::vector<Tensor<S>>& queries,
                   bool train_mode, const std::vector<Box>* inject_boxes,
                   EpisodeForward<S>& f) const {
    require(base_trained, ErrorKind::state,
            "episode forward requires stage-1 weights; run stage-1 training first");
    require(!queries.empty(), ErrorKind::input, "episode has no query");
    f.train_mode = train_mode;

    // Frozen paths run without caches.
    f.t3 = trunk.forward(target);
    f.fb = s4_base.forward(f.t3);
    f.phi_t = eb.stage.forward(f.fb);

    std::vector<Tensor<S>> q3s, qns, qbs, phis;
    for (const Tensor<S>& q : queries) {
      Tensor<S> q3 = trunk.forward(q);
      qbs.push_back(s4_base.forward(q3));
      phis.push_back(eb.stage.forward(qbs.back()));
      q3s.push_back(std::move(q3));
    }
    f.q3 = average_queries(q3s);
    f.qb = average_queries(qbs);
    f.phi_q = average_queries(phis);

    // Trainable path.
    f.fn = s4_novel.forward(f.t3, &f.s4n_t_c);
    f.qn = s4_novel.forward(f.q3, &f.s4n_q_c);
    f.agg = nonlocal.forward(f.fn, f.qn, &f.agg_c);

    if (cfg.pg_enabled) {
      Tensor<S> rel = relation_map(f.phi_t, f.phi_q);
      Tensor<S> raw = prior_from_relation(rel);
      f.prior = normalize_and_resize(raw, f.phi_t.dim(1), f.phi_t.dim(2), f.agg.dim(1),
                                     f.agg.dim(2));
    } else {
      f.prior = Tensor<S>::ones({f.agg.dim(1), f.agg.dim(2)});
    }
    const bool at_rpn = guidance_at_rpn(cfg.strategy);
    Tensor<S> guided;
    if (guidance_is_mult(cfg.strategy)) {
      guided = apply_prior_mult(f.agg, f.prior);
    } else {
      Tensor<S> cat = concat_prior_channel(f.agg, f.prior);
      guided = guide_proj.forward(cat, at_rpn ? &f.guide_rpn_c : &f.guide_roi_c);
    }
    f.rpn_src = at_rpn ? guided : f.agg;
    f.roi_src = at_rpn ? f.agg : guided;

    auto rpn_out = rpn_novel.forward(f.rpn_src, &f.rpn_c);
    f.rpn_obj = std::move(rpn_out.first);
    f.rpn_reg = std::move(rpn_out.second);
    f.anchors = make_anchors(f.rpn_obj.dim(1), f.rpn_obj.dim(2), kMidStride, cfg.anchor_scales,
                             cfg.anchor_ratios);
    f.proposals = propose(f.rpn_obj, f.rpn_reg, f.anchors, cfg.image_size, cfg.proposal_count,
                          train_mode ? cfg.train_pre_nms : cfg.eval_pre_nms, cfg.rpn_nms_iou);
    if (inject_boxes && !inject_boxes->empty()) {
      const std::size_t n = std::min(inject_boxes->size(), f.proposals.boxes.size());
      for (std::size_t i = 0; i < n; ++i) {
        f.proposals.boxes[f.proposals.boxes.size() - 1 - i] = (*inject_boxes)[i];
        f.proposals.objectness[f.proposals.boxes.size() - 1 - i] = S(1);
      }
    }

    f.pn = en.forward(f.roi_src, f.proposals.boxes, &f.en_p_c);
    f.qn_roi = en.forward_one(f.qn, full_query_box(), &f.en_q_c);

    // Base predictor branch: needed whenever suppression runs, and for
    // diagnostics at evaluation time.
    f.base_branch = cfg.bcs_enabled || !train_mode;
    if (f.base_branch) {
      f.pb = eb.forward(f.fb, f.proposals.boxes);
      f.qb_roi = eb.forward_one(f.qb, full_query_box());
      f.yb = classify_base(f.pb);
      select_base_objects(f.yb, static_cast<S>(cfg.alpha), f.base_conf, f.b_mask);
      f.m = similarity_map(f.pb, f.qb_roi);
    }

    // Novel head over aggregated pair features.
    const int k = cfg.proposal_count;
    const int c = kFeatureChannels;
    f.pair_feats = Tensor<S>({k, 3 * c});
    for (int i = 0; i < k; ++i) {
      Tensor<S> pi({c, f.pn.dim(2), f.pn.dim(3)});
      std::copy(f.pn.data() + static_cast<std::size_t>(i) * pi.numel(),
                f.pn.data() + static_cast<std::size_t>(i + 1) * pi.numel(), pi.data());
      AggregatedPair<S> pair = aggregate_pair(pi, f.qn_roi);
      require(pair.corr.numel() == static_cast<std::size_t>(c), ErrorKind::shape,
              "aggregate_pair: expected (C,1,1) correlation");
      S* row = f.pair_feats.data() + static_cast<std::size_t>(i) * 3 * c;
      std::copy(pair.concat.data(), pair.concat.data() + 2 * c, row);
      std::copy(pair.corr.data(), pair.corr.data() + c, row + 2 * c);
    }
    f.hidden = relu(novel_fc1.forward(f.pair_feats, &f.fc1_c));
    f.yn_logits = novel_cls.forward(f.hidden, &f.cls_c);
    f.deltas = novel_reg.forward(f.pair_feats, &f.reg_c);

    // Suppression (Y_F); bypassed when BcS is disabled.
    if (cfg.bcs_enabled) {
      f.adj_in = Tensor<S>({k, 2});
      for (int i = 0; i < k; ++i) {
        f.adj_in.at(i, 0) =
            f.b_mask[static_cast<std::size_t>(i)] ? f.base_conf[static_cast<std::size_t>(i)] : S(0);
        f.adj_in.at(i, 1) = f.m[static_cast<std::size_t>(i)];
      }
      f.adj_out = adj.forward(f.adj_in, &f.adj_c);
      Tensor<S> psib_in({k, 2});
      Tensor<S> psif_in({k, 2});
      for (int i = 0; i < k; ++i) {
        psib_in.at(i, 0) = f.yn_logits.at(i, 0);
        psib_in.at(i, 1) = f.adj_out.at(i, 0);
        psif_in.at(i, 0) = f.yn_logits.at(i, 1);
        psif_in.at(i, 1) = f.adj_out.at(i, 0);
      }
      Tensor<S> out_b = psi_b.forward(psib_in, &f.psib_c);
      Tensor<S> out_f = psi_f.forward(psif_in, &f.psif_c);
      f.yf_logits = Tensor<S>({k, 2});
      for (int i = 0; i < k; ++i) {
        f.yf_logits.at(i, 0) = out_b.at(i, 0);
        f.yf_logits.at(i, 1) = out_f.at(i, 0);
      }
    } else {
      f.yf_logits = f.yn_logits;
    }
  }

  // Backward for one episode given gradients at the output logits/deltas.
  // Accumulates parameter gradients for the stage-2 trainable set and stops
  // below the last backbone stage.
  void run_backward(EpisodeForward<S>& f, const Tensor<S>& dyn_logits,
                    const Tensor<S>& dyf_logits, const Tensor<S>& ddeltas,
                    const Tensor<S>& drpn_obj, const Tensor<S>& drpn_reg) {
    const int k = cfg.proposal_count;
    const int c = kFeatureChannels;

    Tensor<S> dyn = dyn_logits;
    if (cfg.bcs_enabled) {
      Tensor<S> dout_b({k, 1});
      Tensor<S> dout_f({k, 1});
      for (int i = 0; i < k; ++i) {
        dout_b.at(i, 0) = dyf_logits.at(i, 0);
        dout_f.at(i, 0) = dyf_logits.at(i, 1);
      }
      Tensor<S> dpsib_in = psi_b.backward(f.psib_c, dout_b);
      Tensor<S> dpsif_in = psi_f.backward(f.psif_c, dout_f);
      Tensor<S> dadj_out({k, 1});
      for (int i = 0; i < k; ++i) {
        dyn.at(i, 0) += dpsib_in.at(i, 0);
        dyn.at(i, 1) += dpsif_in.at(i, 0);
        dadj_out.at(i, 0) = dpsib_in.at(i, 1) + dpsif_in.at(i, 1);
      }
      // adj inputs (base confidence, similarity) come from the frozen base
      // branch; their gradient is discarded.
      adj.backward(f.adj_c, dadj_out);
    } else {
      dyn += dyf_logits;
    }

    Tensor<S> dhidden = novel_cls.backward(f.cls_c, dyn);
    Tensor<S> dpair = novel_fc1.backward(f.fc1_c, relu_backward(dhidden, f.hidden));
    dpair += novel_reg.backward(f.reg_c, ddeltas);

    // Split pair-feature gradients back into P_N / Q_N.
    Tensor<S> dpn(f.pn.shape());
    Tensor<S> dqn_roi(f.qn_roi.shape());
    for (int i = 0; i < k; ++i) {
      const S* row = dpair.data() + static_cast<std::size_t>(i) * 3 * c;
      Tensor<S> dconcat({2 * c});
      std::copy(row, row + 2 * c, dconcat.data());
      Tensor<S> dcorr({c, 1, 1});
      std::copy(row + 2 * c, row + 3 * c, dcorr.data());
      Tensor<S> pi({c, f.pn.dim(2), f.pn.dim(3)});
      std::copy(f.pn.data() + static_cast<std::size_t>(i) * pi.numel(),
                f.pn.data() + static_cast<std::size_t>(i + 1) * pi.numel(), pi.data());
      auto grads = aggregate_pair_backward(pi, f.qn_roi, dconcat, dcorr);
      std::copy(grads.first.data(), grads.first.data() + grads.first.numel(),
                dpn.data() + static_cast<std::size_t>(i) * pi.numel());
      dqn_roi += grads.second;
    }

    Tensor<S> droi_src = en.backward(f.en_p_c, dpn);
    Tensor<S> dqn = en.backward(f.en_q_c, dqn_roi);

    Tensor<S> drpn_src = rpn_novel.backward(f.rpn_c, drpn_obj, drpn_reg);

    // Undo the guidance application on whichever stream carried it.
    const bool at_rpn = guidance_at_rpn(cfg.strategy);
    const Tensor<S>& dguided = at_rpn ? drpn_src : droi_src;
    const Tensor<S>& dplain = at_rpn ? droi_src : drpn_src;
    Tensor<S> dagg;
    if (guidance_is_mult(cfg.strategy)) {
      dagg = apply_prior_mult_backward(dguided, f.prior);
    } else {
      Tensor<S> dcat =
          guide_proj.backward(at_rpn ? f.guide_rpn_c : f.guide_roi_c, dguided);
      dagg = strip_prior_channel(dcat);
    }
    dagg += dplain;

    auto dmaps = nonlocal.backward(f.agg_c, dagg);
    dmaps.second += dqn;
    s4_novel.backward(f.s4n_t_c, dmaps.first);
    s4_novel.backward(f.s4n_q_c, dmaps.second);
  }

  // Decode novel-head deltas, threshold, class-agnostic NMS; diagnostics
  // ride along per retained proposal.
  DetectionOutcome<S> regress_and_nms(const EpisodeForward<S>& f) const {
    const int k = cfg.proposal_count;
    Tensor<S> yf = softmax_rows(f.yf_logits);
    Tensor<S> yn = softmax_rows(f.yn_logits);
    std::vector<Box> boxes;
    std::vector<float> scores;
    std::vector<int> src;
    for (int i = 0; i < k; ++i) {
      const S s = yf.at(i, 1);
      if (s <= static_cast<S>(cfg.score_threshold)) continue;
      std::array<float, 4> d = {static_cast<float>(f.deltas.at(i, 0)),
                                static_cast<float>(f.deltas.at(i, 1)),
                                static_cast<float>(f.deltas.at(i, 2)),
                                static_cast<float>(f.deltas.at(i, 3))};
      boxes.push_back(clip_box(decode_delta(f.proposals.boxes[static_cast<std::size_t>(i)], d),
                               static_cast<float>(cfg.image_size),
                               static_cast<float>(cfg.image_size)));
      scores.push_back(static_cast<float>(s));
      src.push_back(i);
    }
    DetectionOutcome<S> out;
    out.proposal_padding = f.proposals.padded;
    for (int idx : nms(boxes, scores, cfg.nms_iou)) {
      Detection<S> det;
      const int i = src[static_cast<std::size_t>(idx)];
      det.box = boxes[static_cast<std::size_t>(idx)];
      det.score = static_cast<S>(scores[static_cast<std::size_t>(idx)]);
      det.yn_fg = yn.at(i, 1);
      det.proposal = i;
      if (f.base_branch) {
        det.base_conf = f.base_conf[static_cast<std::size_t>(i)];
        det.base_flag = f.b_mask[static_cast<std::size_t>(i)] != 0;
        det.similarity = f.m[static_cast<std::size_t>(i)];
        int arg = 0;
        S best = f.yb.at(i, 0);
        for (int j = 1; j < f.yb.dim(1); ++j)
          if (f.yb.at(i, j) > best) {
            best = f.yb.at(i, j);
            arg = j;
          }
        det.yb_argmax = arg;
      }
      out.detections.push_back(det);
    }
    return out;
  }

 private:
  void collect_linear(const std::string& prefix, Linear<S>& lin, std::vector<Param<S>*>& into) {
    lin.w.name = prefix + ".w";
    lin.b.name = prefix + ".b";
    into.push_back(&lin.w);
    into.push_back(&lin.b);
  }

  void name_nonlocal() {
    nonlocal.theta.w.name = "nonlocal.theta.w";
    nonlocal.theta.b.name = "nonlocal.theta.b";
    nonlocal.phi.w.name = "nonlocal.phi.w";
    nonlocal.phi.b.name = "nonlocal.phi.b";
    nonlocal.g.w.name = "nonlocal.g.w";
    nonlocal.g.b.name = "nonlocal.g.b";
    nonlocal.out.w.name = "nonlocal.out.w";
    nonlocal.out.b.name = "nonlocal.out.b";
  }

  void name_params() { (void)params(); }

  static void copy_values(const Conv2d<S>& from, Conv2d<S>& to) {
    to.w.value = from.w.value;
    to.b.value = from.b.value;
  }
};

}  // namespace bspg
