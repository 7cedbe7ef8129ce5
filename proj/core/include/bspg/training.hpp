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

#include <algorithm>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "bspg/boxes.hpp"
#include "bspg/dataset.hpp"
#include "bspg/detector.hpp"
#include "bspg/errors.hpp"
#include "bspg/nn.hpp"
#include "bspg/rng.hpp"
#include "bspg/tensor.hpp"

namespace bspg {

struct TrainConfig {
  // Stage 1 (base detector).
  int epochs = 10;
  int batch = 4;
  float lr = 0.005f;
  float lr_decay = 0.1f;
  int lr_step = 4;  // epochs between decays
  float momentum = 0.9f;

  // Stage 2 (episodic fine-tuning, base branch frozen).
  int novel_steps = 500;
  int novel_batch = 4;
  float novel_lr = 0.002f;
  float lambda1 = 0.5f;
  float lambda2 = 0.5f;
  bool init_novel_from_base = true;
  bool cross_image_queries = false;

  // Label assignment.
  float fg_iou = 0.5f;
  float rpn_pos_iou = 0.7f;
  float rpn_neg_iou = 0.3f;
  int rpn_batch = 128;
  int rpn_max_pos = 64;
  int roi_batch = 64;
  float roi_fg_fraction = 0.25f;

  std::uint64_t seed = 0;
};

// One optimizer step of the training log. The invariant
//   total = rpn + lambda1 * novel_ce + lambda2 * final_ce + reg
// holds with the lambdas recorded alongside the log; every term is >= 0.
struct LossRecord {
  double rpn = 0.0;
  double novel_ce = 0.0;
  double final_ce = 0.0;
  double reg = 0.0;
  double total = 0.0;

  void accumulate(const LossRecord& other, double weight) {
    rpn += weight * other.rpn;
    novel_ce += weight * other.novel_ce;
    final_ce += weight * other.final_ce;
    reg += weight * other.reg;
    total += weight * other.total;
  }
};

// --- label assignment ---

template <typename S>
struct RpnSample {
  std::vector<int> pos, neg;  // anchor indices
  std::vector<int> pos_gt;    // matched ground-truth per positive
  Tensor<S> pos_deltas;       // (#pos, 4)
};

// Positive: IoU >= pos_iou with some box, plus the best anchor of every box.
// Negative: best IoU < neg_iou. Sampled to at most `batch` anchors with at
// most `max_pos` positives.
template <typename S>
RpnSample<S> sample_rpn_anchors(const std::vector<Box>& anchors, const std::vector<Box>& gts,
                                int batch, int max_pos, float pos_iou, float neg_iou, Rng& rng) {
  const std::size_t n = anchors.size();
  const std::size_t g = gts.size();
  std::vector<float> best(n, 0.f);
  std::vector<int> best_gt(n, -1);
  std::vector<int> gt_best_anchor(g, -1);
  std::vector<float> gt_best(g, -1.f);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < g; ++j) {
      const float v = iou(anchors[i], gts[j]);
      if (v > best[i]) {
        best[i] = v;
        best_gt[i] = static_cast<int>(j);
      }
      if (v > gt_best[j]) {
        gt_best[j] = v;
        gt_best_anchor[j] = static_cast<int>(i);
      }
    }

  std::vector<char> is_pos(n, 0);
  for (std::size_t i = 0; i < n; ++i)
    if (best_gt[i] >= 0 && best[i] >= pos_iou) is_pos[i] = 1;
  for (std::size_t j = 0; j < g; ++j)
    if (gt_best_anchor[j] >= 0) {
      is_pos[static_cast<std::size_t>(gt_best_anchor[j])] = 1;
      best_gt[static_cast<std::size_t>(gt_best_anchor[j])] = static_cast<int>(j);
    }

  RpnSample<S> s;
  std::vector<int> negs;
  for (std::size_t i = 0; i < n; ++i) {
    if (is_pos[i])
      s.pos.push_back(static_cast<int>(i));
    else if (best[i] < neg_iou)
      negs.push_back(static_cast<int>(i));
  }
  if (static_cast<int>(s.pos.size()) > max_pos) {
    rng.shuffle(s.pos);
    s.pos.resize(static_cast<std::size_t>(max_pos));
    std::sort(s.pos.begin(), s.pos.end());
  }
  const int want_neg = batch - static_cast<int>(s.pos.size());
  if (static_cast<int>(negs.size()) > want_neg) {
    rng.shuffle(negs);
    negs.resize(static_cast<std::size_t>(std::max(want_neg, 0)));
    std::sort(negs.begin(), negs.end());
  }
  s.neg = std::move(negs);

  s.pos_deltas = Tensor<S>({static_cast<int>(s.pos.size()), 4});
  for (std::size_t i = 0; i < s.pos.size(); ++i) {
    const int a = s.pos[i];
    s.pos_gt.push_back(best_gt[static_cast<std::size_t>(a)]);
    const auto d = encode_delta(anchors[static_cast<std::size_t>(a)],
                                gts[static_cast<std::size_t>(best_gt[static_cast<std::size_t>(a)])]);
    for (int j = 0; j < 4; ++j) s.pos_deltas.at(static_cast<int>(i), j) = static_cast<S>(d[static_cast<std::size_t>(j)]);
  }
  return s;
}

// Binary foreground labels for a fixed proposal list.
inline std::vector<int> label_proposals(const std::vector<Box>& boxes, const std::vector<Box>& gts,
                                        float fg_iou) {
  std::vector<int> labels(boxes.size(), 0);
  for (std::size_t i = 0; i < boxes.size(); ++i)
    for (const Box& gt : gts)
      if (iou(boxes[i], gt) >= fg_iou) {
        labels[i] = 1;
        break;
      }
  return labels;
}

// Regression targets against the best-overlapping box; zero when none.
template <typename S>
Tensor<S> proposal_deltas(const std::vector<Box>& boxes, const std::vector<Box>& gts) {
  Tensor<S> out({static_cast<int>(boxes.size()), 4});
  for (std::size_t i = 0; i < boxes.size(); ++i) {
    float best = 0.f;
    int arg = -1;
    for (std::size_t j = 0; j < gts.size(); ++j) {
      const float v = iou(boxes[i], gts[j]);
      if (v > best) {
        best = v;
        arg = static_cast<int>(j);
      }
    }
    if (arg < 0) continue;
    const auto d = encode_delta(boxes[i], gts[static_cast<std::size_t>(arg)]);
    for (int j = 0; j < 4; ++j) out.at(static_cast<int>(i), j) = static_cast<S>(d[static_cast<std::size_t>(j)]);
  }
  return out;
}

// Stage-1 RoI head minibatch: proposals plus appended ground truth, sampled
// to `count` with a bounded foreground fraction.
template <typename S>
struct RoiSample {
  std::vector<Box> boxes;
  std::vector<int> labels;  // 0 background, else 1..S
  Tensor<S> deltas;         // (n,4), valid on foreground rows
  Tensor<S> fg_weights;     // (n)
  int fg_count = 0;
};

template <typename S>
RoiSample<S> sample_rois(const std::vector<Box>& proposals, const std::vector<Box>& gts,
                         const std::vector<int>& gt_labels, float fg_iou, int count,
                         float fg_fraction, Rng& rng) {
  require(gts.size() == gt_labels.size(), ErrorKind::shape, "sample_rois label count mismatch");
  std::vector<Box> cand = proposals;
  cand.insert(cand.end(), gts.begin(), gts.end());

  std::vector<int> fg, bg;
  std::vector<int> match(cand.size(), -1);
  for (std::size_t i = 0; i < cand.size(); ++i) {
    float best = 0.f;
    for (std::size_t j = 0; j < gts.size(); ++j) {
      const float v = iou(cand[i], gts[j]);
      if (v > best) {
        best = v;
        match[i] = static_cast<int>(j);
      }
    }
    if (match[i] >= 0 && best >= fg_iou)
      fg.push_back(static_cast<int>(i));
    else
      bg.push_back(static_cast<int>(i));
  }
  const int want_fg = std::max(1, static_cast<int>(count * fg_fraction));
  if (static_cast<int>(fg.size()) > want_fg) {
    rng.shuffle(fg);
    fg.resize(static_cast<std::size_t>(want_fg));
    std::sort(fg.begin(), fg.end());
  }
  const int want_bg = count - static_cast<int>(fg.size());
  if (static_cast<int>(bg.size()) > want_bg) {
    rng.shuffle(bg);
    bg.resize(static_cast<std::size_t>(std::max(want_bg, 0)));
    std::sort(bg.begin(), bg.end());
  }

  RoiSample<S> s;
  s.fg_count = static_cast<int>(fg.size());
  const int n = static_cast<int>(fg.size() + bg.size());
  s.deltas = Tensor<S>({n, 4});
  s.fg_weights = Tensor<S>({n});
  int row = 0;
  for (int idx : fg) {
    s.boxes.push_back(cand[static_cast<std::size_t>(idx)]);
    s.labels.push_back(gt_labels[static_cast<std::size_t>(match[static_cast<std::size_t>(idx)])]);
    s.fg_weights[static_cast<std::size_t>(row)] = S(1);
    const auto d = encode_delta(cand[static_cast<std::size_t>(idx)],
                                gts[static_cast<std::size_t>(match[static_cast<std::size_t>(idx)])]);
    for (int j = 0; j < 4; ++j) s.deltas.at(row, j) = static_cast<S>(d[static_cast<std::size_t>(j)]);
    ++row;
  }
  for (int idx : bg) {
    s.boxes.push_back(cand[static_cast<std::size_t>(idx)]);
    s.labels.push_back(0);
    ++row;
  }
  return s;
}

// --- stage-2 episode loss ---

template <typename S>
struct EpisodeGrads {
  Tensor<S> dyn, dyf, ddeltas, dobj, dreg;

  void allocate(const EpisodeForward<S>& f) {
    dyn = Tensor<S>(f.yn_logits.shape());
    dyf = Tensor<S>(f.yf_logits.shape());
    ddeltas = Tensor<S>(f.deltas.shape());
    dobj = Tensor<S>(f.rpn_obj.shape());
    dreg = Tensor<S>(f.rpn_reg.shape());
  }
};

// Combined RPN objectness BCE and positive-anchor box regression. Head
// layout: anchor i lives at channel i%A, cell i/A. Gradients accumulate
// into dobj/dreg when non-null. Returns (cls loss, reg loss).
template <typename S>
std::pair<S, S> rpn_losses(const Tensor<S>& obj, const Tensor<S>& reg,
                           const std::vector<Box>& anchors, const std::vector<Box>& gts,
                           const TrainConfig& tc, Rng& rng, S grad_scale, Tensor<S>* dobj,
                           Tensor<S>* dreg) {
  const int a_per_cell = obj.dim(0);
  const int cells = obj.dim(1) * obj.dim(2);
  RpnSample<S> rs = sample_rpn_anchors<S>(anchors, gts, tc.rpn_batch, tc.rpn_max_pos,
                                          tc.rpn_pos_iou, tc.rpn_neg_iou, rng);
  Tensor<S> targets(obj.shape());
  Tensor<S> weights(obj.shape());
  for (int i : rs.pos) {
    targets[static_cast<std::size_t>(i % a_per_cell) * cells + i / a_per_cell] = S(1);
    weights[static_cast<std::size_t>(i % a_per_cell) * cells + i / a_per_cell] = S(1);
  }
  for (int i : rs.neg)
    weights[static_cast<std::size_t>(i % a_per_cell) * cells + i / a_per_cell] = S(1);
  const S n_sampled = static_cast<S>(std::max<std::size_t>(rs.pos.size() + rs.neg.size(), 1));
  const S cls = bce_with_logits(obj, targets, weights, n_sampled, grad_scale, dobj);

  S breg = S(0);
  if (!rs.pos.empty()) {
    Tensor<S> pred({static_cast<int>(rs.pos.size()), 4});
    for (std::size_t i = 0; i < rs.pos.size(); ++i) {
      const int anchor = rs.pos[i];
      for (int j = 0; j < 4; ++j)
        pred.at(static_cast<int>(i), j) =
            reg[static_cast<std::size_t>(4 * (anchor % a_per_cell) + j) * cells +
                anchor / a_per_cell];
    }
    Tensor<S> w = Tensor<S>::ones({static_cast<int>(rs.pos.size())});
    Tensor<S> dpred(pred.shape());
    breg = smooth_l1(pred, rs.pos_deltas, w, static_cast<S>(rs.pos.size()), grad_scale,
                     dreg ? &dpred : nullptr);
    if (dreg)
      for (std::size_t i = 0; i < rs.pos.size(); ++i) {
        const int anchor = rs.pos[i];
        for (int j = 0; j < 4; ++j)
          (*dreg)[static_cast<std::size_t>(4 * (anchor % a_per_cell) + j) * cells +
                  anchor / a_per_cell] += dpred.at(static_cast<int>(i), j);
      }
  }
  return {cls, breg};
}

// Loss of one episode forward against the positive-class boxes. Gradients
// are ACCUMULATED into `grads` (call allocate first) scaled by grad_scale;
// pass nullptr to only measure.
template <typename S>
LossRecord episode_loss(const EpisodeForward<S>& f, const std::vector<Box>& pos_gts,
                        const TrainConfig& tc, Rng& rng, S grad_scale, EpisodeGrads<S>* grads) {
  LossRecord rec;
  auto [rpn_cls, rpn_reg] =
      rpn_losses(f.rpn_obj, f.rpn_reg, f.anchors, pos_gts, tc, rng, grad_scale,
                 grads ? &grads->dobj : nullptr, grads ? &grads->dreg : nullptr);
  rec.rpn = static_cast<double>(rpn_cls) + static_cast<double>(rpn_reg);

  // Classification over all K proposals, coarse and suppressed.
  std::vector<int> labels = label_proposals(f.proposals.boxes, pos_gts, tc.fg_iou);
  rec.novel_ce = static_cast<double>(
      softmax_cross_entropy(f.yn_logits, labels, static_cast<S>(tc.lambda1) * grad_scale,
                            grads ? &grads->dyn : nullptr));
  rec.final_ce = static_cast<double>(
      softmax_cross_entropy(f.yf_logits, labels, static_cast<S>(tc.lambda2) * grad_scale,
                            grads ? &grads->dyf : nullptr));

  // Box regression on foreground proposals only.
  Tensor<S> dtargets = proposal_deltas<S>(f.proposals.boxes, pos_gts);
  Tensor<S> row_w({static_cast<int>(labels.size())});
  int fg = 0;
  for (std::size_t i = 0; i < labels.size(); ++i)
    if (labels[i] > 0) {
      row_w[i] = S(1);
      ++fg;
    }
  rec.reg = static_cast<double>(smooth_l1(f.deltas, dtargets, row_w,
                                          static_cast<S>(std::max(fg, 1)), grad_scale,
                                          grads ? &grads->ddeltas : nullptr));

  rec.total = rec.rpn + static_cast<double>(tc.lambda1) * rec.novel_ce +
              static_cast<double>(tc.lambda2) * rec.final_ce + rec.reg;
  return rec;
}

// --- trainers (stage 1 and stage 2) ---

using LossHook = std::function<void(int step, const LossRecord&)>;

// Faster R-CNN style base training on base-class annotations; novel-class
// objects are unlabeled background. Writes a JSONL log when log_path is
// non-empty and flips model.base_trained on completion.
void train_base(Model<real>& model, const Dataset& ds, const TrainConfig& tc,
                const std::string& log_path, const LossHook& hook = nullptr);

// Episodic fine-tuning with the base branch frozen.
void train_novel(Model<real>& model, const Dataset& ds, const TrainConfig& tc,
                 const std::string& log_path, const LossHook& hook = nullptr);

// Base-class ground truth of a scene: boxes plus labels in 1..S order given
// by the split (novel-class objects are dropped).
struct BaseGroundTruth {
  std::vector<Box> boxes;
  std::vector<int> labels;
};
BaseGroundTruth base_ground_truth(const Scene& scene, const ClassSplit& split);

}  // namespace bspg
