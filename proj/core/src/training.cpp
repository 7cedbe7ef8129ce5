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

#include "bspg/training.hpp"

#include <cmath>
#include <fstream>
#include <numeric>
#include <optional>

#include "json.hpp"

#include "bspg/image.hpp"

namespace bspg {

namespace {

using json = nlohmann::json;

struct LogWriter {
  std::ofstream out;

  explicit LogWriter(const std::string& path) {
    if (path.empty()) return;
    out.open(path, std::ios::trunc);
    require(out.good(), ErrorKind::io, "cannot open training log " + path);
  }

  void header(int stage, const TrainConfig& tc, double lambda1, double lambda2) {
    if (!out.is_open()) return;
    json j{{"type", "header"},
           {"stage", stage},
           {"lambda1", lambda1},
           {"lambda2", lambda2},
           {"seed", tc.seed}};
    out << j.dump() << "\n";
  }

  void record(int step, double lr, const LossRecord& r) {
    if (!out.is_open()) return;
    json j{{"type", "loss"},     {"step", step},
           {"lr", lr},           {"rpn", r.rpn},
           {"novel_ce", r.novel_ce}, {"final_ce", r.final_ce},
           {"reg", r.reg},       {"total", r.total}};
    out << j.dump() << "\n";
  }
};

// One stage-1 image: standard two-head detector step over base classes.
LossRecord base_step(Model<real>& m, const Scene& scene, const ClassSplit& split,
                     const TrainConfig& tc, Rng& rng, real grad_scale) {
  BaseGroundTruth gt = base_ground_truth(scene, split);
  Tensor<real> img = image_to_tensor<real>(scene.image);

  typename Trunk<real>::Cache trunk_c;
  Tensor<real> t3 = m.trunk.forward(img, &trunk_c);
  typename ConvRelu<real>::Cache s4_c;
  Tensor<real> fb = m.s4_base.forward(t3, &s4_c);
  typename RpnHead<real>::Cache rpn_c;
  auto heads = m.rpn_base.forward(fb, &rpn_c);
  std::vector<Box> anchors = make_anchors(heads.first.dim(1), heads.first.dim(2), kMidStride,
                                          m.cfg.anchor_scales, m.cfg.anchor_ratios);

  Tensor<real> dobj(heads.first.shape());
  Tensor<real> dreg(heads.second.shape());
  auto [rpn_cls, rpn_reg] =
      rpn_losses(heads.first, heads.second, anchors, gt.boxes, tc, rng, grad_scale, &dobj, &dreg);

  ProposalSet<real> props = propose(heads.first, heads.second, anchors, m.cfg.image_size,
                                    m.cfg.proposal_count, m.cfg.train_pre_nms, m.cfg.rpn_nms_iou);
  RoiSample<real> rois = sample_rois<real>(props.boxes, gt.boxes, gt.labels, tc.fg_iou,
                                           tc.roi_batch, tc.roi_fg_fraction, rng);

  typename RoiExtractor<real>::Cache eb_c;
  Tensor<real> feats = m.eb.forward(fb, rois.boxes, &eb_c);
  Tensor<real> pooled = global_avg_pool(feats);
  typename Linear<real>::Cache cls_c, reg_c;
  Tensor<real> logits = m.base_cls.forward(pooled, &cls_c);
  Tensor<real> pred_d = m.base_reg.forward(pooled, &reg_c);

  Tensor<real> dlogits(logits.shape());
  Tensor<real> dpred(pred_d.shape());
  const real ce = softmax_cross_entropy(logits, rois.labels, grad_scale, &dlogits);
  const real rg = smooth_l1(pred_d, rois.deltas, rois.fg_weights,
                            static_cast<real>(std::max(rois.fg_count, 1)), grad_scale, &dpred);

  Tensor<real> dpooled = m.base_cls.backward(cls_c, dlogits);
  dpooled += m.base_reg.backward(reg_c, dpred);
  Tensor<real> dfeats = global_avg_pool_backward(dpooled, feats.shape());
  Tensor<real> dfb = m.eb.backward(eb_c, dfeats);
  dfb += m.rpn_base.backward(rpn_c, dobj, dreg);
  Tensor<real> dt3 = m.s4_base.backward(s4_c, dfb);
  m.trunk.backward(trunk_c, dt3);

  LossRecord rec;
  rec.rpn = static_cast<double>(rpn_cls) + static_cast<double>(rpn_reg);
  rec.novel_ce = static_cast<double>(ce);  // slot reused for the RoI CE; lambda1 = 1 in the log
  rec.final_ce = 0.0;
  rec.reg = static_cast<double>(rg);
  rec.total = rec.rpn + rec.novel_ce + rec.reg;
  return rec;
}

}  // namespace

BaseGroundTruth base_ground_truth(const Scene& scene, const ClassSplit& split) {
  BaseGroundTruth out;
  for (const Annotation& a : scene.objects) {
    auto it = std::find(split.base.begin(), split.base.end(), a.class_id);
    if (it == split.base.end()) continue;
    out.boxes.push_back(a.box);
    out.labels.push_back(1 + static_cast<int>(it - split.base.begin()));
  }
  return out;
}

void train_base(Model<real>& model, const Dataset& ds, const TrainConfig& tc,
                const std::string& log_path, const LossHook& hook) {
  require(!ds.train.empty(), ErrorKind::input, "training split is empty");
  require(tc.epochs >= 1 && tc.batch >= 1, ErrorKind::config, "epochs and batch must be >= 1");
  model.set_stage_trainable(1);
  std::vector<Param<real>*> params = model.params();
  LogWriter log(log_path);
  log.header(1, tc, 1.0, 0.0);

  Rng sample_rng(tc.seed, 0xba5e0001u);
  int step = 0;
  for (int epoch = 0; epoch < tc.epochs; ++epoch) {
    std::vector<int> order(ds.train.size());
    std::iota(order.begin(), order.end(), 0);
    Rng epoch_rng(tc.seed, 0xe70c0000ull + static_cast<std::uint64_t>(epoch));
    epoch_rng.shuffle(order);
    const double lr = tc.lr * std::pow(tc.lr_decay, epoch / std::max(tc.lr_step, 1));

    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(tc.batch)) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(tc.batch));
      const real scale = real(1) / static_cast<real>(end - start);
      zero_grads(params);
      LossRecord mean;
      for (std::size_t i = start; i < end; ++i)
        mean.accumulate(
            base_step(model, ds.train[static_cast<std::size_t>(order[i])], ds.split, tc,
                      sample_rng, scale),
            static_cast<double>(scale));
      sgd_step(params, static_cast<real>(lr), static_cast<real>(tc.momentum));
      log.record(step, lr, mean);
      if (hook) hook(step, mean);
      ++step;
    }
  }
  model.base_trained = true;
}

void train_novel(Model<real>& model, const Dataset& ds, const TrainConfig& tc,
                 const std::string& log_path, const LossHook& hook) {
  require(model.base_trained, ErrorKind::state,
          "stage-2 training requires stage-1 weights; run train-base first");
  require(!ds.train.empty(), ErrorKind::input, "training split is empty");
  require(tc.novel_steps >= 1 && tc.novel_batch >= 1, ErrorKind::config,
          "novel_steps and novel_batch must be >= 1");
  model.set_stage_trainable(2);
  if (tc.init_novel_from_base) model.copy_base_to_novel();
  std::vector<Param<real>*> params = model.params();
  LogWriter log(log_path);
  log.header(2, tc, tc.lambda1, tc.lambda2);

  Rng rng(tc.seed, 0x0e150de5ull);
  for (int step = 0; step < tc.novel_steps; ++step) {
    zero_grads(params);
    LossRecord mean;
    const real scale = real(1) / static_cast<real>(tc.novel_batch);
    for (int b = 0; b < tc.novel_batch; ++b) {
      const Scene* scene = nullptr;
      std::optional<Episode> ep;
      for (int attempt = 0; attempt < 64 && !ep.has_value(); ++attempt) {
        scene = &ds.train[static_cast<std::size_t>(
            rng.below(static_cast<std::uint64_t>(ds.train.size())))];
        ep = sample_training_episode(*scene, ds.train, ds.split, ds.config.query_size, rng,
                                     tc.cross_image_queries);
      }
      require(ep.has_value(), ErrorKind::state,
              "no base-class episode could be sampled from the training split");

      Tensor<real> target = image_to_tensor<real>(scene->image);
      std::vector<Tensor<real>> queries;
      for (const Image& q : ep->queries) queries.push_back(image_to_tensor<real>(q));
      std::vector<Box> pos;
      for (const Annotation& a : scene->objects)
        if (a.class_id == ep->positive_class) pos.push_back(a.box);

      EpisodeForward<real> f;
      model.run_episode(target, queries, true, &pos, f);
      EpisodeGrads<real> g;
      g.allocate(f);
      LossRecord r = episode_loss(f, pos, tc, rng, scale, &g);
      model.run_backward(f, g.dyn, g.dyf, g.ddeltas, g.dobj, g.dreg);
      mean.accumulate(r, static_cast<double>(scale));
    }
    sgd_step(params, static_cast<real>(tc.novel_lr), static_cast<real>(tc.momentum));
    log.record(step, tc.novel_lr, mean);
    if (hook) hook(step, mean);
  }
}

}  // namespace bspg
