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

#include "bspg/eval.hpp"

#include <algorithm>
#include <numeric>

#include "bspg/errors.hpp"
#include "bspg/image.hpp"
#include "bspg/threads.hpp"

namespace bspg {

namespace {

// Greedy per-group matching shared by AP and FP analysis. Returns per-
// detection TP flags for `dets` visited in descending-score order; `order`
// receives that visit order. strict_iou selects > instead of >=.
std::vector<char> match_detections(const std::vector<ScoredBox>& dets,
                                   const std::vector<std::vector<Box>>& gts_by_group, double thr,
                                   bool strict_iou, std::vector<int>& order) {
  order.resize(dets.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&dets](int a, int b) {
    return dets[static_cast<std::size_t>(a)].score > dets[static_cast<std::size_t>(b)].score;
  });

  std::vector<std::vector<char>> used(gts_by_group.size());
  for (std::size_t g = 0; g < gts_by_group.size(); ++g) used[g].assign(gts_by_group[g].size(), 0);

  std::vector<char> tp(dets.size(), 0);
  for (int idx : order) {
    const ScoredBox& d = dets[static_cast<std::size_t>(idx)];
    require(d.group >= 0 && d.group < static_cast<int>(gts_by_group.size()), ErrorKind::input,
            "detection group out of range");
    const std::vector<Box>& gts = gts_by_group[static_cast<std::size_t>(d.group)];
    double best = -1.0;
    int arg = -1;
    for (std::size_t j = 0; j < gts.size(); ++j) {
      if (used[static_cast<std::size_t>(d.group)][j]) continue;
      const double v = iou(d.box, gts[j]);
      if (v > best) {
        best = v;
        arg = static_cast<int>(j);
      }
    }
    const bool hit = arg >= 0 && (strict_iou ? best > thr : best >= thr);
    if (hit) {
      used[static_cast<std::size_t>(d.group)][static_cast<std::size_t>(arg)] = 1;
      tp[static_cast<std::size_t>(idx)] = 1;
    }
  }
  return tp;
}

}  // namespace

double ap_at_iou(std::vector<ScoredBox> dets, const std::vector<std::vector<Box>>& gts_by_group,
                 double thr) {
  std::size_t total_gt = 0;
  for (const auto& g : gts_by_group) total_gt += g.size();
  if (total_gt == 0) return 0.0;
  if (dets.empty()) return 0.0;

  std::vector<int> order;
  std::vector<char> tp = match_detections(dets, gts_by_group, thr, false, order);

  // Precision at each rank, then the right-to-left envelope; each true
  // positive contributes one recall step of 1/total_gt.
  const std::size_t n = order.size();
  std::vector<double> prec(n);
  int tp_cum = 0;
  for (std::size_t i = 0; i < n; ++i) {
    tp_cum += tp[static_cast<std::size_t>(order[i])];
    prec[i] = static_cast<double>(tp_cum) / static_cast<double>(i + 1);
  }
  double env = 0.0;
  double ap = 0.0;
  for (std::size_t i = n; i-- > 0;) {
    env = std::max(env, prec[i]);
    if (tp[static_cast<std::size_t>(order[i])]) ap += env;
  }
  return ap / static_cast<double>(total_gt);
}

ApSummary coco_ap(const std::vector<ScoredBox>& dets,
                  const std::vector<std::vector<Box>>& gts_by_group) {
  ApSummary s;
  double sum = 0.0;
  for (int t = 50; t <= 95; t += 5) {
    const double ap = ap_at_iou(dets, gts_by_group, t / 100.0);
    sum += ap;
    if (t == 50) s.ap50 = ap;
    if (t == 75) s.ap75 = ap;
  }
  s.ap = sum / 10.0;
  return s;
}

namespace {

struct Cell {
  int scene_index;
  int class_id;
};

// All k per-run detection lists of one (scene, class) cell.
struct CellRuns {
  std::vector<std::vector<Detection<real>>> runs;
};

EpisodeResult merge_runs(const Cell& cell, const Scene& scene, const CellRuns& cr, int k,
                         float merge_iou, float nms_iou) {
  struct Cluster {
    Box rep;                       // first member's box, used for matching
    double x1, y1, x2, y2, score;  // accumulated over matched members
    int hits;
  };
  std::vector<Cluster> clusters;

  for (const auto& run : cr.runs) {
    // Detections arrive NMS-ordered (descending score) per run.
    std::vector<char> taken(clusters.size(), 0);
    for (const Detection<real>& d : run) {
      double best = 0.0;
      int arg = -1;
      for (std::size_t c = 0; c < clusters.size(); ++c) {
        if (taken[c]) continue;
        const double v = iou(d.box, clusters[c].rep);
        if (v >= merge_iou && v > best) {
          best = v;
          arg = static_cast<int>(c);
        }
      }
      if (arg >= 0) {
        Cluster& c = clusters[static_cast<std::size_t>(arg)];
        taken[static_cast<std::size_t>(arg)] = 1;
        c.x1 += d.box.x1;
        c.y1 += d.box.y1;
        c.x2 += d.box.x2;
        c.y2 += d.box.y2;
        c.score += static_cast<double>(d.score);
        c.hits += 1;
      } else {
        clusters.push_back({d.box, d.box.x1, d.box.y1, d.box.x2, d.box.y2,
                            static_cast<double>(d.score), 1});
        taken.push_back(1);
      }
    }
  }

  // Mean box over matched members; mean score over all k runs (absent runs
  // count as zero), then a final overlap cleanup across clusters.
  std::vector<Box> boxes;
  std::vector<float> scores;
  std::vector<MergedDetection> merged;
  for (const Cluster& c : clusters) {
    MergedDetection m;
    const double inv = 1.0 / c.hits;
    m.box = {static_cast<float>(c.x1 * inv), static_cast<float>(c.y1 * inv),
             static_cast<float>(c.x2 * inv), static_cast<float>(c.y2 * inv)};
    m.score = c.score / static_cast<double>(k);
    m.hits = c.hits;
    boxes.push_back(m.box);
    scores.push_back(static_cast<float>(m.score));
    merged.push_back(m);
  }

  EpisodeResult out;
  out.scene_id = scene.id;
  out.scene_index = cell.scene_index;
  out.class_id = cell.class_id;
  for (int idx : nms(boxes, scores, nms_iou))
    out.detections.push_back(merged[static_cast<std::size_t>(idx)]);
  return out;
}

std::vector<Box> class_boxes(const Scene& scene, int class_id) {
  std::vector<Box> out;
  for (const Annotation& a : scene.objects)
    if (a.class_id == class_id) out.push_back(a.box);
  return out;
}

std::string class_name_of(const Dataset& ds, int class_id) {
  if (class_id >= 0 && class_id < static_cast<int>(ds.class_names.size()))
    return ds.class_names[static_cast<std::size_t>(class_id)];
  return "class-" + std::to_string(class_id);
}

}  // namespace

EvalResult evaluate(const Model<real>& model, const Dataset& ds, const EvalProtocol& proto) {
  require(proto.k >= 1, ErrorKind::config, "eval_queries must be >= 1");
  require(!ds.test.empty(), ErrorKind::input, "test split is empty");
  const std::vector<int> classes = proto.classes.empty() ? ds.split.novel : proto.classes;
  require(!classes.empty(), ErrorKind::config, "no classes to evaluate");
  QueryBankView bank(ds);

  std::vector<Cell> cells;
  for (std::size_t i = 0; i < ds.test.size(); ++i)
    for (int c : classes)
      if (!class_boxes(ds.test[i], c).empty()) cells.push_back({static_cast<int>(i), c});

  // Parallel across cells; every cell writes only its own slot.
  std::vector<CellRuns> runs(cells.size());
  std::vector<EpisodeResult> raw(cells.size());
  parallel_for(static_cast<std::int64_t>(cells.size()), [&](std::int64_t ci) {
    const Cell& cell = cells[static_cast<std::size_t>(ci)];
    const Scene& scene = ds.test[static_cast<std::size_t>(cell.scene_index)];
    const std::vector<Episode> episodes =
        build_eval_episodes(scene, bank, {cell.class_id}, proto.k);
    Tensor<real> target = image_to_tensor<real>(scene.image);
    CellRuns& cr = runs[static_cast<std::size_t>(ci)];
    for (const Episode& ep : episodes) {
      std::vector<Tensor<real>> queries;
      for (const Image& q : ep.queries) queries.push_back(image_to_tensor<real>(q));
      EpisodeForward<real> f;
      model.run_episode(target, queries, false, nullptr, f);
      cr.runs.push_back(model.regress_and_nms(f).detections);
    }
    raw[static_cast<std::size_t>(ci)] =
        merge_runs(cell, scene, cr, proto.k, proto.merge_iou, model.cfg.nms_iou);
  });

  EvalResult result;
  result.raw = std::move(raw);

  // Per-class AP: groups are that class's cells; ground truth is the cell
  // scene's boxes of the class.
  for (int c : classes) {
    std::vector<int> cell_ids;
    for (std::size_t i = 0; i < cells.size(); ++i)
      if (cells[i].class_id == c) cell_ids.push_back(static_cast<int>(i));

    std::vector<std::vector<Box>> gts;
    for (int id : cell_ids)
      gts.push_back(class_boxes(
          ds.test[static_cast<std::size_t>(cells[static_cast<std::size_t>(id)].scene_index)], c));

    ClassMetrics cm;
    cm.class_id = c;
    cm.class_name = class_name_of(ds, c);
    for (const auto& g : gts) cm.gt_count += static_cast<int>(g.size());

    if (proto.merge_detections) {
      std::vector<ScoredBox> dets;
      for (std::size_t gi = 0; gi < cell_ids.size(); ++gi)
        for (const MergedDetection& d :
             result.raw[static_cast<std::size_t>(cell_ids[gi])].detections) {
          dets.push_back({static_cast<int>(gi), d.box, d.score});
          ++cm.det_count;
        }
      const ApSummary s = coco_ap(dets, gts);
      cm.ap = s.ap;
      cm.ap50 = s.ap50;
      cm.ap75 = s.ap75;
    } else {
      // Alternative protocol: average the AP of each query run.
      double ap = 0.0, ap50 = 0.0, ap75 = 0.0;
      for (int r = 0; r < proto.k; ++r) {
        std::vector<ScoredBox> dets;
        for (std::size_t gi = 0; gi < cell_ids.size(); ++gi) {
          const CellRuns& cr = runs[static_cast<std::size_t>(cell_ids[gi])];
          if (r >= static_cast<int>(cr.runs.size())) continue;
          for (const Detection<real>& d : cr.runs[static_cast<std::size_t>(r)])
            dets.push_back({static_cast<int>(gi), d.box, static_cast<double>(d.score)});
        }
        cm.det_count += static_cast<int>(dets.size());
        const ApSummary s = coco_ap(dets, gts);
        ap += s.ap;
        ap50 += s.ap50;
        ap75 += s.ap75;
      }
      cm.ap = ap / proto.k;
      cm.ap50 = ap50 / proto.k;
      cm.ap75 = ap75 / proto.k;
    }
    result.report.per_class.push_back(cm);
  }

  EvalReport& rep = result.report;
  rep.alpha = model.cfg.alpha;
  rep.strategy = to_string(model.cfg.strategy);
  rep.bcs = model.cfg.bcs_enabled;
  rep.pg = model.cfg.pg_enabled;
  rep.k = proto.k;
  for (const ClassMetrics& cm : rep.per_class) {
    rep.mean_ap += cm.ap;
    rep.mean_ap50 += cm.ap50;
    rep.mean_ap75 += cm.ap75;
  }
  const double n = static_cast<double>(rep.per_class.size());
  rep.mean_ap /= n;
  rep.mean_ap50 /= n;
  rep.mean_ap75 /= n;
  return result;
}

FpAnalysis fp_analysis(const std::vector<EpisodeResult>& results, const Dataset& ds) {
  FpAnalysis out;
  const float threshes[4][2] = {{0.5f, 0.5f}, {0.5f, 0.75f}, {0.75f, 0.5f}, {0.75f, 0.75f}};
  for (int r = 0; r < 4; ++r) {
    FpCell& cell = out.cells[static_cast<std::size_t>(r)];
    cell.iou_thr = threshes[r][0];
    cell.score_thr = threshes[r][1];

    for (const EpisodeResult& er : results) {
      require(er.scene_index >= 0 && er.scene_index < static_cast<int>(ds.test.size()),
              ErrorKind::input, "fp_analysis: scene index out of range");
      const Scene& scene = ds.test[static_cast<std::size_t>(er.scene_index)];
      const std::vector<Box> pos = class_boxes(scene, er.class_id);
      std::vector<Box> base;
      for (const Annotation& a : scene.objects)
        if (std::find(ds.split.base.begin(), ds.split.base.end(), a.class_id) !=
            ds.split.base.end())
          base.push_back(a.box);

      std::vector<ScoredBox> dets;
      for (const MergedDetection& d : er.detections)
        if (d.score > cell.score_thr) dets.push_back({0, d.box, d.score});

      std::vector<int> order;
      std::vector<char> tp = match_detections(dets, {pos}, cell.iou_thr, true, order);
      for (std::size_t i = 0; i < dets.size(); ++i) {
        if (tp[i]) {
          ++cell.tp;
          continue;
        }
        ++cell.fp;
        for (const Box& b : base)
          if (iou(dets[i].box, b) > cell.iou_thr) {
            ++cell.base_fp;
            break;
          }
      }
    }
    cell.precision = (cell.tp + cell.fp) > 0
                         ? static_cast<double>(cell.tp) / static_cast<double>(cell.tp + cell.fp)
                         : 1.0;
  }
  return out;
}

std::vector<AlphaRow> sweep_alpha(Model<real>& model, const Dataset& ds,
                                  const EvalProtocol& proto, const std::vector<double>& alphas) {
  require(!alphas.empty(), ErrorKind::config, "alpha sweep needs at least one value");
  const float saved = model.cfg.alpha;
  std::vector<AlphaRow> rows;
  for (double a : alphas) {
    require(a > 0.0 && a < 1.0, ErrorKind::config,
            "alpha out of range (0,1): " + std::to_string(a));
    model.cfg.alpha = static_cast<float>(a);
    AlphaRow row;
    row.alpha = a;
    row.report = evaluate(model, ds, proto).report;
    rows.push_back(std::move(row));
  }
  model.cfg.alpha = saved;
  return rows;
}

}  // namespace bspg
