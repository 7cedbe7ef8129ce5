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
#include <cstdint>
#include <string>
#include <vector>

#include "bspg/boxes.hpp"
#include "bspg/dataset.hpp"
#include "bspg/detector.hpp"
#include "bspg/version.hpp"

namespace bspg {

struct EvalProtocol {
  int k = 5;                    // queries per (scene, class)
  bool merge_detections = true;  // false: average AP over the k runs instead
  float merge_iou = 0.9f;        // cross-run box matching threshold
  std::vector<int> classes;      // empty -> the dataset's novel split
};

// One (scene, class) evaluation cell: detections merged over the k query
// runs (score = mean over runs, zeros for runs without a match).
struct MergedDetection {
  Box box;
  double score = 0.0;
  int hits = 0;  // runs that produced a matching detection
};

struct EpisodeResult {
  std::int64_t scene_id = 0;
  int scene_index = -1;  // into the evaluated split
  int class_id = -1;
  std::vector<MergedDetection> detections;
};

struct ClassMetrics {
  int class_id = -1;
  std::string class_name;
  double ap = 0.0, ap50 = 0.0, ap75 = 0.0;
  int gt_count = 0;
  int det_count = 0;
};

// Invariants: 0 <= AP <= AP50 <= 1 and AP75 <= AP50 per class and on means.
struct EvalReport {
  int version = kReportVersion;
  double alpha = 0.0;
  std::string strategy;
  bool bcs = true, pg = true;
  int k = 5;
  std::uint64_t seed = 0;
  std::vector<ClassMetrics> per_class;
  double mean_ap = 0.0, mean_ap50 = 0.0, mean_ap75 = 0.0;
};

struct EvalResult {
  EvalReport report;
  std::vector<EpisodeResult> raw;  // one entry per (scene, class) cell
};

// --- AP computation (all-point interpolation, COCO thresholds) ---

struct ScoredBox {
  int group = 0;  // scene bucket; matching never crosses groups
  Box box;
  double score = 0.0;
};

// Average precision at one IoU threshold: detections sorted by descending
// score (stable), greedily matched to the best unmatched ground truth of
// their group at IoU >= thr, precision envelope integrated over recall.
double ap_at_iou(std::vector<ScoredBox> dets, const std::vector<std::vector<Box>>& gts_by_group,
                 double thr);

// Mean over IoU 0.5:0.95:0.05 plus the 0.5 and 0.75 cuts.
struct ApSummary {
  double ap = 0.0, ap50 = 0.0, ap75 = 0.0;
};
ApSummary coco_ap(const std::vector<ScoredBox>& dets,
                  const std::vector<std::vector<Box>>& gts_by_group);

// --- full-protocol evaluation ---

// Runs the first-k seeded query episodes for every (test scene, evaluated
// class present) pair, merges scores across runs, and reports AP/AP50/AP75
// per class and averaged. Parallel across cells, deterministic aggregation.
EvalResult evaluate(const Model<real>& model, const Dataset& ds, const EvalProtocol& proto);

// --- false-positive analysis (four regimes) ---

struct FpCell {
  float iou_thr = 0.5f;
  float score_thr = 0.5f;
  int tp = 0;
  int fp = 0;       // all false positives
  int base_fp = 0;  // false positives overlapping a base-class ground truth
  double precision = 1.0;  // TP/(TP+FP); vacuous (no detections) counts as 1
};

struct FpAnalysis {
  std::array<FpCell, 4> cells;  // (IoU .5/.75) x (score .5/.75)
};

// Counts are invariant to detection input order (internal descending-score
// matching). `results` must come from evaluating `ds` (scene_index valid
// into the test split).
FpAnalysis fp_analysis(const std::vector<EpisodeResult>& results, const Dataset& ds);

// --- alpha sweep ---

struct AlphaRow {
  double alpha = 0.0;
  EvalReport report;
};

// Re-evaluates the same weights at each alpha (alpha only gates base-object
// selection at inference). Empty value list is a configuration error.
std::vector<AlphaRow> sweep_alpha(Model<real>& model, const Dataset& ds,
                                  const EvalProtocol& proto, const std::vector<double>& alphas);

}  // namespace bspg
