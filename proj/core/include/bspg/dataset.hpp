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
#include <optional>
#include <string>
#include <vector>

#include "bspg/boxes.hpp"
#include "bspg/image.hpp"
#include "bspg/rng.hpp"

namespace bspg {

// Synthetic classes are shape x fill combinations; similar classes share a
// shape or a fill, which is what makes base-class confusion possible.
constexpr int kNumShapes = 4;   // circle, square, triangle, star
constexpr int kNumFills = 4;    // solid, striped, ringed, dotted
constexpr int kClassUniverse = kNumShapes * kNumFills;

struct GenConfig {
  int image_size = 128;
  int query_size = 64;
  int base_classes = 12;
  int novel_classes = 4;
  int train_scenes = 2000;
  int test_scenes = 300;
  int bank_scenes = 120;   // held-out scenes the query bank is cropped from
  int min_objects = 3;
  int max_objects = 7;
  float min_size = 16.f;   // object extent range in pixels
  float max_size = 56.f;
  float max_overlap = 0.3f;  // max IoU allowed between placed objects
  int max_clutter = 3;       // unlabeled background smudges per scene
  double pixel_noise = 0.015;
  std::uint64_t seed = 0;

  void validate() const;  // throws config errors
};

struct Annotation {
  Box box;
  int class_id = 0;
};

struct Scene {
  std::int64_t id = 0;
  std::string file;  // path relative to the dataset directory
  Image image;
  std::vector<Annotation> objects;
};

// One bank patch; (scene_id, rect) is its provenance and re-cropping that
// rect from the bank scene reproduces `image` bit-exactly.
struct QueryPatch {
  int class_id = 0;
  std::int64_t scene_id = 0;
  std::array<int, 4> rect = {0, 0, 0, 0};  // integer x1,y1,x2,y2 in the scene
  std::string file;
  Image image;  // resized to query_size
};

struct ClassSplit {
  std::vector<int> base;
  std::vector<int> novel;
};

struct Dataset {
  int version = 0;
  GenConfig config;
  ClassSplit split;
  std::vector<std::string> class_names;  // indexed by class id
  std::vector<Scene> train;
  std::vector<Scene> test;
  std::vector<Scene> bank;
  std::vector<QueryPatch> query_bank;
};

// Target image plus one or more query patches of positive_class.
struct Episode {
  const Scene* target = nullptr;
  std::vector<Image> queries;
  int positive_class = -1;
};

std::vector<std::string> default_class_names();

// Deterministic in config.seed; every scene derives its own RNG stream from
// (seed, global scene index) so parallel and serial generation agree.
Dataset generate_dataset(const GenConfig& config);

void save_dataset(const Dataset& ds, const std::string& dir);
Dataset load_dataset(const std::string& dir);

// Queries are cropped from the target scene's own ground-truth boxes by
// default; cross_image picks the patch from another pool scene containing
// the chosen class instead.
std::optional<Episode> sample_training_episode(const Scene& scene, const std::vector<Scene>& pool,
                                               const ClassSplit& split, int query_size, Rng& rng,
                                               bool cross_image = false);

// Per-class index over the flat query bank.
class QueryBankView {
 public:
  QueryBankView() = default;
  explicit QueryBankView(const Dataset& ds);
  const std::vector<const QueryPatch*>& patches_for(int class_id) const;
  int class_count() const { return static_cast<int>(per_class_.size()); }

 private:
  std::vector<std::vector<const QueryPatch*>> per_class_;
};

// For each requested class present in the scene: shuffle that class's bank
// with an RNG seeded by the scene ID, take the first k patches, and emit k
// single-query episodes (scores are averaged across them downstream).
std::vector<Episode> build_eval_episodes(const Scene& scene, const QueryBankView& bank,
                                         const std::vector<int>& classes, int k);

// The crop rect actually used for a query patch: the annotation box rounded
// outward to integers and clamped to the image.
std::array<int, 4> query_crop_rect(const Box& box, int image_w, int image_h);

Image render_query_patch(const Image& scene_image, const std::array<int, 4>& rect, int query_size);

}  // namespace bspg
