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

#include "bspg/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numbers>

#include "bspg/errors.hpp"
#include "bspg/png_io.hpp"
#include "bspg/threads.hpp"
#include "bspg/version.hpp"
#include "json.hpp"

namespace bspg {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

// Scene ids are globally unique across splits.
constexpr std::int64_t kTestIdOffset = 1000000;
constexpr std::int64_t kBankIdOffset = 2000000;

// Classes listed base-first so that a (base_classes, novel_classes) prefix
// split keeps shape/fill confusability between the two sets: each default
// novel class shares its shape with three base classes and its fill with
// three others.
constexpr int kClassOrder[kClassUniverse] = {0, 1, 2, 4, 5, 7, 8, 10, 11, 13, 14, 15,
                                             3, 6, 9, 12};

const Rgb kPalette[6] = {
    {0.86f, 0.18f, 0.18f},  // red
    {0.95f, 0.58f, 0.11f},  // orange
    {0.93f, 0.85f, 0.25f},  // yellow
    {0.22f, 0.67f, 0.31f},  // green
    {0.23f, 0.42f, 0.84f},  // blue
    {0.62f, 0.30f, 0.71f},  // purple
};

// Each class draws from three of the six palette colors, overlapping with
// other classes so color alone never identifies a class.
Rgb class_color(int class_id, int pick) {
  return kPalette[(class_id + 2 * pick) % 6];
}

struct ObjSpec {
  int shape = 0;  // 0 circle, 1 square, 2 triangle, 3 star
  int fill = 0;   // 0 solid, 1 striped, 2 ringed, 3 dotted
  float cx = 0, cy = 0;
  float r = 0;      // nominal radius (extent / 2)
  float theta = 0;  // rotation, radians
  Rgb color = {0, 0, 0};
  std::vector<std::array<float, 2>> verts;  // empty for circles
};

std::vector<std::array<float, 2>> shape_vertices(int shape, float cx, float cy, float r,
                                                 float theta) {
  std::vector<std::array<float, 2>> v;
  auto push = [&](float rad, float ang) {
    v.push_back({cx + rad * std::cos(ang + theta), cy + rad * std::sin(ang + theta)});
  };
  const float pi = std::numbers::pi_v<float>;
  switch (shape) {
    case 1: {  // square, half-side 0.70 r keeps the rotated extent near 2r
      const float a = 0.70f * r * std::numbers::sqrt2_v<float>;
      for (int i = 0; i < 4; ++i) push(a, pi * (0.25f + 0.5f * i));
      break;
    }
    case 2:  // equilateral triangle, circumradius r
      for (int i = 0; i < 3; ++i) push(r, -pi / 2 + i * 2 * pi / 3);
      break;
    case 3:  // five-point star
      for (int i = 0; i < 10; ++i) push(i % 2 == 0 ? r : 0.45f * r, -pi / 2 + i * pi / 5);
      break;
    default: break;
  }
  return v;
}

bool point_in_polygon(const std::vector<std::array<float, 2>>& v, float x, float y) {
  bool in = false;
  for (std::size_t i = 0, j = v.size() - 1; i < v.size(); j = i++) {
    if ((v[i][1] > y) != (v[j][1] > y)) {
      const float t = (y - v[i][1]) / (v[j][1] - v[i][1]);
      if (x < v[i][0] + t * (v[j][0] - v[i][0])) in = !in;
    }
  }
  return in;
}

bool inside_shape(const ObjSpec& o, float x, float y) {
  if (o.shape == 0) {
    const float dx = x - o.cx;
    const float dy = y - o.cy;
    return dx * dx + dy * dy <= o.r * o.r;
  }
  return point_in_polygon(o.verts, x, y);
}

Box shape_bbox(const ObjSpec& o) {
  if (o.shape == 0) return {o.cx - o.r, o.cy - o.r, o.cx + o.r, o.cy + o.r};
  Box b = {o.verts[0][0], o.verts[0][1], o.verts[0][0], o.verts[0][1]};
  for (const auto& p : o.verts) {
    b.x1 = std::min(b.x1, p[0]);
    b.y1 = std::min(b.y1, p[1]);
    b.x2 = std::max(b.x2, p[0]);
    b.y2 = std::max(b.y2, p[1]);
  }
  return b;
}

Rgb shade(const Rgb& c, float f) {
  return {c[0] * f, c[1] * f, c[2] * f};
}

int wrap2(float band) {
  const int b = static_cast<int>(std::floor(band));
  return ((b % 2) + 2) % 2;
}

// Fill pattern in shape-local (rotation-corrected) coordinates so patterns
// rotate with the shape.
Rgb fill_color(const ObjSpec& o, float x, float y) {
  const Rgb dark = shade(o.color, 0.35f);
  if (o.fill == 0) return o.color;
  const float dx = x - o.cx;
  const float dy = y - o.cy;
  const float cs = std::cos(o.theta);
  const float sn = std::sin(o.theta);
  const float u = cs * dx + sn * dy;
  const float v = -sn * dx + cs * dy;
  switch (o.fill) {
    case 1:  // stripes across the local x axis
      return wrap2(u / (0.5f * o.r)) == 0 ? o.color : dark;
    case 2: {  // concentric rings
      const float rho = std::sqrt(u * u + v * v) / o.r;
      return wrap2(rho / 0.34f) == 0 ? o.color : dark;
    }
    case 3: {  // dot lattice
      const float g = 0.55f * o.r;
      const float fu = u / g - std::floor(u / g) - 0.5f;
      const float fv = v / g - std::floor(v / g) - 0.5f;
      return fu * fu + fv * fv <= 0.32f * 0.32f ? dark : o.color;
    }
    default: return o.color;
  }
}

// 2x2 coverage antialiasing; the pattern is sampled once at the pixel
// center, coverage only softens the silhouette.
void draw_object(Canvas& canvas, const ObjSpec& o) {
  const Box b = shape_bbox(o);
  const int x1 = std::max(0, static_cast<int>(std::floor(b.x1)) - 1);
  const int y1 = std::max(0, static_cast<int>(std::floor(b.y1)) - 1);
  const int x2 = std::min(canvas.width - 1, static_cast<int>(std::ceil(b.x2)) + 1);
  const int y2 = std::min(canvas.height - 1, static_cast<int>(std::ceil(b.y2)) + 1);
  for (int y = y1; y <= y2; ++y)
    for (int x = x1; x <= x2; ++x) {
      int cover = 0;
      for (float oy : {0.25f, 0.75f})
        for (float ox : {0.25f, 0.75f})
          if (inside_shape(o, static_cast<float>(x) + ox, static_cast<float>(y) + oy)) ++cover;
      if (cover == 0) continue;
      const Rgb c = fill_color(o, static_cast<float>(x) + 0.5f, static_cast<float>(y) + 0.5f);
      const float a = static_cast<float>(cover) / 4.f;
      float* px = canvas.px(x, y);
      for (int ch = 0; ch < 3; ++ch) px[ch] = px[ch] * (1.f - a) + c[ch] * a;
    }
}

std::vector<int> active_classes(const GenConfig& cfg) {
  std::vector<int> classes;
  for (int i = 0; i < cfg.base_classes + cfg.novel_classes; ++i) classes.push_back(kClassOrder[i]);
  return classes;
}

Scene render_scene(const GenConfig& cfg, const std::vector<int>& classes, std::int64_t id,
                   Rng& rng) {
  const int w = cfg.image_size;
  Canvas canvas(w, w,
                {0.80f + static_cast<float>(rng.uniform(-0.05, 0.05)),
                 0.80f + static_cast<float>(rng.uniform(-0.05, 0.05)),
                 0.80f + static_cast<float>(rng.uniform(-0.05, 0.05))});

  Scene scene;
  scene.id = id;
  const int count = rng.range(cfg.min_objects, cfg.max_objects);
  for (int obj = 0; obj < count; ++obj) {
    ObjSpec o;
    const int cls = classes[rng.below(classes.size())];
    o.shape = cls / kNumFills;
    o.fill = cls % kNumFills;
    o.r = static_cast<float>(rng.uniform(cfg.min_size, cfg.max_size)) / 2.f;
    o.theta = o.shape == 0 ? 0.f
                           : static_cast<float>(rng.uniform(0.0, 2.0 * std::numbers::pi));
    o.color = class_color(cls, static_cast<int>(rng.below(3)));
    const float pad = o.r * 1.05f + 2.f;
    bool placed = false;
    for (int attempt = 0; attempt < 60 && !placed; ++attempt) {
      o.cx = static_cast<float>(rng.uniform(pad, w - pad));
      o.cy = static_cast<float>(rng.uniform(pad, w - pad));
      o.verts = shape_vertices(o.shape, o.cx, o.cy, o.r, o.theta);
      const Box box = clip_box(shape_bbox(o), static_cast<float>(w), static_cast<float>(w));
      placed = true;
      for (const Annotation& a : scene.objects)
        if (iou(box, a.box) > cfg.max_overlap) {
          placed = false;
          break;
        }
      if (placed) {
        draw_object(canvas, o);
        scene.objects.push_back({box, cls});
      }
    }
  }

  // Unlabeled gray smudges; clutter the RPN has to learn to ignore.
  const int clutter = cfg.max_clutter > 0 ? rng.range(0, cfg.max_clutter) : 0;
  for (int i = 0; i < clutter; ++i) {
    ObjSpec smudge;
    smudge.shape = 0;
    smudge.fill = 0;
    smudge.cx = static_cast<float>(rng.uniform(4.0, w - 4.0));
    smudge.cy = static_cast<float>(rng.uniform(4.0, w - 4.0));
    smudge.r = static_cast<float>(rng.uniform(1.5, 3.5));
    const float g = 0.62f + static_cast<float>(rng.uniform(-0.08, 0.08));
    smudge.color = {g, g, g};
    draw_object(canvas, smudge);
  }

  if (cfg.pixel_noise > 0)
    for (float& v : canvas.rgb) v += static_cast<float>(rng.normal(0.0, cfg.pixel_noise));

  scene.image = canvas.quantize();
  return scene;
}

std::string scene_file(const char* split, int index) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "images/%s_%06d.png", split, index);
  return buf;
}

json box_json(const Box& b) {
  return json::array({b.x1, b.y1, b.x2, b.y2});
}

Box box_from_json(const json& j) {
  require(j.is_array() && j.size() == 4, ErrorKind::io, "manifest: malformed box");
  return {j[0].get<float>(), j[1].get<float>(), j[2].get<float>(), j[3].get<float>()};
}

json scene_record(const Scene& s, const char* split) {
  json objs = json::array();
  for (const Annotation& a : s.objects) objs.push_back({{"box", box_json(a.box)}, {"class", a.class_id}});
  return {{"type", "scene"}, {"split", split}, {"id", s.id}, {"file", s.file}, {"objects", objs}};
}

}  // namespace

void GenConfig::validate() const {
  require(image_size >= 32 && image_size <= 1024, ErrorKind::config,
          "image_size must be in [32, 1024]");
  require(query_size >= 8 && query_size <= 512, ErrorKind::config, "query_size out of range");
  require(base_classes >= 1, ErrorKind::config, "base_classes must be >= 1");
  require(novel_classes >= 1, ErrorKind::config, "novel_classes must be >= 1");
  require(base_classes + novel_classes <= kClassUniverse, ErrorKind::config,
          "base_classes + novel_classes exceeds the 16-class universe");
  require(train_scenes >= 1 && test_scenes >= 1 && bank_scenes >= 1, ErrorKind::config,
          "scene counts must be >= 1");
  require(min_objects >= 1 && min_objects <= max_objects && max_objects <= 32, ErrorKind::config,
          "object count range invalid");
  require(min_size >= 4.f && min_size <= max_size, ErrorKind::config, "object size range invalid");
  require(max_size <= static_cast<float>(image_size), ErrorKind::config,
          "max_size exceeds image_size");
  require(max_overlap >= 0.f && max_overlap < 1.f, ErrorKind::config,
          "max_overlap must be in [0, 1)");
  require(max_clutter >= 0, ErrorKind::config, "max_clutter must be >= 0");
  require(pixel_noise >= 0.0 && pixel_noise <= 0.2, ErrorKind::config,
          "pixel_noise must be in [0, 0.2]");
}

std::vector<std::string> default_class_names() {
  static const char* shapes[kNumShapes] = {"circle", "square", "triangle", "star"};
  static const char* fills[kNumFills] = {"solid", "striped", "ringed", "dotted"};
  std::vector<std::string> names;
  names.reserve(kClassUniverse);
  for (int s = 0; s < kNumShapes; ++s)
    for (int f = 0; f < kNumFills; ++f) names.push_back(std::string(shapes[s]) + "-" + fills[f]);
  return names;
}

Dataset generate_dataset(const GenConfig& config) {
  config.validate();
  Dataset ds;
  ds.version = kDatasetManifestVersion;
  ds.config = config;
  ds.class_names = default_class_names();
  for (int i = 0; i < config.base_classes; ++i) ds.split.base.push_back(kClassOrder[i]);
  for (int i = 0; i < config.novel_classes; ++i)
    ds.split.novel.push_back(kClassOrder[config.base_classes + i]);

  const std::vector<int> classes = active_classes(config);
  struct SplitPlan {
    const char* name;
    std::int64_t id_offset;
    int count;
    std::vector<Scene>* out;
  };
  const SplitPlan plans[3] = {{"train", 0, config.train_scenes, &ds.train},
                              {"test", kTestIdOffset, config.test_scenes, &ds.test},
                              {"bank", kBankIdOffset, config.bank_scenes, &ds.bank}};
  for (const SplitPlan& plan : plans) {
    plan.out->resize(static_cast<std::size_t>(plan.count));
    parallel_for(plan.count, [&](std::int64_t i) {
      const std::int64_t id = plan.id_offset + i;
      Rng rng(config.seed, static_cast<std::uint64_t>(id));
      Scene s = render_scene(config, classes, id, rng);
      s.file = scene_file(plan.name, static_cast<int>(i));
      (*plan.out)[static_cast<std::size_t>(i)] = std::move(s);
    });
  }

  // Query bank: every annotated object of every bank scene becomes one
  // patch; bank scenes are never evaluation targets.
  for (std::size_t si = 0; si < ds.bank.size(); ++si) {
    const Scene& s = ds.bank[si];
    for (std::size_t ai = 0; ai < s.objects.size(); ++ai) {
      QueryPatch p;
      p.class_id = s.objects[ai].class_id;
      p.scene_id = s.id;
      p.rect = query_crop_rect(s.objects[ai].box, s.image.width, s.image.height);
      p.image = render_query_patch(s.image, p.rect, config.query_size);
      char buf[64];
      std::snprintf(buf, sizeof(buf), "queries/bank_%04d_%02d.png", static_cast<int>(si),
                    static_cast<int>(ai));
      p.file = buf;
      ds.query_bank.push_back(std::move(p));
    }
  }
  return ds;
}

std::array<int, 4> query_crop_rect(const Box& box, int image_w, int image_h) {
  std::array<int, 4> r = {static_cast<int>(std::floor(box.x1)),
                          static_cast<int>(std::floor(box.y1)),
                          static_cast<int>(std::ceil(box.x2)),
                          static_cast<int>(std::ceil(box.y2))};
  r[0] = std::clamp(r[0], 0, image_w - 1);
  r[1] = std::clamp(r[1], 0, image_h - 1);
  r[2] = std::clamp(r[2], r[0] + 1, image_w);
  r[3] = std::clamp(r[3], r[1] + 1, image_h);
  return r;
}

Image render_query_patch(const Image& scene_image, const std::array<int, 4>& rect,
                         int query_size) {
  return resize_bilinear(crop(scene_image, rect[0], rect[1], rect[2], rect[3]), query_size,
                         query_size);
}

void save_dataset(const Dataset& ds, const std::string& dir) {
  std::error_code ec;
  fs::create_directories(fs::path(dir) / "images", ec);
  fs::create_directories(fs::path(dir) / "queries", ec);
  require(!ec, ErrorKind::io, "cannot create dataset directory " + dir);

  std::ofstream out(fs::path(dir) / "manifest.jsonl");
  require(out.good(), ErrorKind::io, "cannot write manifest in " + dir);

  json header = {{"type", "header"},
                 {"version", ds.version},
                 {"seed", ds.config.seed},
                 {"base", ds.split.base},
                 {"novel", ds.split.novel},
                 {"names", ds.class_names},
                 {"config",
                  {{"image_size", ds.config.image_size},
                   {"query_size", ds.config.query_size},
                   {"base_classes", ds.config.base_classes},
                   {"novel_classes", ds.config.novel_classes},
                   {"train_scenes", ds.config.train_scenes},
                   {"test_scenes", ds.config.test_scenes},
                   {"bank_scenes", ds.config.bank_scenes},
                   {"min_objects", ds.config.min_objects},
                   {"max_objects", ds.config.max_objects},
                   {"min_size", ds.config.min_size},
                   {"max_size", ds.config.max_size},
                   {"max_overlap", ds.config.max_overlap},
                   {"max_clutter", ds.config.max_clutter},
                   {"pixel_noise", ds.config.pixel_noise}}}};
  out << header.dump() << "\n";

  struct SplitRef {
    const char* name;
    const std::vector<Scene>* scenes;
  };
  for (const SplitRef& ref :
       {SplitRef{"train", &ds.train}, SplitRef{"test", &ds.test}, SplitRef{"bank", &ds.bank}}) {
    for (const Scene& s : *ref.scenes) {
      write_png((fs::path(dir) / s.file).string(), s.image);
      out << scene_record(s, ref.name).dump() << "\n";
    }
  }
  for (const QueryPatch& p : ds.query_bank) {
    write_png((fs::path(dir) / p.file).string(), p.image);
    json rec = {{"type", "query"},
                {"class", p.class_id},
                {"scene_id", p.scene_id},
                {"rect", p.rect},
                {"file", p.file}};
    out << rec.dump() << "\n";
  }
  require(out.good(), ErrorKind::io, "manifest write failed in " + dir);
}

Dataset load_dataset(const std::string& dir) {
  std::ifstream in(fs::path(dir) / "manifest.jsonl");
  require(in.good(), ErrorKind::io, "cannot open manifest in " + dir);
  Dataset ds;
  bool saw_header = false;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      fail(ErrorKind::io, std::string("manifest parse error: ") + e.what());
    }
    const std::string type = j.value("type", "");
    if (type == "header") {
      require(j.contains("version"), ErrorKind::io, "manifest header missing version");
      ds.version = j["version"].get<int>();
      require(ds.version == kDatasetManifestVersion, ErrorKind::io,
              "unsupported dataset manifest version " + std::to_string(ds.version));
      ds.split.base = j["base"].get<std::vector<int>>();
      ds.split.novel = j["novel"].get<std::vector<int>>();
      ds.class_names = j["names"].get<std::vector<std::string>>();
      const json& c = j["config"];
      ds.config.image_size = c["image_size"].get<int>();
      ds.config.query_size = c["query_size"].get<int>();
      ds.config.base_classes = c["base_classes"].get<int>();
      ds.config.novel_classes = c["novel_classes"].get<int>();
      ds.config.train_scenes = c["train_scenes"].get<int>();
      ds.config.test_scenes = c["test_scenes"].get<int>();
      ds.config.bank_scenes = c["bank_scenes"].get<int>();
      ds.config.min_objects = c["min_objects"].get<int>();
      ds.config.max_objects = c["max_objects"].get<int>();
      ds.config.min_size = c["min_size"].get<float>();
      ds.config.max_size = c["max_size"].get<float>();
      ds.config.max_overlap = c["max_overlap"].get<float>();
      ds.config.max_clutter = c["max_clutter"].get<int>();
      ds.config.pixel_noise = c["pixel_noise"].get<double>();
      ds.config.seed = j["seed"].get<std::uint64_t>();
      saw_header = true;
    } else if (type == "scene") {
      require(saw_header, ErrorKind::io, "manifest scene record before header");
      Scene s;
      s.id = j["id"].get<std::int64_t>();
      s.file = j["file"].get<std::string>();
      for (const json& o : j["objects"])
        s.objects.push_back({box_from_json(o["box"]), o["class"].get<int>()});
      s.image = read_png((fs::path(dir) / s.file).string());
      const std::string split = j["split"].get<std::string>();
      if (split == "train")
        ds.train.push_back(std::move(s));
      else if (split == "test")
        ds.test.push_back(std::move(s));
      else if (split == "bank")
        ds.bank.push_back(std::move(s));
      else
        fail(ErrorKind::io, "manifest: unknown split " + split);
    } else if (type == "query") {
      require(saw_header, ErrorKind::io, "manifest query record before header");
      QueryPatch p;
      p.class_id = j["class"].get<int>();
      p.scene_id = j["scene_id"].get<std::int64_t>();
      const auto rect = j["rect"].get<std::vector<int>>();
      require(rect.size() == 4, ErrorKind::io, "manifest: malformed query rect");
      std::copy(rect.begin(), rect.end(), p.rect.begin());
      p.file = j["file"].get<std::string>();
      p.image = read_png((fs::path(dir) / p.file).string());
      ds.query_bank.push_back(std::move(p));
    } else {
      fail(ErrorKind::io, "manifest: unknown record type '" + type + "'");
    }
  }
  require(saw_header, ErrorKind::io, "manifest has no header record");
  return ds;
}

std::optional<Episode> sample_training_episode(const Scene& scene, const std::vector<Scene>& pool,
                                               const ClassSplit& split, int query_size, Rng& rng,
                                               bool cross_image) {
  // Distinct base classes present, ascending for a stable draw order.
  std::vector<int> present;
  for (const Annotation& a : scene.objects)
    if (std::find(split.base.begin(), split.base.end(), a.class_id) != split.base.end() &&
        std::find(present.begin(), present.end(), a.class_id) == present.end())
      present.push_back(a.class_id);
  if (present.empty()) return std::nullopt;
  std::sort(present.begin(), present.end());
  const int positive = present[rng.below(present.size())];

  const Scene* source = &scene;
  if (cross_image) {
    std::vector<const Scene*> donors;
    for (const Scene& s : pool)
      if (s.id != scene.id)
        for (const Annotation& a : s.objects)
          if (a.class_id == positive) {
            donors.push_back(&s);
            break;
          }
    if (!donors.empty()) source = donors[rng.below(donors.size())];
  }

  std::vector<const Annotation*> instances;
  for (const Annotation& a : source->objects)
    if (a.class_id == positive) instances.push_back(&a);
  const Annotation* pick = instances[rng.below(instances.size())];

  Episode ep;
  ep.target = &scene;
  ep.positive_class = positive;
  const auto rect = query_crop_rect(pick->box, source->image.width, source->image.height);
  ep.queries.push_back(render_query_patch(source->image, rect, query_size));
  return ep;
}

QueryBankView::QueryBankView(const Dataset& ds) : per_class_(kClassUniverse) {
  for (const QueryPatch& p : ds.query_bank)
    per_class_[static_cast<std::size_t>(p.class_id)].push_back(&p);
}

const std::vector<const QueryPatch*>& QueryBankView::patches_for(int class_id) const {
  require(class_id >= 0 && class_id < static_cast<int>(per_class_.size()), ErrorKind::input,
          "query bank: class id out of range");
  return per_class_[static_cast<std::size_t>(class_id)];
}

std::vector<Episode> build_eval_episodes(const Scene& scene, const QueryBankView& bank,
                                         const std::vector<int>& classes, int k) {
  require(k >= 1, ErrorKind::config, "build_eval_episodes: k must be >= 1");
  std::vector<Episode> episodes;
  for (int cls : classes) {
    bool present = false;
    for (const Annotation& a : scene.objects)
      if (a.class_id == cls) {
        present = true;
        break;
      }
    if (!present) continue;
    const auto& patches = bank.patches_for(cls);
    require(static_cast<int>(patches.size()) >= k, ErrorKind::eval,
            "query bank for class " + std::to_string(cls) + " has " +
                std::to_string(patches.size()) + " patches, need " + std::to_string(k));
    std::vector<int> order(patches.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
    Rng rng(static_cast<std::uint64_t>(scene.id));
    rng.shuffle(order);
    for (int i = 0; i < k; ++i) {
      Episode ep;
      ep.target = &scene;
      ep.positive_class = cls;
      ep.queries.push_back(patches[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])]->image);
      episodes.push_back(std::move(ep));
    }
  }
  return episodes;
}

}  // namespace bspg
