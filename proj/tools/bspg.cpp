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

// Single entry point. Every artifact-producing subcommand drops a
// run-manifest JSON next to its outputs; wall-clock in the manifest is the
// only field allowed to differ between identical runs.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "bspg/chart.hpp"
#include "bspg/checkpoint.hpp"
#include "bspg/config.hpp"
#include "bspg/dataset.hpp"
#include "bspg/detector.hpp"
#include "bspg/errors.hpp"
#include "bspg/eval.hpp"
#include "bspg/hashing.hpp"
#include "bspg/image.hpp"
#include "bspg/png_io.hpp"
#include "bspg/run_manifest.hpp"
#include "bspg/training.hpp"
#include "bspg/version.hpp"

namespace {

using nlohmann::json;
using namespace bspg;

struct WallClock {
  std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  }
};

std::string join_argv(int argc, char** argv) {
  std::string s;
  for (int i = 0; i < argc; ++i) {
    if (i) s += ' ';
    s += argv[i];
  }
  return s;
}

std::string dataset_manifest_hash(const std::string& dir) {
  return hash_hex(hash_file(dir + "/manifest.jsonl"));
}

// Rebuilds the exact network a checkpoint was trained with; geometry rides
// in the checkpoint header so no dataset is needed.
Model<real> model_from_checkpoint(const std::string& path, CheckpointMeta* meta_out) {
  CheckpointMeta meta = read_checkpoint_meta(path);
  Config cfg = Config::parse(meta.config_text);
  GenConfig g;
  g.image_size = static_cast<int>(meta.image_size);
  g.query_size = static_cast<int>(meta.query_size);
  g.base_classes = static_cast<int>(meta.base_classes);
  Model<real> m(cfg.model(g), meta.seed);
  load_checkpoint(path, m);
  if (meta_out) *meta_out = meta;
  return m;
}

Config config_from_flags(const std::string& config_path, std::optional<std::int64_t> seed) {
  Config cfg = config_path.empty() ? Config() : Config::load(config_path);
  if (seed) cfg.set("seed", std::to_string(*seed));
  return cfg;
}

Tensor<real> load_image_tensor(const std::string& path, int side) {
  Image img = read_png(path);
  if (img.width != side || img.height != side) img = resize_bilinear(img, side, side);
  return image_to_tensor<real>(img);
}

void write_report_lines(const std::string& path, const EvalReport& r) {
  std::ofstream out(path, std::ios::binary);
  require(out.good(), ErrorKind::io, "cannot write report " + path);
  json head{{"type", "summary"},
            {"version", r.version},
            {"alpha", r.alpha},
            {"strategy", r.strategy},
            {"bcs", r.bcs},
            {"pg", r.pg},
            {"k", r.k},
            {"seed", r.seed},
            {"mean_ap", r.mean_ap},
            {"mean_ap50", r.mean_ap50},
            {"mean_ap75", r.mean_ap75}};
  out << head.dump() << "\n";
  for (const ClassMetrics& c : r.per_class) {
    json line{{"type", "class"},      {"class_id", c.class_id}, {"class_name", c.class_name},
              {"ap", c.ap},           {"ap50", c.ap50},         {"ap75", c.ap75},
              {"gt_count", c.gt_count}, {"det_count", c.det_count}};
    out << line.dump() << "\n";
  }
  require(out.good(), ErrorKind::io, "short write to " + path);
}

EvalProtocol protocol_from(const Config& cfg, int k) {
  EvalProtocol p;
  p.k = k;
  p.merge_detections = cfg.text("eval_score_merge") == "detections";
  return p;
}

// --- subcommand bodies -----------------------------------------------------

struct GenerateArgs {
  std::string out;
  std::int64_t seed = 0;
  int base = 12, novel = 4;
  int train_scenes = 2000, test_scenes = 300, bank_scenes = 120;
  int image_size = 128, query_size = 64;
};

int run_generate(const GenerateArgs& a, const std::string& command) {
  WallClock wall;
  GenConfig g;
  g.image_size = a.image_size;
  g.query_size = a.query_size;
  g.base_classes = a.base;
  g.novel_classes = a.novel;
  g.train_scenes = a.train_scenes;
  g.test_scenes = a.test_scenes;
  g.bank_scenes = a.bank_scenes;
  g.seed = static_cast<std::uint64_t>(a.seed);
  Dataset ds = generate_dataset(g);
  save_dataset(ds, a.out);

  std::ostringstream cfg;
  cfg << "image_size = " << g.image_size << "\nquery_size = " << g.query_size
      << "\nbase_classes = " << g.base_classes << "\nnovel_classes = " << g.novel_classes
      << "\ntrain_scenes = " << g.train_scenes << "\ntest_scenes = " << g.test_scenes
      << "\nbank_scenes = " << g.bank_scenes << "\nseed = " << g.seed << "\n";
  RunManifest m;
  m.command = command;
  m.config_text = cfg.str();
  m.seed = g.seed;
  m.dataset_hash = dataset_manifest_hash(a.out);
  m.code_version = version_string();
  m.wall_clock_seconds = wall.seconds();
  m.write(a.out + "/run_manifest.json");
  std::cout << "dataset written to " << a.out << " (" << ds.train.size() << " train, "
            << ds.test.size() << " test, " << ds.query_bank.size() << " bank patches)\n";
  return 0;
}

struct TrainArgs {
  std::string data, config, out, log, base_ckpt;
  std::optional<std::int64_t> seed;
};

int run_train_base(const TrainArgs& a, const std::string& command) {
  WallClock wall;
  Dataset ds = load_dataset(a.data);
  Config cfg = config_from_flags(a.config, a.seed);
  TrainConfig tc = cfg.train();
  Model<real> model(cfg.model(ds.config), tc.seed);
  const std::string log = a.log.empty() ? a.out + ".log.jsonl" : a.log;
  train_base(model, ds, tc, log);

  CheckpointMeta meta;
  meta.stage = 1;
  meta.seed = tc.seed;
  meta.config_text = cfg.serialize();
  save_checkpoint(a.out, model, meta);

  RunManifest m;
  m.command = command;
  m.config_text = cfg.serialize();
  m.seed = tc.seed;
  m.dataset_hash = dataset_manifest_hash(a.data);
  m.checkpoint_hashes.emplace_back("out", hash_hex(hash_file(a.out)));
  m.code_version = version_string();
  m.wall_clock_seconds = wall.seconds();
  m.write(a.out + ".manifest.json");
  std::cout << "stage-1 checkpoint written to " << a.out << "\n";
  return 0;
}

int run_train_novel(const TrainArgs& a, const std::string& command) {
  WallClock wall;
  Dataset ds = load_dataset(a.data);
  Config cfg = config_from_flags(a.config, a.seed);
  TrainConfig tc = cfg.train();
  Model<real> model(cfg.model(ds.config), tc.seed);
  CheckpointMeta base_meta = load_checkpoint(a.base_ckpt, model);
  require(base_meta.stage >= 1, ErrorKind::state,
          "stage-2 training requires stage-1 weights; run train-base first");
  const std::string log = a.log.empty() ? a.out + ".log.jsonl" : a.log;
  train_novel(model, ds, tc, log);

  CheckpointMeta meta;
  meta.stage = 2;
  meta.seed = tc.seed;
  meta.config_text = cfg.serialize();
  save_checkpoint(a.out, model, meta);

  RunManifest m;
  m.command = command;
  m.config_text = cfg.serialize();
  m.seed = tc.seed;
  m.dataset_hash = dataset_manifest_hash(a.data);
  m.checkpoint_hashes.emplace_back("base", hash_hex(hash_file(a.base_ckpt)));
  m.checkpoint_hashes.emplace_back("out", hash_hex(hash_file(a.out)));
  m.code_version = version_string();
  m.wall_clock_seconds = wall.seconds();
  m.write(a.out + ".manifest.json");
  std::cout << "stage-2 checkpoint written to " << a.out << "\n";
  return 0;
}

struct DetectArgs {
  std::string ckpt, target, out;
  std::vector<std::string> queries;
};

int run_detect(const DetectArgs& a, const std::string& command) {
  WallClock wall;
  CheckpointMeta meta;
  Model<real> model = model_from_checkpoint(a.ckpt, &meta);

  Tensor<real> target = load_image_tensor(a.target, model.cfg.image_size);
  std::vector<Tensor<real>> queries;
  for (const std::string& q : a.queries)
    queries.push_back(load_image_tensor(q, model.cfg.query_size));

  EpisodeForward<real> f;
  model.run_episode(target, queries, /*train_mode=*/false, nullptr, f);
  DetectionOutcome<real> out = model.regress_and_nms(f);

  std::ofstream os(a.out, std::ios::binary);
  require(os.good(), ErrorKind::io, "cannot write " + a.out);
  json head{{"type", "header"},
            {"version", kReportVersion},
            {"target", a.target},
            {"queries", a.queries},
            {"alpha", model.cfg.alpha},
            {"proposal_padding", out.proposal_padding}};
  os << head.dump() << "\n";
  for (const Detection<real>& d : out.detections) {
    json line{{"type", "detection"},
              {"box", {d.box.x1, d.box.y1, d.box.x2, d.box.y2}},
              {"score", d.score},
              {"coarse_score", d.yn_fg},
              {"base_conf", d.base_conf},
              {"base_flag", d.base_flag},
              {"similarity", d.similarity},
              {"base_argmax", d.yb_argmax}};
    os << line.dump() << "\n";
  }
  require(os.good(), ErrorKind::io, "short write to " + a.out);

  RunManifest m;
  m.command = command;
  m.config_text = meta.config_text;
  m.seed = meta.seed;
  m.checkpoint_hashes.emplace_back("ckpt", hash_hex(hash_file(a.ckpt)));
  m.code_version = version_string();
  m.wall_clock_seconds = wall.seconds();
  m.write(a.out + ".manifest.json");
  std::cout << out.detections.size() << " detections written to " << a.out << "\n";
  return 0;
}

struct EvalArgs {
  std::string ckpt, data, out;
  int k = 5;
};

int run_eval(const EvalArgs& a, const std::string& command) {
  WallClock wall;
  CheckpointMeta meta;
  Model<real> model = model_from_checkpoint(a.ckpt, &meta);
  Dataset ds = load_dataset(a.data);
  Config cfg = Config::parse(meta.config_text);
  EvalResult res = evaluate(model, ds, protocol_from(cfg, a.k));
  write_report_lines(a.out, res.report);

  RunManifest m;
  m.command = command;
  m.config_text = meta.config_text;
  m.seed = meta.seed;
  m.dataset_hash = dataset_manifest_hash(a.data);
  m.checkpoint_hashes.emplace_back("ckpt", hash_hex(hash_file(a.ckpt)));
  m.code_version = version_string();
  m.wall_clock_seconds = wall.seconds();
  m.write(a.out + ".manifest.json");
  std::printf("mean AP %.4f  AP50 %.4f  AP75 %.4f  (%d classes)\n", res.report.mean_ap,
              res.report.mean_ap50, res.report.mean_ap75,
              static_cast<int>(res.report.per_class.size()));
  return 0;
}

int run_fp_analysis(const EvalArgs& a, const std::string& command) {
  WallClock wall;
  CheckpointMeta meta;
  Model<real> model = model_from_checkpoint(a.ckpt, &meta);
  Dataset ds = load_dataset(a.data);
  Config cfg = Config::parse(meta.config_text);
  EvalResult res = evaluate(model, ds, protocol_from(cfg, a.k));
  FpAnalysis fp = fp_analysis(res.raw, ds);

  std::ofstream os(a.out, std::ios::binary);
  require(os.good(), ErrorKind::io, "cannot write " + a.out);
  json head{{"type", "header"}, {"version", kReportVersion}, {"k", a.k},
            {"alpha", model.cfg.alpha}, {"bcs", model.cfg.bcs_enabled}};
  os << head.dump() << "\n";
  for (const FpCell& c : fp.cells) {
    json line{{"type", "regime"},   {"iou", c.iou_thr},         {"score", c.score_thr},
              {"tp", c.tp},         {"fp", c.fp},               {"base_fp", c.base_fp},
              {"precision", c.precision}};
    os << line.dump() << "\n";
  }
  require(os.good(), ErrorKind::io, "short write to " + a.out);

  RunManifest m;
  m.command = command;
  m.config_text = meta.config_text;
  m.seed = meta.seed;
  m.dataset_hash = dataset_manifest_hash(a.data);
  m.checkpoint_hashes.emplace_back("ckpt", hash_hex(hash_file(a.ckpt)));
  m.code_version = version_string();
  m.wall_clock_seconds = wall.seconds();
  m.write(a.out + ".manifest.json");
  for (const FpCell& c : fp.cells)
    std::printf("IoU>%.2f score>%.2f  TP %d  FP %d  base-FP %d  precision %.4f\n", c.iou_thr,
                c.score_thr, c.tp, c.fp, c.base_fp, c.precision);
  return 0;
}

struct SweepArgs {
  std::string ckpt, data, out;
  int k = 5;
  std::vector<double> values;
};

int run_sweep_alpha(const SweepArgs& a, const std::string& command) {
  WallClock wall;
  CheckpointMeta meta;
  Model<real> model = model_from_checkpoint(a.ckpt, &meta);
  Dataset ds = load_dataset(a.data);
  Config cfg = Config::parse(meta.config_text);
  std::vector<AlphaRow> rows = sweep_alpha(model, ds, protocol_from(cfg, a.k), a.values);

  std::filesystem::create_directories(a.out);
  std::ofstream os(a.out + "/sweep.jsonl", std::ios::binary);
  require(os.good(), ErrorKind::io, "cannot write " + a.out + "/sweep.jsonl");
  ChartSeries ap50{{}, {}, {40, 90, 200}};
  ChartSeries ap{{}, {}, {200, 120, 40}};
  for (const AlphaRow& r : rows) {
    json line{{"type", "alpha"},
              {"alpha", r.alpha},
              {"mean_ap", r.report.mean_ap},
              {"mean_ap50", r.report.mean_ap50},
              {"mean_ap75", r.report.mean_ap75}};
    os << line.dump() << "\n";
    write_report_lines(a.out + "/report_alpha_" + std::to_string(r.alpha).substr(0, 4) + ".jsonl",
                       r.report);
    ap50.xs.push_back(r.alpha);
    ap50.ys.push_back(r.report.mean_ap50);
    ap.xs.push_back(r.alpha);
    ap.ys.push_back(r.report.mean_ap);
  }
  require(os.good(), ErrorKind::io, "short write to sweep.jsonl");
  write_line_chart(a.out + "/sweep_ap50.png", {ap50, ap});

  RunManifest m;
  m.command = command;
  m.config_text = meta.config_text;
  m.seed = meta.seed;
  m.dataset_hash = dataset_manifest_hash(a.data);
  m.checkpoint_hashes.emplace_back("ckpt", hash_hex(hash_file(a.ckpt)));
  m.code_version = version_string();
  m.wall_clock_seconds = wall.seconds();
  m.write(a.out + "/run_manifest.json");
  for (const AlphaRow& r : rows)
    std::printf("alpha %.2f  AP50 %.4f  AP %.4f\n", r.alpha, r.report.mean_ap50, r.report.mean_ap);
  return 0;
}

struct AblateArgs {
  std::string data, base_ckpt, matrix, config, out;
  std::optional<std::int64_t> seed;
  int k = 5;
};

struct AblateCell {
  std::string name;
  std::vector<std::pair<std::string, std::string>> overrides;  // config key -> value
};

std::vector<AblateCell> default_matrix() {
  return {{"baseline", {{"bcs", "0"}, {"pg", "0"}}},
          {"bcs-only", {{"bcs", "1"}, {"pg", "0"}}},
          {"pg-only", {{"bcs", "0"}, {"pg", "1"}}},
          {"full", {{"bcs", "1"}, {"pg", "1"}}}};
}

std::vector<AblateCell> load_matrix(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), ErrorKind::io, "cannot open matrix file " + path);
  json doc;
  try {
    in >> doc;
  } catch (const json::exception& e) {
    fail(ErrorKind::config, "matrix file " + path + ": " + e.what());
  }
  require(doc.is_array() && !doc.empty(), ErrorKind::config,
          "matrix file must hold a non-empty JSON array of cells");
  std::vector<AblateCell> cells;
  for (const json& c : doc) {
    require(c.is_object() && c.contains("name"), ErrorKind::config,
            "every matrix cell needs a \"name\"");
    AblateCell cell;
    cell.name = c.at("name").get<std::string>();
    for (auto it = c.begin(); it != c.end(); ++it) {
      if (it.key() == "name") continue;
      const json& v = it.value();
      std::string s;
      if (v.is_string())
        s = v.get<std::string>();
      else if (v.is_boolean())
        s = v.get<bool>() ? "1" : "0";
      else if (v.is_number_integer())
        s = std::to_string(v.get<std::int64_t>());
      else if (v.is_number())
        s = std::to_string(v.get<double>());
      else
        fail(ErrorKind::config, "matrix cell '" + cell.name + "': unsupported value for " + it.key());
      cell.overrides.emplace_back(it.key(), s);
    }
    cells.push_back(std::move(cell));
  }
  return cells;
}

int run_ablate(const AblateArgs& a, const std::string& command) {
  WallClock wall;
  Dataset ds = load_dataset(a.data);
  std::vector<AblateCell> cells = a.matrix.empty() ? default_matrix() : load_matrix(a.matrix);
  std::filesystem::create_directories(a.out);

  std::ofstream table(a.out + "/ablation.jsonl", std::ios::binary);
  require(table.good(), ErrorKind::io, "cannot write ablation table");
  for (const AblateCell& cell : cells) {
    Config cfg = config_from_flags(a.config, a.seed);
    for (const auto& [k, v] : cell.overrides) cfg.set(k, v);
    TrainConfig tc = cfg.train();
    Model<real> model(cfg.model(ds.config), tc.seed);
    CheckpointMeta base_meta = load_checkpoint(a.base_ckpt, model);
    require(base_meta.stage >= 1, ErrorKind::state,
            "ablation requires stage-1 weights; run train-base first");
    const std::string ckpt = a.out + "/" + cell.name + ".ckpt";
    train_novel(model, ds, tc, ckpt + ".log.jsonl");
    CheckpointMeta meta;
    meta.stage = 2;
    meta.seed = tc.seed;
    meta.config_text = cfg.serialize();
    save_checkpoint(ckpt, model, meta);

    EvalResult res = evaluate(model, ds, protocol_from(cfg, a.k));
    write_report_lines(a.out + "/" + cell.name + ".report.jsonl", res.report);
    json row{{"type", "cell"},
             {"name", cell.name},
             {"mean_ap", res.report.mean_ap},
             {"mean_ap50", res.report.mean_ap50},
             {"mean_ap75", res.report.mean_ap75}};
    for (const auto& [k, v] : cell.overrides) row[k] = v;
    table << row.dump() << "\n";
    std::printf("%-10s  AP50 %.4f  AP %.4f\n", cell.name.c_str(), res.report.mean_ap50,
                res.report.mean_ap);
  }
  require(table.good(), ErrorKind::io, "short write to ablation table");

  Config cfg = config_from_flags(a.config, a.seed);
  RunManifest m;
  m.command = command;
  m.config_text = cfg.serialize();
  m.seed = cfg.train().seed;
  m.dataset_hash = dataset_manifest_hash(a.data);
  m.checkpoint_hashes.emplace_back("base", hash_hex(hash_file(a.base_ckpt)));
  m.code_version = version_string();
  m.wall_clock_seconds = wall.seconds();
  m.write(a.out + "/run_manifest.json");
  return 0;
}

struct ExportArgs {
  std::string ckpt, data, out;
  int scenes = 8, k = 1;
};

int run_export_priors(const ExportArgs& a, const std::string& command) {
  WallClock wall;
  CheckpointMeta meta;
  Model<real> model = model_from_checkpoint(a.ckpt, &meta);
  Dataset ds = load_dataset(a.data);
  QueryBankView bank(ds);
  std::filesystem::create_directories(a.out);

  const int side = model.cfg.image_size;
  int written = 0;
  const int limit = std::min<int>(a.scenes, static_cast<int>(ds.test.size()));
  for (int si = 0; si < limit; ++si) {
    const Scene& scene = ds.test[static_cast<std::size_t>(si)];
    std::vector<Episode> eps = build_eval_episodes(scene, bank, ds.split.novel, a.k);
    for (const Episode& ep : eps) {
      for (std::size_t qi = 0; qi < ep.queries.size(); ++qi) {
        Tensor<real> t = image_to_tensor<real>(scene.image);
        Tensor<real> q = image_to_tensor<real>(ep.queries[qi]);
        Tensor<real> phi_t = model.extract_high(t);
        Tensor<real> phi_q = model.extract_high(q);
        Tensor<real> raw = prior_from_relation(relation_map(phi_t, phi_q));
        Tensor<real> norm =
            normalize_and_resize(raw, phi_t.dim(1), phi_t.dim(2), side, side);
        std::string stem = a.out + "/scene" + std::to_string(scene.id) + "_class" +
                           std::to_string(ep.positive_class) + "_q" + std::to_string(qi);
        write_png(stem + "_prior.png", gray_to_image(norm));
        write_png(stem + "_target.png", scene.image);
        write_png(stem + "_query.png", ep.queries[qi]);
        ++written;
      }
    }
  }
  require(written > 0, ErrorKind::eval, "no episodes produced any prior map");

  RunManifest m;
  m.command = command;
  m.config_text = meta.config_text;
  m.seed = meta.seed;
  m.dataset_hash = dataset_manifest_hash(a.data);
  m.checkpoint_hashes.emplace_back("ckpt", hash_hex(hash_file(a.ckpt)));
  m.code_version = version_string();
  m.wall_clock_seconds = wall.seconds();
  m.write(a.out + "/run_manifest.json");
  std::cout << written << " prior maps written to " << a.out << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"bspg: one-shot object detection with base-class suppression and prior guidance"};
  app.require_subcommand(1);
  const std::string command = join_argv(argc, argv);

  GenerateArgs gen;
  CLI::App* c_gen = app.add_subcommand("generate-data", "Render a synthetic shape dataset");
  c_gen->add_option("--out", gen.out, "output dataset directory")->required();
  c_gen->add_option("--seed", gen.seed, "generator seed");
  c_gen->add_option("--base", gen.base, "number of base classes");
  c_gen->add_option("--novel", gen.novel, "number of novel classes");
  c_gen->add_option("--train-scenes", gen.train_scenes, "training scene count");
  c_gen->add_option("--test-scenes", gen.test_scenes, "test scene count");
  c_gen->add_option("--bank-scenes", gen.bank_scenes, "query-bank scene count");
  c_gen->add_option("--image-size", gen.image_size, "scene side length in pixels");
  c_gen->add_option("--query-size", gen.query_size, "query patch side length");

  TrainArgs tb;
  CLI::App* c_tb = app.add_subcommand("train-base", "Stage 1: train the base-class detector");
  c_tb->add_option("--data", tb.data, "dataset directory")->required();
  c_tb->add_option("--config", tb.config, "flat key-value config file");
  c_tb->add_option("--out", tb.out, "output checkpoint path")->required();
  c_tb->add_option("--log", tb.log, "training log path (default: <out>.log.jsonl)");
  std::int64_t tb_seed = 0;
  CLI::Option* tb_seed_opt = c_tb->add_option("--seed", tb_seed, "override config seed");

  TrainArgs tn;
  CLI::App* c_tn = app.add_subcommand("train-novel", "Stage 2: episodic novel-branch training");
  c_tn->add_option("--data", tn.data, "dataset directory")->required();
  c_tn->add_option("--base-ckpt", tn.base_ckpt, "stage-1 checkpoint")->required();
  c_tn->add_option("--config", tn.config, "flat key-value config file");
  c_tn->add_option("--out", tn.out, "output checkpoint path")->required();
  c_tn->add_option("--log", tn.log, "training log path (default: <out>.log.jsonl)");
  std::int64_t tn_seed = 0;
  CLI::Option* tn_seed_opt = c_tn->add_option("--seed", tn_seed, "override config seed");

  DetectArgs det;
  CLI::App* c_det = app.add_subcommand("detect", "Detect query objects in one target image");
  c_det->add_option("--ckpt", det.ckpt, "model checkpoint")->required();
  c_det->add_option("--target", det.target, "target image (PNG)")->required();
  c_det->add_option("--query", det.queries, "query image (repeatable)")->required();
  c_det->add_option("--out", det.out, "detections output (JSON lines)")->required();

  EvalArgs ev;
  CLI::App* c_ev = app.add_subcommand("eval", "Evaluate a checkpoint on the test split");
  c_ev->add_option("--ckpt", ev.ckpt, "model checkpoint")->required();
  c_ev->add_option("--data", ev.data, "dataset directory")->required();
  c_ev->add_option("--k", ev.k, "queries per (scene, class)");
  c_ev->add_option("--out", ev.out, "report output (JSON lines)")->required();

  EvalArgs fp;
  CLI::App* c_fp = app.add_subcommand("fp-analysis", "Base-class false-positive breakdown");
  c_fp->add_option("--ckpt", fp.ckpt, "model checkpoint")->required();
  c_fp->add_option("--data", fp.data, "dataset directory")->required();
  c_fp->add_option("--k", fp.k, "queries per (scene, class)");
  c_fp->add_option("--out", fp.out, "analysis output (JSON lines)")->required();

  SweepArgs sw;
  sw.values = {0.5, 0.6, 0.7, 0.8, 0.9};
  CLI::App* c_sw = app.add_subcommand("sweep-alpha", "Re-evaluate one checkpoint across alphas");
  c_sw->add_option("--ckpt", sw.ckpt, "model checkpoint")->required();
  c_sw->add_option("--data", sw.data, "dataset directory")->required();
  c_sw->add_option("--k", sw.k, "queries per (scene, class)");
  c_sw->add_option("--values", sw.values, "alpha values")->delimiter(',');
  c_sw->add_option("--out", sw.out, "output directory")->required();

  AblateArgs ab;
  CLI::App* c_ab = app.add_subcommand("ablate", "Train+eval a matrix of module on/off cells");
  c_ab->add_option("--data", ab.data, "dataset directory")->required();
  c_ab->add_option("--base-ckpt", ab.base_ckpt, "stage-1 checkpoint")->required();
  c_ab->add_option("--matrix", ab.matrix, "JSON cell matrix (default: 4-cell module grid)");
  c_ab->add_option("--config", ab.config, "flat key-value config file");
  c_ab->add_option("--k", ab.k, "queries per (scene, class)");
  c_ab->add_option("--out", ab.out, "output directory")->required();
  std::int64_t ab_seed = 0;
  CLI::Option* ab_seed_opt = c_ab->add_option("--seed", ab_seed, "override config seed");

  ExportArgs ex;
  CLI::App* c_ex = app.add_subcommand("export-prior-maps", "Write normalized prior-map images");
  c_ex->add_option("--ckpt", ex.ckpt, "model checkpoint")->required();
  c_ex->add_option("--data", ex.data, "dataset directory")->required();
  c_ex->add_option("--scenes", ex.scenes, "number of test scenes to export");
  c_ex->add_option("--k", ex.k, "queries per (scene, class)");
  c_ex->add_option("--out", ex.out, "output directory")->required();

  if (argc <= 1) {
    std::cerr << app.help() << "\n";
    std::cerr << "usage-error: a subcommand is required\n";
    return 2;
  }
  if (argv[1][0] != '-') {
    const std::string name = argv[1];
    bool known = false;
    for (const CLI::App* sc : app.get_subcommands([](const CLI::App*) { return true; }))
      if (sc->get_name() == name) known = true;
    if (!known) {
      std::cerr << "usage-error: unknown subcommand '" << name << "'\n";
      return 2;
    }
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::string msg = e.what();
    for (char& ch : msg)
      if (ch == '\n') ch = ' ';
    std::cerr << "usage-error: " << msg << "\n";
    return 2;
  }

  try {
    if (tb_seed_opt->count()) tb.seed = tb_seed;
    if (tn_seed_opt->count()) tn.seed = tn_seed;
    if (ab_seed_opt->count()) ab.seed = ab_seed;
    if (c_gen->parsed()) return run_generate(gen, command);
    if (c_tb->parsed()) return run_train_base(tb, command);
    if (c_tn->parsed()) return run_train_novel(tn, command);
    if (c_det->parsed()) return run_detect(det, command);
    if (c_ev->parsed()) return run_eval(ev, command);
    if (c_fp->parsed()) return run_fp_analysis(fp, command);
    if (c_sw->parsed()) return run_sweep_alpha(sw, command);
    if (c_ab->parsed()) return run_ablate(ab, command);
    if (c_ex->parsed()) return run_export_priors(ex, command);
  } catch (const Error& e) {
    std::cerr << to_string(e.kind()) << ": " << e.what() << "\n";
    return e.kind() == ErrorKind::usage ? 2 : 1;
  } catch (const std::exception& e) {
    std::cerr << "io-error: " << e.what() << "\n";
    return 1;
  }
  std::cerr << "usage-error: unknown subcommand\n";
  return 2;
}
