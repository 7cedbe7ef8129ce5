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

#include "bspg/config.hpp"

#include <cerrno>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <sstream>

#include "bspg/errors.hpp"
#include "bspg/prior_guidance.hpp"

namespace bspg {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  std::size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

const ConfigKey* find_key(const std::string& name) {
  for (const ConfigKey& k : config_schema())
    if (name == k.name) return &k;
  return nullptr;
}

bool parse_integer(const std::string& v, std::int64_t& out) {
  if (v.empty()) return false;
  errno = 0;
  char* end = nullptr;
  const long long x = std::strtoll(v.c_str(), &end, 10);
  if (errno != 0 || end != v.c_str() + v.size()) return false;
  out = x;
  return true;
}

bool parse_number(const std::string& v, double& out) {
  if (v.empty()) return false;
  errno = 0;
  char* end = nullptr;
  const double x = std::strtod(v.c_str(), &end);
  if (errno != 0 || end != v.c_str() + v.size()) return false;
  out = x;
  return true;
}

bool parse_flag(const std::string& v, bool& out) {
  if (v == "1" || v == "true") {
    out = true;
    return true;
  }
  if (v == "0" || v == "false") {
    out = false;
    return true;
  }
  return false;
}

bool choice_ok(const ConfigKey& key, const std::string& v) {
  std::stringstream ss(key.choices);
  std::string item;
  while (std::getline(ss, item, '|'))
    if (item == v) return true;
  return false;
}

void check_value(const ConfigKey& key, const std::string& value) {
  switch (key.kind) {
    case ConfigKind::integer: {
      std::int64_t x;
      require(parse_integer(value, x), ErrorKind::config,
              std::string(key.name) + " expects an integer, got '" + value + "'");
      const double d = static_cast<double>(x);
      const bool lo = key.exclusive_min ? d > key.min : d >= key.min;
      const bool hi = key.exclusive_max ? d < key.max : d <= key.max;
      require(lo && hi, ErrorKind::config, std::string(key.name) + " out of range: " + value);
      return;
    }
    case ConfigKind::number: {
      double x;
      require(parse_number(value, x), ErrorKind::config,
              std::string(key.name) + " expects a number, got '" + value + "'");
      const bool lo = key.exclusive_min ? x > key.min : x >= key.min;
      const bool hi = key.exclusive_max ? x < key.max : x <= key.max;
      require(lo && hi, ErrorKind::config, std::string(key.name) + " out of range: " + value);
      return;
    }
    case ConfigKind::flag: {
      bool x;
      require(parse_flag(value, x), ErrorKind::config,
              std::string(key.name) + " expects 0/1/true/false, got '" + value + "'");
      return;
    }
    case ConfigKind::choice:
      require(choice_ok(key, value), ErrorKind::config,
              std::string(key.name) + " must be one of {" + key.choices + "}, got '" + value + "'");
      return;
  }
}

}  // namespace

const std::vector<ConfigKey>& config_schema() {
  static const std::vector<ConfigKey> schema = {
      // Detection-time knobs.
      {"alpha", ConfigKind::number, "0.7", 0, 1, true, true, "",
       "base-object confidence threshold"},
      {"proposals", ConfigKind::integer, "128", 1, 4096, false, false, "",
       "proposals per episode (K)"},
      {"strategy", ConfigKind::choice, "mult-roi", 0, 0, false, false,
       "mult-roi|mult-rpn|cat-roi|cat-rpn", "prior guidance strategy"},
      {"bcs", ConfigKind::flag, "1", 0, 0, false, false, "", "enable base-class suppression"},
      {"pg", ConfigKind::flag, "1", 0, 0, false, false, "", "enable prior guidance"},
      {"score_threshold", ConfigKind::number, "0.05", 0, 1, false, true, "",
       "detection score floor"},
      {"nms_iou", ConfigKind::number, "0.5", 0, 1, true, true, "", "detection NMS overlap"},

      // Stage-1 optimization.
      {"epochs", ConfigKind::integer, "10", 1, 100000, false, false, "", "stage-1 epochs"},
      {"batch", ConfigKind::integer, "4", 1, 1024, false, false, "", "stage-1 images per step"},
      {"lr", ConfigKind::number, "0.005", 0, kInf, true, true, "", "stage-1 learning rate"},
      {"lr_decay", ConfigKind::number, "0.1", 0, 1, true, false, "", "stage-1 lr decay factor"},
      {"lr_step", ConfigKind::integer, "4", 1, 100000, false, false, "",
       "epochs between lr decays"},
      {"momentum", ConfigKind::number, "0.9", 0, 1, false, true, "", "SGD momentum"},

      // Stage-2 optimization.
      {"novel_steps", ConfigKind::integer, "500", 1, 10000000, false, false, "",
       "stage-2 optimizer steps"},
      {"novel_batch", ConfigKind::integer, "4", 1, 1024, false, false, "",
       "episodes per stage-2 step"},
      {"novel_lr", ConfigKind::number, "0.002", 0, kInf, true, true, "",
       "stage-2 learning rate"},
      {"lambda1", ConfigKind::number, "0.5", 0, kInf, false, true, "",
       "coarse classification loss weight"},
      {"lambda2", ConfigKind::number, "0.5", 0, kInf, false, true, "",
       "suppressed classification loss weight"},
      {"init_novel_from_base", ConfigKind::flag, "1", 0, 0, false, false, "",
       "warm-start the novel branch from base weights"},
      {"cross_image_queries", ConfigKind::flag, "0", 0, 0, false, false, "",
       "sample training queries from a different scene"},

      // Label assignment.
      {"fg_iou", ConfigKind::number, "0.5", 0, 1, true, true, "", "foreground IoU threshold"},
      {"rpn_pos_iou", ConfigKind::number, "0.7", 0, 1, true, true, "",
       "RPN positive anchor IoU"},
      {"rpn_neg_iou", ConfigKind::number, "0.3", 0, 1, true, true, "",
       "RPN negative anchor IoU"},
      {"rpn_batch", ConfigKind::integer, "128", 1, 100000, false, false, "",
       "sampled anchors per image"},
      {"rpn_max_pos", ConfigKind::integer, "64", 1, 100000, false, false, "",
       "max positive anchors per image"},
      {"roi_batch", ConfigKind::integer, "64", 1, 100000, false, false, "",
       "sampled RoIs per stage-1 image"},
      {"roi_fg_fraction", ConfigKind::number, "0.25", 0, 1, true, false, "",
       "foreground share of sampled RoIs"},

      // Evaluation protocol.
      {"eval_queries", ConfigKind::integer, "5", 1, 64, false, false, "",
       "queries per evaluation episode (k)"},
      {"eval_score_merge", ConfigKind::choice, "detections", 0, 0, false, false,
       "detections|ap", "average matched detection scores, or average AP over runs"},
      {"sweep_retrain", ConfigKind::flag, "0", 0, 0, false, false, "",
       "retrain per alpha during sweep-alpha"},

      {"seed", ConfigKind::integer, "0", 0, 9.2e18, false, false, "", "master run seed"},
  };
  return schema;
}

Config::Config() {
  for (const ConfigKey& k : config_schema()) {
    values_[k.name] = k.preset;
    overridden_[k.name] = false;
  }
}

Config Config::load(const std::string& path) {
  std::ifstream in(path);
  require(in.good(), ErrorKind::io, "cannot open config file " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

Config Config::parse(const std::string& text) {
  Config cfg;
  std::stringstream ss(text);
  std::string line;
  int lineno = 0;
  while (std::getline(ss, line)) {
    ++lineno;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const std::size_t eq = t.find('=');
    require(eq != std::string::npos, ErrorKind::config,
            "config line " + std::to_string(lineno) + " is not key = value: '" + t + "'");
    cfg.set(trim(t.substr(0, eq)), trim(t.substr(eq + 1)));
  }
  return cfg;
}

void Config::set(const std::string& key, const std::string& value) {
  const ConfigKey* k = find_key(key);
  require(k != nullptr, ErrorKind::config, "unknown config key '" + key + "'");
  check_value(*k, value);
  values_[key] = value;
  overridden_[key] = true;
}

bool Config::is_default(const std::string& key) const {
  auto it = overridden_.find(key);
  require(it != overridden_.end(), ErrorKind::config, "unknown config key '" + key + "'");
  return !it->second;
}

const std::string& Config::text(const std::string& key) const {
  auto it = values_.find(key);
  require(it != values_.end(), ErrorKind::config, "unknown config key '" + key + "'");
  return it->second;
}

double Config::number(const std::string& key) const {
  double x;
  require(parse_number(text(key), x), ErrorKind::config, key + " is not numeric");
  return x;
}

std::int64_t Config::integer(const std::string& key) const {
  std::int64_t x;
  require(parse_integer(text(key), x), ErrorKind::config, key + " is not an integer");
  return x;
}

bool Config::flag(const std::string& key) const {
  bool x;
  require(parse_flag(text(key), x), ErrorKind::config, key + " is not a flag");
  return x;
}

std::string Config::serialize() const {
  std::string out;
  for (const auto& [key, value] : values_) {  // std::map keeps keys sorted
    out += key;
    out += " = ";
    out += value;
    out += "\n";
  }
  return out;
}

void Config::save(const std::string& path) const {
  std::ofstream out(path, std::ios::trunc);
  require(out.good(), ErrorKind::io, "cannot write config file " + path);
  out << serialize();
}

TrainConfig Config::train() const {
  TrainConfig tc;
  tc.epochs = static_cast<int>(integer("epochs"));
  tc.batch = static_cast<int>(integer("batch"));
  tc.lr = static_cast<float>(number("lr"));
  tc.lr_decay = static_cast<float>(number("lr_decay"));
  tc.lr_step = static_cast<int>(integer("lr_step"));
  tc.momentum = static_cast<float>(number("momentum"));
  tc.novel_steps = static_cast<int>(integer("novel_steps"));
  tc.novel_batch = static_cast<int>(integer("novel_batch"));
  tc.novel_lr = static_cast<float>(number("novel_lr"));
  tc.lambda1 = static_cast<float>(number("lambda1"));
  tc.lambda2 = static_cast<float>(number("lambda2"));
  tc.init_novel_from_base = flag("init_novel_from_base");
  tc.cross_image_queries = flag("cross_image_queries");
  tc.fg_iou = static_cast<float>(number("fg_iou"));
  tc.rpn_pos_iou = static_cast<float>(number("rpn_pos_iou"));
  tc.rpn_neg_iou = static_cast<float>(number("rpn_neg_iou"));
  tc.rpn_batch = static_cast<int>(integer("rpn_batch"));
  tc.rpn_max_pos = static_cast<int>(integer("rpn_max_pos"));
  tc.roi_batch = static_cast<int>(integer("roi_batch"));
  tc.roi_fg_fraction = static_cast<float>(number("roi_fg_fraction"));
  tc.seed = static_cast<std::uint64_t>(integer("seed"));
  return tc;
}

ModelConfig Config::model(const GenConfig& data) const {
  ModelConfig mc;
  mc.image_size = data.image_size;
  mc.query_size = data.query_size;
  mc.base_class_count = data.base_classes;
  mc.proposal_count = static_cast<int>(integer("proposals"));
  mc.alpha = static_cast<float>(number("alpha"));
  mc.strategy = parse_guidance(text("strategy"));
  mc.bcs_enabled = flag("bcs");
  mc.pg_enabled = flag("pg");
  mc.score_threshold = static_cast<float>(number("score_threshold"));
  mc.nms_iou = static_cast<float>(number("nms_iou"));
  return mc;
}

}  // namespace bspg
