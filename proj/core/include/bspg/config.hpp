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

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "bspg/dataset.hpp"
#include "bspg/detector.hpp"
#include "bspg/training.hpp"

namespace bspg {

// Flat key=value run configuration. Every key is documented in the schema
// (see config_schema()); unknown keys, type mismatches, and out-of-range
// values raise configuration errors naming the key. Values keep their
// original spelling so serialize/parse round-trips are byte-identical.
class Config {
 public:
  Config();  // all defaults

  static Config load(const std::string& path);
  static Config parse(const std::string& text);

  void set(const std::string& key, const std::string& value);
  bool is_default(const std::string& key) const;

  double number(const std::string& key) const;
  std::int64_t integer(const std::string& key) const;
  bool flag(const std::string& key) const;
  const std::string& text(const std::string& key) const;

  // Canonical resolved form: every key, sorted, one `key = value` per line.
  std::string serialize() const;
  void save(const std::string& path) const;

  TrainConfig train() const;
  // Model assembled against a dataset's geometry and class split.
  ModelConfig model(const GenConfig& data) const;

  const std::map<std::string, std::string>& values() const { return values_; }

 private:
  std::map<std::string, std::string> values_;
  std::map<std::string, bool> overridden_;
};

enum class ConfigKind { integer, number, flag, choice };

struct ConfigKey {
  const char* name;
  ConfigKind kind;
  const char* preset;  // default value literal
  double min, max;     // numeric range, inclusive unless exclusive_* set
  bool exclusive_min, exclusive_max;
  const char* choices;  // '|'-separated for ConfigKind::choice
  const char* doc;
};

const std::vector<ConfigKey>& config_schema();

}  // namespace bspg
