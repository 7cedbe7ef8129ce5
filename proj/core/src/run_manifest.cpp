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

#include "bspg/run_manifest.hpp"

#include <fstream>

#include "json.hpp"

#include "bspg/errors.hpp"
#include "bspg/version.hpp"

namespace bspg {

using json = nlohmann::json;

void RunManifest::write(const std::string& path) const {
  json hashes = json::object();
  for (const auto& [role, hex] : checkpoint_hashes) hashes[role] = hex;
  json j{{"manifest_version", 1},
         {"command", command},
         {"config", config_text},
         {"seed", seed},
         {"dataset_hash", dataset_hash},
         {"checkpoint_hashes", hashes},
         {"code_version", code_version.empty() ? version_string() : code_version},
         {"wall_clock_seconds", wall_clock_seconds}};
  std::ofstream out(path, std::ios::trunc);
  require(out.good(), ErrorKind::io, "cannot write run manifest " + path);
  out << j.dump(2) << "\n";
}

RunManifest read_run_manifest(const std::string& path) {
  std::ifstream in(path);
  require(in.good(), ErrorKind::io, "cannot open run manifest " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    fail(ErrorKind::io, "malformed run manifest " + path + ": " + e.what());
  }
  RunManifest m;
  m.command = j.at("command").get<std::string>();
  m.config_text = j.at("config").get<std::string>();
  m.seed = j.at("seed").get<std::uint64_t>();
  m.dataset_hash = j.at("dataset_hash").get<std::string>();
  for (const auto& [role, hex] : j.at("checkpoint_hashes").items())
    m.checkpoint_hashes.emplace_back(role, hex.get<std::string>());
  m.code_version = j.at("code_version").get<std::string>();
  m.wall_clock_seconds = j.at("wall_clock_seconds").get<double>();
  return m;
}

}  // namespace bspg
