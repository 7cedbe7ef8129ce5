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
#include <string>
#include <utility>
#include <vector>

namespace bspg {

// Reproducibility record written next to every artifact-producing command's
// outputs (run_manifest.json). A run is reproducible from this file alone:
// command + resolved config + seeds + input hashes pin it down. Wall-clock
// is informational and excluded from bit-identical output comparisons.
struct RunManifest {
  std::string command;
  std::string config_text;  // full resolved flat config
  std::uint64_t seed = 0;
  std::string dataset_hash;  // hex FNV of the dataset manifest, empty if unused
  std::vector<std::pair<std::string, std::string>> checkpoint_hashes;  // (role, hex)
  std::string code_version;
  double wall_clock_seconds = 0.0;

  void write(const std::string& path) const;
};

RunManifest read_run_manifest(const std::string& path);

}  // namespace bspg
