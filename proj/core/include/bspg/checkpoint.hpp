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

#include "bspg/detector.hpp"
#include "bspg/tensor.hpp"
#include "bspg/version.hpp"

namespace bspg {

// stage: 0 untrained, 1 base detector trained, 2 episodic fine-tune done.
struct CheckpointMeta {
  std::uint32_t format_version = kCheckpointVersion;
  std::uint32_t stage = 0;
  std::uint64_t seed = 0;
  std::uint32_t image_size = 128;   // model geometry, so a checkpoint alone
  std::uint32_t query_size = 64;    // suffices to rebuild the network
  std::uint32_t base_classes = 12;
  std::string config_text;  // resolved flat config the model was built with
};

// Binary container: magic, version, stage, seed, config text, then every
// named parameter tensor in sorted name order (float32 row-major).
void save_checkpoint(const std::string& path, Model<real>& model, const CheckpointMeta& meta);

// Reads the header only; io error on malformed or mismatched files.
CheckpointMeta read_checkpoint_meta(const std::string& path);

// Fills an already-constructed model. Every model parameter must be present
// with matching shape; extras or gaps are state errors. Sets
// model.base_trained from the stage field and returns the header.
CheckpointMeta load_checkpoint(const std::string& path, Model<real>& model);

// Per-parameter FNV-1a checksums over raw float bytes, sorted by name.
// Bit-level frozen-weight comparisons are done on these.
std::vector<std::pair<std::string, std::uint64_t>> param_checksums(Model<real>& model);

}  // namespace bspg
