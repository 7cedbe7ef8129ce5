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

#include "bspg/checkpoint.hpp"

#include <algorithm>
#include <cstdio>
#include <cstring>
#include <memory>

#include "bspg/errors.hpp"
#include "bspg/hashing.hpp"

namespace bspg {

namespace {

constexpr char kMagic[8] = {'B', 'S', 'P', 'G', 'C', 'K', 'P', 'T'};

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

void write_bytes(std::FILE* f, const void* p, std::size_t n, const std::string& path) {
  require(std::fwrite(p, 1, n, f) == n, ErrorKind::io, "short write to " + path);
}

void read_bytes(std::FILE* f, void* p, std::size_t n, const std::string& path) {
  require(std::fread(p, 1, n, f) == n, ErrorKind::io, "truncated checkpoint " + path);
}

template <typename T>
void write_pod(std::FILE* f, T v, const std::string& path) {
  write_bytes(f, &v, sizeof(T), path);
}

template <typename T>
T read_pod(std::FILE* f, const std::string& path) {
  T v;
  read_bytes(f, &v, sizeof(T), path);
  return v;
}

void write_string(std::FILE* f, const std::string& s, const std::string& path) {
  write_pod<std::uint32_t>(f, static_cast<std::uint32_t>(s.size()), path);
  write_bytes(f, s.data(), s.size(), path);
}

std::string read_string(std::FILE* f, const std::string& path) {
  const std::uint32_t n = read_pod<std::uint32_t>(f, path);
  require(n < (1u << 24), ErrorKind::io, "implausible string length in " + path);
  std::string s(n, '\0');
  read_bytes(f, s.data(), n, path);
  return s;
}

std::vector<Param<real>*> sorted_params(Model<real>& model) {
  std::vector<Param<real>*> ps = model.params();
  std::sort(ps.begin(), ps.end(),
            [](const Param<real>* a, const Param<real>* b) { return a->name < b->name; });
  return ps;
}

CheckpointMeta read_header(std::FILE* f, const std::string& path) {
  char magic[8];
  read_bytes(f, magic, 8, path);
  require(std::memcmp(magic, kMagic, 8) == 0, ErrorKind::io, "not a checkpoint file: " + path);
  CheckpointMeta meta;
  meta.format_version = read_pod<std::uint32_t>(f, path);
  require(meta.format_version == static_cast<std::uint32_t>(kCheckpointVersion), ErrorKind::io,
          "unsupported checkpoint version in " + path);
  meta.stage = read_pod<std::uint32_t>(f, path);
  meta.seed = read_pod<std::uint64_t>(f, path);
  meta.image_size = read_pod<std::uint32_t>(f, path);
  meta.query_size = read_pod<std::uint32_t>(f, path);
  meta.base_classes = read_pod<std::uint32_t>(f, path);
  meta.config_text = read_string(f, path);
  return meta;
}

}  // namespace

void save_checkpoint(const std::string& path, Model<real>& model, const CheckpointMeta& meta) {
  FilePtr f(std::fopen(path.c_str(), "wb"));
  require(f != nullptr, ErrorKind::io, "cannot write checkpoint " + path);
  write_bytes(f.get(), kMagic, 8, path);
  write_pod<std::uint32_t>(f.get(), static_cast<std::uint32_t>(kCheckpointVersion), path);
  write_pod<std::uint32_t>(f.get(), meta.stage, path);
  write_pod<std::uint64_t>(f.get(), meta.seed, path);
  write_pod<std::uint32_t>(f.get(), static_cast<std::uint32_t>(model.cfg.image_size), path);
  write_pod<std::uint32_t>(f.get(), static_cast<std::uint32_t>(model.cfg.query_size), path);
  write_pod<std::uint32_t>(f.get(), static_cast<std::uint32_t>(model.cfg.base_class_count), path);
  write_string(f.get(), meta.config_text, path);

  std::vector<Param<real>*> ps = sorted_params(model);
  write_pod<std::uint32_t>(f.get(), static_cast<std::uint32_t>(ps.size()), path);
  for (const Param<real>* p : ps) {
    write_string(f.get(), p->name, path);
    write_pod<std::uint32_t>(f.get(), static_cast<std::uint32_t>(p->value.rank()), path);
    for (int d = 0; d < p->value.rank(); ++d)
      write_pod<std::uint32_t>(f.get(), static_cast<std::uint32_t>(p->value.dim(d)), path);
    write_bytes(f.get(), p->value.data(), p->value.numel() * sizeof(real), path);
  }
  require(std::fflush(f.get()) == 0, ErrorKind::io, "flush failure on " + path);
}

CheckpointMeta read_checkpoint_meta(const std::string& path) {
  FilePtr f(std::fopen(path.c_str(), "rb"));
  require(f != nullptr, ErrorKind::io, "cannot open checkpoint " + path);
  return read_header(f.get(), path);
}

CheckpointMeta load_checkpoint(const std::string& path, Model<real>& model) {
  FilePtr f(std::fopen(path.c_str(), "rb"));
  require(f != nullptr, ErrorKind::io, "cannot open checkpoint " + path);
  CheckpointMeta meta = read_header(f.get(), path);

  std::vector<Param<real>*> ps = sorted_params(model);
  const std::uint32_t count = read_pod<std::uint32_t>(f.get(), path);
  require(count == ps.size(), ErrorKind::state,
          "checkpoint " + path + " holds " + std::to_string(count) + " tensors, model expects " +
              std::to_string(ps.size()));
  for (Param<real>* p : ps) {
    const std::string name = read_string(f.get(), path);
    require(name == p->name, ErrorKind::state,
            "checkpoint tensor '" + name + "' does not match expected '" + p->name + "'");
    const std::uint32_t rank = read_pod<std::uint32_t>(f.get(), path);
    require(rank == static_cast<std::uint32_t>(p->value.rank()), ErrorKind::state,
            "checkpoint tensor '" + name + "' rank mismatch");
    for (int d = 0; d < p->value.rank(); ++d) {
      const std::uint32_t dim = read_pod<std::uint32_t>(f.get(), path);
      require(dim == static_cast<std::uint32_t>(p->value.dim(d)), ErrorKind::state,
              "checkpoint tensor '" + name + "' shape mismatch");
    }
    read_bytes(f.get(), p->value.data(), p->value.numel() * sizeof(real), path);
  }
  model.base_trained = meta.stage >= 1;
  return meta;
}

std::vector<std::pair<std::string, std::uint64_t>> param_checksums(Model<real>& model) {
  std::vector<std::pair<std::string, std::uint64_t>> out;
  for (const Param<real>* p : sorted_params(model))
    out.emplace_back(p->name, fnv1a64(p->value.data(), p->value.numel() * sizeof(real)));
  return out;
}

}  // namespace bspg
