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

#include <stdexcept>
#include <string>

namespace bspg {

/// Machine-parsable error categories; the CLI prints them verbatim.
enum class ErrorKind {
  config,  // invalid configuration value or unknown key
  input,   // bad runtime input (non-finite pixels, empty list, ...)
  shape,   // tensor/box dimension mismatch
  state,   // missing prerequisite (e.g. checkpoint not trained yet)
  eval,    // evaluation protocol violation (e.g. empty query bank)
  io,      // file system / serialization failure
  usage,   // command line misuse
};

inline const char* to_string(ErrorKind k) {
  switch (k) {
    case ErrorKind::config: return "config-error";
    case ErrorKind::input: return "input-error";
    case ErrorKind::shape: return "shape-error";
    case ErrorKind::state: return "state-error";
    case ErrorKind::eval: return "eval-error";
    case ErrorKind::io: return "io-error";
    case ErrorKind::usage: return "usage-error";
  }
  return "error";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) {
  throw Error(kind, what);
}

inline void require(bool cond, ErrorKind kind, const std::string& what) {
  if (!cond) fail(kind, what);
}

}  // namespace bspg
