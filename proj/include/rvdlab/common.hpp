// Copyright (c) 2026 rvdlab authors. All rights reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <stdexcept>
#include <string>

namespace rvd {

inline constexpr const char* kVersion = "0.1.0";

// Every failure the library can raise carries one of these kinds, so callers
// (and the CLI) can react to the class of problem instead of parsing text.
enum class ErrorKind {
  dimension,            // shape/size mismatch, odd mosaic dims, bad pyramid dims
  pattern,              // unknown or inconsistent CFA layout
  state,                // operation applied in the wrong object state
  parameter,            // out-of-range scalar argument
  gap,                  // missing frame index in a sequence
  consistency,          // cross-frame/cross-file disagreement
  metadata,             // sidecar/header missing or malformed
  insufficient_data,    // too few frames/exposures to estimate anything
  calibration_quality,  // data present but physically implausible fit
  configuration,        // bad config file / flag combination
  pyramid,              // pyramid level count incompatible with input size
  dependency,           // required model/file not supplied
  io,                   // filesystem read/write failure
};

const char* to_string(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(std::string(to_string(kind)) + ": " + message),
        kind_(kind) {}

  ErrorKind kind() const { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& message) {
  throw Error(kind, message);
}

inline void require(bool condition, ErrorKind kind, const std::string& message) {
  if (!condition) fail(kind, message);
}

}  // namespace rvd
