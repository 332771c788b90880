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

#include "rvdlab/common.hpp"

namespace rvd {

const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::dimension: return "dimension";
    case ErrorKind::pattern: return "pattern";
    case ErrorKind::state: return "state";
    case ErrorKind::parameter: return "parameter";
    case ErrorKind::gap: return "gap";
    case ErrorKind::consistency: return "consistency";
    case ErrorKind::metadata: return "metadata";
    case ErrorKind::insufficient_data: return "insufficient_data";
    case ErrorKind::calibration_quality: return "calibration_quality";
    case ErrorKind::configuration: return "configuration";
    case ErrorKind::pyramid: return "pyramid";
    case ErrorKind::dependency: return "dependency";
    case ErrorKind::io: return "io";
  }
  return "unknown";
}

}  // namespace rvd
