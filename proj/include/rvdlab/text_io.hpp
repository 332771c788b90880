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

#include <string>
#include <utility>
#include <vector>

#include "rvdlab/common.hpp"

namespace rvd {

// Line-oriented `key value...` text records, the format used by sequence
// sidecars, noise-parameter tables, ISP configs and training configs.
// '#' starts a comment; blank lines are skipped; keys may repeat (order kept).
using KvRecords = std::vector<std::pair<std::string, std::string>>;

KvRecords parse_kv_text(const std::string& text, const std::string& origin);
KvRecords read_kv_file(const std::string& path);
void write_kv_file(const std::string& path, const KvRecords& records);

// Lookup helpers. `find_value` returns false when the key is absent;
// `require_value` raises a metadata error instead.
bool find_value(const KvRecords& records, const std::string& key, std::string* out);
std::string require_value(const KvRecords& records, const std::string& key,
                          const std::string& origin = "record");

double parse_double(const std::string& text, const std::string& what = "value");
long parse_long(const std::string& text, const std::string& what = "value");
std::vector<std::string> split_ws(const std::string& text);
std::vector<double> parse_doubles(const std::string& text, const std::string& what = "value");

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& text);

std::string format_double(double v);  // round-trippable, compact

}  // namespace rvd
