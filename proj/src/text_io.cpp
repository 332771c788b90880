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

#include "rvdlab/text_io.hpp"

#include <cctype>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace rvd {

namespace {

std::string trim(const std::string& s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

}  // namespace

KvRecords parse_kv_text(const std::string& text, const std::string& origin) {
  KvRecords records;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    auto sep = line.find_first_of(" \t");
    if (sep == std::string::npos) {
      fail(ErrorKind::metadata, origin + ":" + std::to_string(line_no) +
                                    ": key without value: '" + line + "'");
    }
    records.emplace_back(line.substr(0, sep), trim(line.substr(sep + 1)));
  }
  return records;
}

KvRecords read_kv_file(const std::string& path) {
  return parse_kv_text(read_text_file(path), path);
}

void write_kv_file(const std::string& path, const KvRecords& records) {
  std::ostringstream out;
  for (const auto& [key, value] : records) out << key << " " << value << "\n";
  write_text_file(path, out.str());
}

bool find_value(const KvRecords& records, const std::string& key, std::string* out) {
  for (const auto& [k, v] : records) {
    if (k == key) {
      if (out) *out = v;
      return true;
    }
  }
  return false;
}

std::string require_value(const KvRecords& records, const std::string& key,
                          const std::string& origin) {
  std::string value;
  if (!find_value(records, key, &value)) {
    fail(ErrorKind::metadata, origin + ": missing required key '" + key + "'");
  }
  return value;
}

double parse_double(const std::string& text, const std::string& what) {
  try {
    std::size_t pos = 0;
    double v = std::stod(text, &pos);
    if (pos != text.size()) throw std::invalid_argument("trailing");
    return v;
  } catch (const std::exception&) {
    fail(ErrorKind::metadata, what + ": not a number: '" + text + "'");
  }
}

long parse_long(const std::string& text, const std::string& what) {
  try {
    std::size_t pos = 0;
    long v = std::stol(text, &pos);
    if (pos != text.size()) throw std::invalid_argument("trailing");
    return v;
  } catch (const std::exception&) {
    fail(ErrorKind::metadata, what + ": not an integer: '" + text + "'");
  }
}

std::vector<std::string> split_ws(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  std::string token;
  while (in >> token) out.push_back(token);
  return out;
}

std::vector<double> parse_doubles(const std::string& text, const std::string& what) {
  std::vector<double> out;
  for (const auto& token : split_ws(text)) out.push_back(parse_double(token, what));
  return out;
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::io, "cannot open for reading: " + path);
  std::ostringstream out;
  out << in.rdbuf();
  return out.str();
}

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::io, "cannot open for writing: " + path);
  out << text;
  if (!out) fail(ErrorKind::io, "write failed: " + path);
}

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  // Trim to the shortest representation that round-trips.
  for (int prec = 1; prec < 17; ++prec) {
    char probe[64];
    std::snprintf(probe, sizeof(probe), "%.*g", prec, v);
    if (std::stod(probe) == v) return probe;
  }
  return buf;
}

}  // namespace rvd
