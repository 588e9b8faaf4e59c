/*
 * Copyright 2026 The msprog Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "msprog/error.hpp"
#include "msprog/subject.hpp"

namespace msprog::io {

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw data_error("FILE_NOT_FOUND", "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// Writes via a sibling temporary and rename, so readers never observe a
/// partially written artifact.
inline void write_file_atomic(const std::filesystem::path& path, const std::string& contents) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".incomplete";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorKind::Internal, "WRITE_FAILED", "cannot write " + tmp.string());
    out << contents;
    if (!out) throw Error(ErrorKind::Internal, "WRITE_FAILED", "short write to " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

inline nlohmann::json read_json(const std::filesystem::path& path) {
  const auto text = read_file(path);
  try {
    return nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw config_error("MALFORMED_JSON", path.string() + ": " + e.what());
  }
}

inline void write_json(const std::filesystem::path& path, const nlohmann::json& j) {
  write_file_atomic(path, j.dump(2) + "\n");
}

inline std::vector<std::string> split_lines(const std::string& text) {
  std::vector<std::string> lines;
  std::size_t pos = 0;
  while (pos < text.size()) {
    auto nl = text.find('\n', pos);
    if (nl == std::string::npos) nl = text.size();
    std::string line = text.substr(pos, nl - pos);
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) lines.push_back(std::move(line));
    pos = nl + 1;
  }
  return lines;
}

inline std::string encode_cohort(const Cohort& cohort) {
  std::string out;
  for (const auto& s : cohort) {
    out += encode_subject(s);
    out += '\n';
  }
  return out;
}

inline Cohort decode_cohort(const std::string& text) {
  Cohort cohort;
  std::size_t line_no = 0;
  for (const auto& line : split_lines(text)) {
    ++line_no;
    try {
      cohort.push_back(decode_subject(line));
    } catch (const Error& e) {
      throw Error(e.kind(), e.code(), "line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return cohort;
}

inline Cohort read_cohort(const std::filesystem::path& path) { return decode_cohort(read_file(path)); }

inline void write_cohort(const std::filesystem::path& path, const Cohort& cohort) {
  write_file_atomic(path, encode_cohort(cohort));
}

}  // namespace msprog::io
