/*
 * Copyright 2026 The srltrace Authors.
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

#include <cstddef>
#include <filesystem>
#include <initializer_list>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace srl::io {

// Whole-file read; throws MissingInputError when the path does not exist.
std::string read_file(const std::filesystem::path& path);

// Writes via a sibling temp file and rename(2), creating parent directories.
void write_file_atomic(const std::filesystem::path& path,
                       std::string_view content);

std::string sha256_hex(std::string_view bytes);

// Throws MissingInputError unless `path` exists.
void require_exists(const std::filesystem::path& path);

// A parsed CSV document with a header row. Fields follow RFC 4180 quoting.
class CsvTable {
 public:
  static CsvTable parse(std::string_view text);
  static CsvTable load(const std::filesystem::path& path);

  const std::vector<std::string>& header() const { return header_; }
  const std::vector<std::vector<std::string>>& rows() const { return rows_; }
  std::size_t size() const { return rows_.size(); }

  // Column index by name; throws ValidationError when absent.
  std::size_t column(std::string_view name) const;
  // Throws ValidationError naming the first missing column.
  void require_columns(std::initializer_list<std::string_view> names) const;
  const std::string& at(std::size_t row, std::string_view name) const;

 private:
  std::vector<std::string> header_;
  std::vector<std::vector<std::string>> rows_;
  std::unordered_map<std::string, std::size_t> index_;
};

// Row-at-a-time CSV builder.
class CsvWriter {
 public:
  explicit CsvWriter(std::vector<std::string> header);
  void add_row(const std::vector<std::string>& fields);
  const std::string& str() const { return out_; }

 private:
  std::size_t width_;
  std::string out_;
};

std::string csv_escape(std::string_view field);
// Escapes &, <, >, " and ' for HTML text and attribute values.
std::string html_escape(std::string_view text);

// Shortest round-trippable decimal for a double ("%.17g" trimmed).
std::string format_double(double value);
double parse_double(std::string_view text);
long long parse_int(std::string_view text);

}  // namespace srl::io
