// Copyright 2026 The dentlabel Authors.
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

#ifndef DENTLABEL_IO_H_
#define DENTLABEL_IO_H_

#include <filesystem>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "json.hpp"

namespace dentlabel {

std::string read_text_file(const std::filesystem::path& path);
nlohmann::json read_json_file(const std::filesystem::path& path);

// One JSON document per non-blank line. Throws IoError naming the line.
std::vector<nlohmann::json> read_jsonl(std::istream& in);
std::vector<nlohmann::json> read_jsonl_file(const std::filesystem::path& path);

// Writes through a sibling temporary file and renames it over `path`, so
// readers never observe a half-written artifact.
void write_file_atomic(const std::filesystem::path& path,
                       const std::function<void(std::ostream&)>& writer);
void write_text_atomic(const std::filesystem::path& path, const std::string& text);

// Lowercase hex SHA-256.
std::string sha256_hex(std::string_view data);

std::string trim(std::string_view s);
std::string to_lower(std::string_view s);

}  // namespace dentlabel

#endif  // DENTLABEL_IO_H_
