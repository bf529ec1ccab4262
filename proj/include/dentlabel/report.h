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

#ifndef DENTLABEL_REPORT_H_
#define DENTLABEL_REPORT_H_

#include <compare>
#include <filesystem>
#include <map>
#include <optional>
#include <regex>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

namespace dentlabel {

// A tooth in FDI two-digit notation. Quadrants 1-4 are permanent teeth
// (positions 1-8), quadrants 5-8 are deciduous (positions 1-5).
class FdiTooth {
 public:
  // Throws InvalidFdiCode.
  explicit FdiTooth(int code);

  static bool is_valid(int code);
  // Parses exactly two ASCII digits.
  static std::optional<FdiTooth> from_text(std::string_view text);

  int code() const { return code_; }
  int quadrant() const { return code_ / 10; }
  int position() const { return code_ % 10; }
  bool deciduous() const { return quadrant() >= 5; }
  std::string text() const;

  auto operator<=>(const FdiTooth&) const = default;

 private:
  int code_;
};

FdiTooth validate_fdi(int code);

struct ToothScan {
  std::vector<FdiTooth> teeth;
  // Two-digit tokens that failed FDI validation, e.g. "19".
  std::vector<std::string> warnings;
};

// Standalone two-digit tokens that validate as FDI codes, in order of first
// appearance, deduplicated. Digits that belong to a longer number, a decimal
// or a word are never teeth.
ToothScan scan_teeth(std::string_view sentence);
std::vector<FdiTooth> tokenize_teeth(std::string_view sentence);

// Case-insensitive regular expressions that flag sentences about the presence
// or absence of teeth.
class PresenceFilter {
 public:
  static const std::vector<std::string>& default_patterns();

  PresenceFilter();
  // Throws ConfigError on an empty list, InvalidPattern on a bad expression.
  explicit PresenceFilter(std::vector<std::string> patterns);

  bool matches(std::string_view sentence) const;
  const std::vector<std::string>& patterns() const { return sources_; }

 private:
  std::vector<std::string> sources_;
  std::vector<std::regex> compiled_;
};

bool is_presence_sentence(std::string_view sentence,
                          const std::vector<std::string>& patterns);

struct ReportLine {
  int topic_number = 0;
  std::string text;
  std::vector<FdiTooth> teeth;
  bool excluded = false;

  bool operator==(const ReportLine&) const = default;
};

struct Report {
  std::string report_id;
  std::string image_id;
  std::vector<ReportLine> lines;

  bool operator==(const Report&) const = default;
};

struct ParseOptions {
  PresenceFilter filter;
  std::string image_id;
  // Receives tokenizer warnings prefixed with the line number, if set.
  std::vector<std::string>* warnings = nullptr;
};

// Parses "NN: text" lines. Blank lines are skipped. Throws MalformedLine
// (with the 1-based line number) or DuplicateTopicNumber. Lines are stored
// in ascending topic order.
Report parse_report(std::string_view raw_text, const std::string& report_id,
                    const ParseOptions& options = {});

// Inverse of parse_report for the text part: one "NN: text" line per topic.
std::string format_report(const Report& report);

nlohmann::json to_json(const Report& report);
Report report_from_json(const nlohmann::json& j);

// Reads every *.txt file under `dir` (file stem = report_id) and resolves the
// image id through `manifest` (report_id -> image_id). With no manifest the
// image id equals the report id. Result is ordered by report_id.
std::vector<Report> load_corpus(const std::filesystem::path& dir,
                                const std::optional<std::filesystem::path>& manifest,
                                const PresenceFilter& filter,
                                std::vector<std::string>* warnings = nullptr);

void write_corpus_jsonl(const std::vector<Report>& corpus, std::ostream& out);
std::vector<Report> read_corpus_jsonl(std::istream& in);

}  // namespace dentlabel

#endif  // DENTLABEL_REPORT_H_
