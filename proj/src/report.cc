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

#include "dentlabel/report.h"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <set>

#include "dentlabel/error.h"
#include "dentlabel/io.h"

namespace dentlabel {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

bool is_digit(char c) { return c >= '0' && c <= '9'; }

// Non-ASCII bytes count as word characters so UTF-8 letters glue to digits.
bool is_word_char(char c) {
  const auto u = static_cast<unsigned char>(c);
  return std::isalnum(u) || u >= 0x80 || c == '_';
}

}  // namespace

FdiTooth::FdiTooth(int code) : code_(code) {
  if (!is_valid(code)) {
    fail(ErrorCode::kInvalidFdiCode, "invalid FDI code " + std::to_string(code));
  }
}

bool FdiTooth::is_valid(int code) {
  if (code < 11 || code > 99) return false;
  const int quadrant = code / 10;
  const int position = code % 10;
  if (quadrant >= 1 && quadrant <= 4) return position >= 1 && position <= 8;
  if (quadrant >= 5 && quadrant <= 8) return position >= 1 && position <= 5;
  return false;
}

std::optional<FdiTooth> FdiTooth::from_text(std::string_view text) {
  if (text.size() != 2 || !is_digit(text[0]) || !is_digit(text[1])) return std::nullopt;
  const int code = (text[0] - '0') * 10 + (text[1] - '0');
  if (!is_valid(code)) return std::nullopt;
  return FdiTooth(code);
}

std::string FdiTooth::text() const { return std::to_string(code_); }

FdiTooth validate_fdi(int code) { return FdiTooth(code); }

ToothScan scan_teeth(std::string_view s) {
  ToothScan scan;
  std::set<int> seen;
  size_t i = 0;
  while (i < s.size()) {
    if (!is_word_char(s[i])) {
      ++i;
      continue;
    }
    size_t end = i;
    while (end < s.size() && is_word_char(s[end])) ++end;
    const std::string_view token = s.substr(i, end - i);
    const bool two_digits = token.size() == 2 && is_digit(token[0]) && is_digit(token[1]);
    // "1.25" or "12,5": the digits belong to a decimal number.
    const bool glued_before = i >= 2 && (s[i - 1] == '.' || s[i - 1] == ',') && is_digit(s[i - 2]);
    const bool glued_after =
        end + 1 < s.size() && (s[end] == '.' || s[end] == ',') && is_digit(s[end + 1]);
    if (two_digits && !glued_before && !glued_after) {
      if (auto tooth = FdiTooth::from_text(token)) {
        if (seen.insert(tooth->code()).second) scan.teeth.push_back(*tooth);
      } else {
        scan.warnings.push_back("two-digit token '" + std::string(token) +
                                "' is not a valid FDI code");
      }
    }
    i = end;
  }
  return scan;
}

std::vector<FdiTooth> tokenize_teeth(std::string_view sentence) {
  return scan_teeth(sentence).teeth;
}

const std::vector<std::string>& PresenceFilter::default_patterns() {
  static const std::vector<std::string> kDefaults = {
      "missing t(ee|oo)th",
      "absen(ce|t)",
      "anodontia",
  };
  return kDefaults;
}

PresenceFilter::PresenceFilter() : PresenceFilter(default_patterns()) {}

PresenceFilter::PresenceFilter(std::vector<std::string> patterns)
    : sources_(std::move(patterns)) {
  if (sources_.empty()) {
    fail(ErrorCode::kConfigError, "presence filter needs at least one pattern");
  }
  compiled_.reserve(sources_.size());
  for (const auto& source : sources_) {
    try {
      compiled_.emplace_back(source, std::regex::ECMAScript | std::regex::icase);
    } catch (const std::regex_error& e) {
      fail(ErrorCode::kInvalidPattern, "bad presence pattern '" + source + "': " + e.what());
    }
  }
}

bool PresenceFilter::matches(std::string_view sentence) const {
  for (const auto& re : compiled_) {
    if (std::regex_search(sentence.begin(), sentence.end(), re)) return true;
  }
  return false;
}

bool is_presence_sentence(std::string_view sentence, const std::vector<std::string>& patterns) {
  return PresenceFilter(patterns).matches(sentence);
}

Report parse_report(std::string_view raw_text, const std::string& report_id,
                    const ParseOptions& options) {
  Report report;
  report.report_id = report_id;
  report.image_id = options.image_id.empty() ? report_id : options.image_id;

  std::map<int, int> first_seen;  // topic -> line number
  int line_number = 0;
  size_t pos = 0;
  while (pos <= raw_text.size()) {
    size_t nl = raw_text.find('\n', pos);
    if (nl == std::string_view::npos) nl = raw_text.size();
    const std::string raw_line(raw_text.substr(pos, nl - pos));
    pos = nl + 1;
    ++line_number;
    std::string line = trim(raw_line);
    if (line.empty()) continue;
    // Tolerate a UTF-8 byte order mark on the first line.
    if (line_number == 1 && line.rfind("\xEF\xBB\xBF", 0) == 0) line = trim(line.substr(3));
    if (line.size() < 3 || !is_digit(line[0]) || !is_digit(line[1]) || line[2] != ':') {
      fail(ErrorCode::kMalformedLine, report_id + ": line " + std::to_string(line_number) +
                                          " lacks the 'NN:' topic prefix");
    }
    ReportLine parsed;
    parsed.topic_number = (line[0] - '0') * 10 + (line[1] - '0');
    if (auto [it, inserted] = first_seen.emplace(parsed.topic_number, line_number); !inserted) {
      fail(ErrorCode::kDuplicateTopicNumber,
           report_id + ": topic " + std::to_string(parsed.topic_number) + " on line " +
               std::to_string(line_number) + " already used on line " +
               std::to_string(it->second));
    }
    parsed.text = trim(std::string_view(line).substr(3));
    ToothScan scan = scan_teeth(parsed.text);
    parsed.teeth = std::move(scan.teeth);
    if (options.warnings) {
      for (auto& w : scan.warnings) {
        options.warnings->push_back(report_id + ": line " + std::to_string(line_number) + ": " + w);
      }
    }
    parsed.excluded = options.filter.matches(parsed.text);
    report.lines.push_back(std::move(parsed));
  }
  std::stable_sort(report.lines.begin(), report.lines.end(),
                   [](const ReportLine& a, const ReportLine& b) {
                     return a.topic_number < b.topic_number;
                   });
  return report;
}

std::string format_report(const Report& report) {
  std::string out;
  for (const auto& line : report.lines) {
    if (line.topic_number < 10) out += '0';
    out += std::to_string(line.topic_number);
    out += ": ";
    out += line.text;
    out += '\n';
  }
  return out;
}

json to_json(const Report& report) {
  json lines = json::array();
  for (const auto& line : report.lines) {
    json teeth = json::array();
    for (const auto& t : line.teeth) teeth.push_back(t.code());
    lines.push_back({{"topic", line.topic_number},
                     {"text", line.text},
                     {"teeth", teeth},
                     {"excluded", line.excluded}});
  }
  return {{"report_id", report.report_id}, {"image_id", report.image_id}, {"lines", lines}};
}

Report report_from_json(const json& j) {
  Report report;
  try {
    report.report_id = j.at("report_id").get<std::string>();
    report.image_id = j.at("image_id").get<std::string>();
    for (const auto& jl : j.at("lines")) {
      ReportLine line;
      line.topic_number = jl.at("topic").get<int>();
      line.text = jl.at("text").get<std::string>();
      for (const auto& t : jl.at("teeth")) line.teeth.emplace_back(t.get<int>());
      line.excluded = jl.value("excluded", false);
      report.lines.push_back(std::move(line));
    }
  } catch (const json::exception& e) {
    fail(ErrorCode::kIoError, std::string("bad report record: ") + e.what());
  }
  return report;
}

std::vector<Report> load_corpus(const fs::path& dir, const std::optional<fs::path>& manifest,
                                const PresenceFilter& filter, std::vector<std::string>* warnings) {
  std::map<std::string, std::string> image_of;
  if (manifest) {
    const json m = read_json_file(*manifest);
    const json& entries = m.contains("reports") ? m.at("reports") : m;
    if (!entries.is_object()) {
      fail(ErrorCode::kConfigError, manifest->string() + ": expected report_id -> image_id object");
    }
    for (const auto& [report_id, image_id] : entries.items()) {
      image_of[report_id] = image_id.get<std::string>();
    }
  }
  if (!fs::is_directory(dir)) fail(ErrorCode::kIoError, dir.string() + " is not a directory");

  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".txt") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());

  std::vector<Report> corpus;
  corpus.reserve(files.size());
  for (const auto& file : files) {
    const std::string report_id = file.stem().string();
    ParseOptions options{filter, report_id, warnings};
    if (manifest) {
      auto it = image_of.find(report_id);
      if (it == image_of.end()) {
        fail(ErrorCode::kMissingManifestEntry, "report " + report_id + " is not in the corpus manifest");
      }
      options.image_id = it->second;
    }
    corpus.push_back(parse_report(read_text_file(file), report_id, options));
  }
  std::sort(corpus.begin(), corpus.end(),
            [](const Report& a, const Report& b) { return a.report_id < b.report_id; });
  return corpus;
}

void write_corpus_jsonl(const std::vector<Report>& corpus, std::ostream& out) {
  for (const auto& report : corpus) out << to_json(report).dump() << '\n';
}

std::vector<Report> read_corpus_jsonl(std::istream& in) {
  std::vector<Report> corpus;
  for (const auto& j : read_jsonl(in)) corpus.push_back(report_from_json(j));
  return corpus;
}

}  // namespace dentlabel
