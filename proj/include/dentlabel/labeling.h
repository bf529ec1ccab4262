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

#ifndef DENTLABEL_LABELING_H_
#define DENTLABEL_LABELING_H_

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "dentlabel/phrase.h"
#include "dentlabel/report.h"
#include "json.hpp"

namespace dentlabel {

// Normalized variant -> canonical phrase. Canonical names map to themselves.
class SynonymMap {
 public:
  SynonymMap() = default;
  // {"canonical": ["variant", ...], ...}; throws ConfigError when a variant
  // is claimed by two groups.
  static SynonymMap from_json(const nlohmann::json& j);
  static const SynonymMap& shipped();

  const std::string& canonical(const std::string& normalized) const;
  // Variants grouped under `canonical`, including itself.
  std::set<std::string> group(const std::string& canonical) const;

 private:
  std::map<std::string, std::string> to_canonical_;
};

using FrequencyTable = std::map<std::string, long>;

// Counts canonical phrases over non-excluded lines. Tooth mentions are skipped.
FrequencyTable count_phrases(const std::vector<ExtractedReport>& corpus, const SynonymMap& synonyms);

struct Condition {
  int index = 0;  // 1-based
  std::string name;
  std::set<std::string> synonyms;
  long frequency = 0;

  bool operator==(const Condition&) const = default;
};

class ConditionVocabulary {
 public:
  ConditionVocabulary() = default;
  ConditionVocabulary(std::vector<Condition> conditions, long min_count);

  // The thirteen-condition vocabulary rebuilt from the shipped reference
  // frequencies, allowlist and synonym map.
  static ConditionVocabulary reference();

  int size() const { return static_cast<int>(conditions_.size()); }
  bool empty() const { return conditions_.empty(); }
  long min_count() const { return min_count_; }
  const std::vector<Condition>& conditions() const { return conditions_; }
  // Throws UnknownCondition outside 1..K.
  const Condition& at(int index) const;
  std::optional<int> resolve(const std::string& normalized) const;

  nlohmann::json to_json() const;
  static ConditionVocabulary from_json(const nlohmann::json& j);

  bool operator==(const ConditionVocabulary&) const = default;

 private:
  std::vector<Condition> conditions_;
  long min_count_ = 0;
  std::map<std::string, int> lookup_;
};

// Keeps canonical names with count > min_count that are allowlisted, ordered
// by descending count (ties by name). Throws ConfigError on an empty
// allowlist, EmptyVocabulary when nothing survives.
ConditionVocabulary build_vocabulary(const FrequencyTable& table, long min_count,
                                     const std::set<std::string>& allowlist,
                                     const SynonymMap& synonyms = SynonymMap::shipped());

std::set<std::string> allowlist_from_json(const nlohmann::json& j);
FrequencyTable frequency_table_from_json(const nlohmann::json& j);

struct Link {
  FdiTooth tooth;
  int condition;

  auto operator<=>(const Link&) const = default;
};

// Every tooth of the line paired with every distinct condition its phrases
// resolve to. Excluded lines yield nothing.
std::vector<Link> link_line(const ReportLine& line, const std::vector<NounPhrase>& phrases,
                            const ConditionVocabulary& vocabulary);

using LabelVector = std::vector<std::uint8_t>;

struct ToothLabelRecord {
  std::string image_id;
  FdiTooth tooth{11};
  LabelVector labels;

  bool operator==(const ToothLabelRecord&) const = default;
};

class LabelMatrix {
 public:
  LabelMatrix() = default;
  LabelMatrix(ConditionVocabulary vocabulary, std::vector<ToothLabelRecord> records,
              nlohmann::json provenance);

  const ConditionVocabulary& vocabulary() const { return vocabulary_; }
  const std::vector<ToothLabelRecord>& records() const { return records_; }
  const nlohmann::json& provenance() const { return provenance_; }

  const ToothLabelRecord* find(const std::string& image_id, FdiTooth tooth) const;
  // Missing records are negatives.
  bool positive(const std::string& image_id, FdiTooth tooth, int condition) const;
  // Index 0 holds condition 1.
  std::vector<long> positive_counts() const;

  nlohmann::json summary() const;
  void write_jsonl(std::ostream& out) const;
  static LabelMatrix read(std::istream& records_jsonl, const ConditionVocabulary& vocabulary);

 private:
  ConditionVocabulary vocabulary_;
  std::vector<ToothLabelRecord> records_;  // sorted by (image_id, tooth)
  std::map<std::pair<std::string, int>, size_t> index_;
  nlohmann::json provenance_;
};

// Segmented teeth per image. When supplied, every segmented tooth gets a
// record (all-zero if unlinked) and reports on unknown images are rejected.
using SegmentedTeeth = std::map<std::string, std::vector<FdiTooth>>;

// Per (image, tooth), the bitwise OR of links over all lines.
LabelMatrix build_label_matrix(const std::vector<ExtractedReport>& corpus,
                               const ConditionVocabulary& vocabulary,
                               const SegmentedTeeth* segmented = nullptr);

}  // namespace dentlabel

#endif  // DENTLABEL_LABELING_H_
