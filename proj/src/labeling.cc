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

#include "dentlabel/labeling.h"

#include <algorithm>

#include "dentlabel/assets.h"
#include "dentlabel/error.h"
#include "dentlabel/io.h"

namespace dentlabel {

using nlohmann::json;

SynonymMap SynonymMap::from_json(const json& j) {
  if (!j.is_object()) fail(ErrorCode::kConfigError, "synonym map must be a JSON object");
  SynonymMap map;
  auto claim = [&](const std::string& raw, const std::string& canonical) {
    const std::string n = normalize_phrase(raw);
    if (n.empty()) return;
    auto [it, inserted] = map.to_canonical_.emplace(n, canonical);
    if (!inserted && it->second != canonical) {
      fail(ErrorCode::kConfigError, "synonym '" + n + "' is claimed by both '" + it->second +
                                        "' and '" + canonical + "'");
    }
  };
  for (const auto& [raw_canonical, variants] : j.items()) {
    const std::string canonical = normalize_phrase(raw_canonical);
    claim(canonical, canonical);
    for (const auto& v : variants) claim(v.get<std::string>(), canonical);
  }
  return map;
}

const SynonymMap& SynonymMap::shipped() {
  static const SynonymMap kMap = from_json(json::parse(assets::synonyms_json()));
  return kMap;
}

const std::string& SynonymMap::canonical(const std::string& normalized) const {
  auto it = to_canonical_.find(normalized);
  return it == to_canonical_.end() ? normalized : it->second;
}

std::set<std::string> SynonymMap::group(const std::string& canonical) const {
  std::set<std::string> out{canonical};
  for (const auto& [variant, c] : to_canonical_) {
    if (c == canonical) out.insert(variant);
  }
  return out;
}

FrequencyTable count_phrases(const std::vector<ExtractedReport>& corpus, const SynonymMap& synonyms) {
  FrequencyTable table;
  for (const auto& er : corpus) {
    for (size_t i = 0; i < er.report.lines.size(); ++i) {
      if (er.report.lines[i].excluded) continue;
      for (const auto& phrase : er.phrases.at(i)) {
        if (phrase.is_tooth_mention) continue;
        ++table[synonyms.canonical(phrase.normalized)];
      }
    }
  }
  return table;
}

ConditionVocabulary::ConditionVocabulary(std::vector<Condition> conditions, long min_count)
    : conditions_(std::move(conditions)), min_count_(min_count) {
  for (size_t i = 0; i < conditions_.size(); ++i) {
    Condition& c = conditions_[i];
    if (c.index != static_cast<int>(i) + 1) {
      fail(ErrorCode::kConfigError, "condition indices must be 1..K in order");
    }
    c.synonyms.insert(c.name);
    for (const auto& s : c.synonyms) {
      auto [it, inserted] = lookup_.emplace(s, c.index);
      if (!inserted) {
        fail(ErrorCode::kConfigError, "synonym '" + s + "' belongs to two conditions");
      }
    }
  }
}

ConditionVocabulary ConditionVocabulary::reference() {
  return build_vocabulary(frequency_table_from_json(json::parse(assets::reference_frequencies_json())),
                          150, allowlist_from_json(json::parse(assets::allowlist_json())),
                          SynonymMap::shipped());
}

const Condition& ConditionVocabulary::at(int index) const {
  if (index < 1 || index > size()) {
    fail(ErrorCode::kUnknownCondition, "condition index " + std::to_string(index) +
                                           " outside 1.." + std::to_string(size()));
  }
  return conditions_[index - 1];
}

std::optional<int> ConditionVocabulary::resolve(const std::string& normalized) const {
  auto it = lookup_.find(normalized);
  if (it == lookup_.end()) return std::nullopt;
  return it->second;
}

json ConditionVocabulary::to_json() const {
  json conditions = json::array();
  for (const auto& c : conditions_) {
    conditions.push_back({{"index", c.index},
                          {"name", c.name},
                          {"synonyms", c.synonyms},
                          {"frequency", c.frequency}});
  }
  return {{"min_count", min_count_}, {"conditions", conditions}};
}

ConditionVocabulary ConditionVocabulary::from_json(const json& j) {
  std::vector<Condition> conditions;
  try {
    for (const auto& jc : j.at("conditions")) {
      Condition c;
      c.index = jc.at("index").get<int>();
      c.name = jc.at("name").get<std::string>();
      c.synonyms = jc.value("synonyms", std::set<std::string>{});
      c.frequency = jc.value("frequency", 0L);
      conditions.push_back(std::move(c));
    }
    return ConditionVocabulary(std::move(conditions), j.value("min_count", 0L));
  } catch (const json::exception& e) {
    fail(ErrorCode::kConfigError, std::string("bad vocabulary: ") + e.what());
  }
}

ConditionVocabulary build_vocabulary(const FrequencyTable& table, long min_count,
                                     const std::set<std::string>& allowlist,
                                     const SynonymMap& synonyms) {
  if (allowlist.empty()) fail(ErrorCode::kConfigError, "allowlist is empty");
  std::set<std::string> allowed;
  for (const auto& a : allowlist) allowed.insert(synonyms.canonical(normalize_phrase(a)));

  std::vector<std::pair<std::string, long>> kept;
  for (const auto& [name, count] : table) {
    if (count > min_count && allowed.count(name)) kept.emplace_back(name, count);
  }
  if (kept.empty()) {
    fail(ErrorCode::kEmptyVocabulary, "no allowlisted phrase occurs more than " +
                                          std::to_string(min_count) + " times");
  }
  std::sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) {
    return a.second != b.second ? a.second > b.second : a.first < b.first;
  });
  std::vector<Condition> conditions;
  for (size_t i = 0; i < kept.size(); ++i) {
    conditions.push_back(
        {static_cast<int>(i) + 1, kept[i].first, synonyms.group(kept[i].first), kept[i].second});
  }
  return ConditionVocabulary(std::move(conditions), min_count);
}

std::set<std::string> allowlist_from_json(const json& j) {
  if (!j.is_array()) fail(ErrorCode::kConfigError, "allowlist must be a JSON array");
  std::set<std::string> out;
  for (const auto& e : j) out.insert(normalize_phrase(e.get<std::string>()));
  return out;
}

FrequencyTable frequency_table_from_json(const json& j) {
  if (!j.is_object()) fail(ErrorCode::kConfigError, "frequency table must be a JSON object");
  FrequencyTable table;
  for (const auto& [k, v] : j.items()) table[k] = v.get<long>();
  return table;
}

std::vector<Link> link_line(const ReportLine& line, const std::vector<NounPhrase>& phrases,
                            const ConditionVocabulary& vocabulary) {
  if (line.excluded || line.teeth.empty()) return {};
  std::vector<int> conditions;
  for (const auto& phrase : phrases) {
    if (phrase.is_tooth_mention) continue;
    if (auto c = vocabulary.resolve(phrase.normalized)) {
      if (std::find(conditions.begin(), conditions.end(), *c) == conditions.end()) {
        conditions.push_back(*c);
      }
    }
  }
  std::vector<Link> links;
  links.reserve(line.teeth.size() * conditions.size());
  for (const auto& tooth : line.teeth) {
    for (int c : conditions) links.push_back({tooth, c});
  }
  return links;
}

LabelMatrix::LabelMatrix(ConditionVocabulary vocabulary, std::vector<ToothLabelRecord> records,
                         json provenance)
    : vocabulary_(std::move(vocabulary)), records_(std::move(records)), provenance_(std::move(provenance)) {
  std::sort(records_.begin(), records_.end(), [](const auto& a, const auto& b) {
    return std::tie(a.image_id, a.tooth) < std::tie(b.image_id, b.tooth);
  });
  for (size_t i = 0; i < records_.size(); ++i) {
    const auto& r = records_[i];
    if (static_cast<int>(r.labels.size()) != vocabulary_.size()) {
      fail(ErrorCode::kBadVectorLength, "label vector of " + r.image_id + "/" + r.tooth.text() +
                                            " has length " + std::to_string(r.labels.size()));
    }
    if (!index_.emplace(std::make_pair(r.image_id, r.tooth.code()), i).second) {
      fail(ErrorCode::kInvalidArgument, "duplicate record " + r.image_id + "/" + r.tooth.text());
    }
  }
}

const ToothLabelRecord* LabelMatrix::find(const std::string& image_id, FdiTooth tooth) const {
  auto it = index_.find({image_id, tooth.code()});
  return it == index_.end() ? nullptr : &records_[it->second];
}

bool LabelMatrix::positive(const std::string& image_id, FdiTooth tooth, int condition) const {
  vocabulary_.at(condition);
  const ToothLabelRecord* r = find(image_id, tooth);
  return r && r->labels[condition - 1];
}

std::vector<long> LabelMatrix::positive_counts() const {
  std::vector<long> counts(vocabulary_.size(), 0);
  for (const auto& r : records_) {
    for (size_t c = 0; c < r.labels.size(); ++c) counts[c] += r.labels[c] ? 1 : 0;
  }
  return counts;
}

json LabelMatrix::summary() const {
  json counts = json::array();
  const auto positives = positive_counts();
  for (const auto& c : vocabulary_.conditions()) {
    counts.push_back({{"index", c.index}, {"name", c.name}, {"positives", positives[c.index - 1]}});
  }
  return {{"records", records_.size()},
          {"positive_counts", counts},
          {"vocabulary", vocabulary_.to_json()},
          {"provenance", provenance_}};
}

void LabelMatrix::write_jsonl(std::ostream& out) const {
  for (const auto& r : records_) {
    out << json{{"image_id", r.image_id}, {"fdi", r.tooth.code()}, {"labels", r.labels}}.dump() << '\n';
  }
}

LabelMatrix LabelMatrix::read(std::istream& records_jsonl, const ConditionVocabulary& vocabulary) {
  std::vector<ToothLabelRecord> records;
  for (const auto& j : read_jsonl(records_jsonl)) {
    try {
      records.push_back({j.at("image_id").get<std::string>(), FdiTooth(j.at("fdi").get<int>()),
                         j.at("labels").get<LabelVector>()});
    } catch (const json::exception& e) {
      fail(ErrorCode::kIoError, std::string("bad label record: ") + e.what());
    }
  }
  return LabelMatrix(vocabulary, std::move(records), json::object());
}

LabelMatrix build_label_matrix(const std::vector<ExtractedReport>& corpus,
                               const ConditionVocabulary& vocabulary, const SegmentedTeeth* segmented) {
  std::map<std::pair<std::string, FdiTooth>, LabelVector> acc;
  const LabelVector zero(vocabulary.size(), 0);
  std::set<std::string> extractors;

  if (segmented) {
    for (const auto& [image_id, teeth] : *segmented) {
      for (const auto& t : teeth) acc.emplace(std::make_pair(image_id, t), zero);
    }
  }
  for (const auto& er : corpus) {
    const std::string& image_id = er.report.image_id;
    if (segmented && !segmented->count(image_id)) {
      fail(ErrorCode::kUnknownImage, "report " + er.report.report_id + " refers to image " +
                                         image_id + " absent from the segmentation manifest");
    }
    for (size_t i = 0; i < er.report.lines.size(); ++i) {
      const ReportLine& line = er.report.lines[i];
      if (i < er.extractors.size() && !er.extractors[i].empty()) extractors.insert(er.extractors[i]);
      for (const auto& link : link_line(line, er.phrases.at(i), vocabulary)) {
        auto [it, _] = acc.emplace(std::make_pair(image_id, link.tooth), zero);
        it->second[link.condition - 1] = 1;
      }
    }
  }

  std::vector<ToothLabelRecord> records;
  records.reserve(acc.size());
  for (auto& [key, labels] : acc) records.push_back({key.first, key.second, std::move(labels)});
  json provenance = {{"reports", corpus.size()},
                     {"extractors", extractors},
                     {"segmentation", segmented != nullptr}};
  return LabelMatrix(vocabulary, std::move(records), std::move(provenance));
}

}  // namespace dentlabel
