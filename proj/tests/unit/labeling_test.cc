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

#include <random>
#include <sstream>

#include "doctest.h"
#include "dentlabel/assets.h"
#include "dentlabel/error.h"
#include "dentlabel/io.h"
#include "dentlabel/labeling.h"
#include "test_support.h"

using namespace dentlabel;
using namespace dentlabel::testing;

namespace {

std::vector<ExtractedReport> extract_rules(const std::vector<Report>& corpus) {
  PhraseExtractor extractor(ExtractionStrategy::kRules, {}, default_rule_set(), nullptr);
  return extract_corpus(corpus, extractor, 1);
}

std::set<std::pair<int, std::string>> linked_pairs(const LabelMatrix& m) {
  std::set<std::pair<int, std::string>> out;
  for (const auto& r : m.records()) {
    for (int c = 1; c <= m.vocabulary().size(); ++c) {
      if (r.labels[c - 1]) out.emplace(r.tooth.code(), m.vocabulary().at(c).name);
    }
  }
  return out;
}

ExtractedReport single_line(const std::string& text, const std::vector<std::string>& phrases, bool excluded = false) {
  ExtractedReport er;
  er.report.report_id = "r";
  er.report.image_id = "img";
  er.report.lines.push_back({1, text, tokenize_teeth(text), excluded});
  std::vector<NounPhrase> ps;
  for (const auto& p : phrases) ps.push_back(*NounPhrase::from_surface(p));
  er.phrases.push_back(ps);
  er.extractors.push_back("test");
  return er;
}

}  // namespace

TEST_SUITE("labeling") {
  TEST_CASE("golden report links exactly the expected tooth-condition pairs") {
    const Report report = parse_report(read_text_file(fixture("table3_report.txt")), "table3");
    const auto extracted = extract_rules({report});
    const auto matrix = build_label_matrix(extracted, ConditionVocabulary::reference());
    const std::set<std::pair<int, std::string>> expected = {
        {13, "included and impacted"}, {38, "included and impacted"},
        {36, "endodontic treatment"},  {36, "unfilled root canals"},
        {37, "endodontic treatment"},  {37, "unfilled root canals"},
    };
    CHECK(linked_pairs(matrix) == expected);
    // Line 02 is excluded, so 18/28/48 carry nothing; line 07 has no tooth.
    CHECK(matrix.find("table3", FdiTooth(18)) == nullptr);
    CHECK(matrix.find("table3", FdiTooth(28)) == nullptr);
    // Line 06 mentions 48 but no vocabulary condition, so no record is made.
    CHECK(matrix.records().size() == 4);
    CHECK(link_line(report.lines[6], extracted[0].phrases[6], ConditionVocabulary::reference()).empty());
    CHECK(link_line(report.lines[1], extracted[0].phrases[1], ConditionVocabulary::reference()).empty());
  }

  TEST_CASE("reference vocabulary reproduces the thirteen conditions in frequency order") {
    const auto v = ConditionVocabulary::reference();
    REQUIRE(v.size() == 13);
    const std::vector<std::pair<std::string, long>> expected = {
        {"endodontic treatment", 4994}, {"coronal destruction", 1866},
        {"included and impacted", 1532}, {"periapical bone rarefaction", 1486},
        {"unfilled root canals", 1194}, {"metallic core", 1091},
        {"root fragment", 964}, {"increased apical periodontal space", 922},
        {"trabecular bone modification", 773}, {"extensive restoration", 573},
        {"idiopathic osteosclerosis", 470}, {"unfavorable positioning for eruption", 200},
        {"prolonged retention", 181}};
    for (int i = 0; i < 13; ++i) {
      CHECK(v.at(i + 1).name == expected[i].first);
      CHECK(v.at(i + 1).frequency == expected[i].second);
    }
    CHECK(v.min_count() == 150);
    CHECK(v.resolve("partially filled root canals") == 5);
    CHECK(v.resolve("unfilled root canal") == 5);
    CHECK_FALSE(v.resolve("bone scar").has_value());
    CHECK_THROWS_AS(v.at(0), Error);
    CHECK_THROWS_AS(v.at(14), Error);
    CHECK(ConditionVocabulary::from_json(v.to_json()) == v);
  }

  TEST_CASE("threshold is strict at the boundary") {
    const std::set<std::string> allow = {"a", "b", "c"};
    const FrequencyTable table = {{"a", 151}, {"b", 150}, {"c", 149}};
    const auto v = build_vocabulary(table, 150, allow, SynonymMap());
    REQUIRE(v.size() == 1);
    CHECK(v.at(1).name == "a");
    try {
      build_vocabulary({{"b", 150}}, 150, allow, SynonymMap());
      FAIL("expected EmptyVocabulary");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::kEmptyVocabulary);
    }
    CHECK_THROWS_AS(build_vocabulary(table, 150, {}, SynonymMap()), Error);
  }

  TEST_CASE("non-allowlisted phrases are excluded however frequent") {
    const FrequencyTable table = {{"region", 9000}, {"bone loss", 5000}, {"root fragment", 964}};
    const auto v = build_vocabulary(table, 150, {"root fragment"});
    REQUIRE(v.size() == 1);
    CHECK(v.at(1).name == "root fragment");
  }

  TEST_CASE("plural variants merge before counting") {
    std::vector<ExtractedReport> corpus;
    for (int i = 0; i < 100; ++i) corpus.push_back(single_line("Tooth 11: x", {"unfilled root canal"}));
    for (int i = 0; i < 60; ++i) corpus.push_back(single_line("Tooth 11: x", {"Unfilled root canals"}));
    for (int i = 0; i < 5; ++i) corpus.push_back(single_line("Missing tooth 11", {"unfilled root canals"}, true));
    corpus.push_back(single_line("Tooth 11", {"Tooth 11"}));
    const auto counts = count_phrases(corpus, SynonymMap::shipped());
    CHECK(counts.at("unfilled root canals") == 160);
    CHECK(counts.count("unfilled root canal") == 0);
    CHECK(counts.count("tooth 11") == 0);
    const auto v = build_vocabulary(counts, 150, allowlist_from_json(json::parse(assets::allowlist_json())));
    REQUIRE(v.size() == 1);
    CHECK(v.at(1).synonyms.count("partially filled root canals"));
  }

  TEST_CASE("ties in frequency are ordered by name") {
    const auto v = build_vocabulary({{"b", 200}, {"a", 200}, {"c", 300}}, 150, {"a", "b", "c"}, SynonymMap());
    CHECK(v.at(1).name == "c");
    CHECK(v.at(2).name == "a");
    CHECK(v.at(3).name == "b");
  }

  TEST_CASE("synonym map rejects a variant claimed twice") {
    CHECK_THROWS_AS(SynonymMap::from_json(json{{"x", {"y"}}, {"z", {"y"}}}), Error);
    const auto m = SynonymMap::from_json(json{{"x", {"Y variant"}}});
    CHECK(m.canonical("y variant") == "x");
    CHECK(m.canonical("unknown") == "unknown");
  }

  TEST_CASE("linkage is the Cartesian product of teeth and distinct conditions") {
    const auto v = ConditionVocabulary::reference();
    const auto er = single_line("Teeth 11, 12 and 21: x",
                                {"root fragment", "metallic core", "Root fragments", "bone scar", "Teeth 11"});
    const auto links = link_line(er.report.lines[0], er.phrases[0], v);
    CHECK(links.size() == 3 * 2);
    std::set<Link> unique(links.begin(), links.end());
    CHECK(unique.size() == links.size());
    for (int t : {11, 12, 21}) {
      CHECK(unique.count({FdiTooth(t), *v.resolve("root fragment")}));
      CHECK(unique.count({FdiTooth(t), *v.resolve("metallic core")}));
    }
  }

  TEST_CASE("labels are the union over lines") {
    const auto v = ConditionVocabulary::reference();
    ExtractedReport er = single_line("Tooth 11: x", {"root fragment"});
    er.report.lines.push_back({2, "Tooth 11 again", {FdiTooth(11)}, false});
    er.phrases.push_back({*NounPhrase::from_surface("metallic core")});
    er.extractors.push_back("test");
    er.report.lines.push_back({3, "Tooth 11 once more", {FdiTooth(11)}, false});
    er.phrases.push_back({*NounPhrase::from_surface("root fragment")});
    er.extractors.push_back("test");
    const auto m = build_label_matrix({er}, v);
    REQUIRE(m.records().size() == 1);
    CHECK(m.positive("img", FdiTooth(11), *v.resolve("root fragment")));
    CHECK(m.positive("img", FdiTooth(11), *v.resolve("metallic core")));
    long total = 0;
    for (auto b : m.records()[0].labels) total += b;
    CHECK(total == 2);
  }

  TEST_CASE("synthetic corpus links match the generator's ground truth") {
    const auto synthetic = make_synthetic_corpus(80, 21);
    std::vector<Report> corpus;
    for (const auto& [id, text] : synthetic.reports) {
      ParseOptions options;
      options.image_id = synthetic.image_of.at(id);
      corpus.push_back(parse_report(text, id, options));
    }
    const auto v = ConditionVocabulary::reference();
    const auto m = build_label_matrix(extract_rules(corpus), v);
    std::map<std::pair<std::string, int>, std::set<std::string>> got;
    for (const auto& r : m.records()) {
      for (int c = 1; c <= v.size(); ++c) {
        if (r.labels[c - 1]) got[{r.image_id, r.tooth.code()}].insert(v.at(c).name);
      }
    }
    CHECK(got == synthetic.expected);
  }

  TEST_CASE("segmentation adds all-zero records and rejects unknown images") {
    const auto v = ConditionVocabulary::reference();
    const auto er = single_line("Tooth 11: x", {"root fragment"});
    SegmentedTeeth seg = {{"img", {FdiTooth(11), FdiTooth(46)}}};
    const auto m = build_label_matrix({er}, v, &seg);
    REQUIRE(m.records().size() == 2);
    const auto* r46 = m.find("img", FdiTooth(46));
    REQUIRE(r46);
    CHECK(std::all_of(r46->labels.begin(), r46->labels.end(), [](auto b) { return b == 0; }));
    SegmentedTeeth other = {{"elsewhere", {FdiTooth(11)}}};
    try {
      build_label_matrix({er}, v, &other);
      FAIL("expected UnknownImage");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::kUnknownImage);
    }
  }

  TEST_CASE("label matrix JSONL round-trip and summary") {
    const auto synthetic = make_synthetic_corpus(10, 2);
    std::vector<Report> corpus;
    for (const auto& [id, text] : synthetic.reports) corpus.push_back(parse_report(text, id));
    const auto v = ConditionVocabulary::reference();
    const auto m = build_label_matrix(extract_rules(corpus), v);
    std::stringstream buffer;
    m.write_jsonl(buffer);
    const auto back = LabelMatrix::read(buffer, v);
    CHECK(back.records() == m.records());
    const auto summary = m.summary();
    CHECK(summary["records"] == m.records().size());
    CHECK(summary["provenance"]["extractors"] == json::array({"rules/v1"}));
    std::stringstream bad("{\"image_id\": \"i\", \"fdi\": 11, \"labels\": [1, 0]}\n");
    CHECK_THROWS_AS(LabelMatrix::read(bad, v), Error);
  }
}
