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

#include <fstream>
#include <random>

#include "doctest.h"
#include "dentlabel/assets.h"
#include "dentlabel/error.h"
#include "dentlabel/io.h"
#include "dentlabel/phrase.h"
#include "test_support.h"

using namespace dentlabel;
using namespace dentlabel::testing;

namespace {

std::vector<std::string> rule_phrases(const std::string& text, bool include_teeth = false) {
  ReportLine line{1, text, tokenize_teeth(text), false};
  std::vector<std::string> out;
  for (const auto& p : extract_noun_phrases_rules(line)) {
    if (include_teeth || !p.is_tooth_mention) out.push_back(p.normalized);
  }
  return out;
}

ErrorCode code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an error");
  return ErrorCode::kIoError;
}

// Replies to a whole-report request with one section per topic, listing the
// text after the colon as a single phrase.
std::pair<int, std::string> echo_sections(const std::string&, const std::string& user) {
  std::istringstream in(user);
  std::string line;
  std::string reply;
  while (std::getline(in, line)) {
    if (line.size() < 4) continue;
    reply += line.substr(0, 3) + "\n- " + line.substr(4) + "\n";
  }
  return {200, reply};
}

EndpointConfig mock_endpoint(const MockChatServer& server) {
  EndpointConfig c;
  c.base_url = server.base_url();
  c.model = "mock-model";
  c.api_key_env = "DENTLABEL_TEST_NO_SUCH_KEY";
  c.backoff_ms = 1;
  c.max_retries = 2;
  c.timeout_seconds = 5;
  return c;
}

}  // namespace

TEST_SUITE("phrase_extraction") {
  TEST_CASE("normalization") {
    CHECK(normalize_phrase("  Endodontic   Treatment. ") == "endodontic treatment");
    CHECK(normalize_phrase("Tooth's root-canal") == "tooths root canal");
    CHECK(normalize_phrase("**Root fragment**") == "root fragment");
    CHECK(normalize_phrase("...").empty());
  }

  TEST_CASE("normalization is idempotent") {
    std::mt19937_64 rng(3);
    const std::string alphabet = "abcXYZ '-.,;:!()\t 019";
    for (int i = 0; i < 2000; ++i) {
      std::string s;
      const int n = static_cast<int>(rng() % 25);
      for (int k = 0; k < n; ++k) s += alphabet[rng() % alphabet.size()];
      const std::string once = normalize_phrase(s);
      CHECK(normalize_phrase(once) == once);
      CHECK(once.find("  ") == std::string::npos);
    }
  }

  TEST_CASE("rule chunker on report sentences") {
    CHECK(rule_phrases("Root fragment.") == std::vector<std::string>{"root fragment"});
    CHECK(rule_phrases("Tooth 36 and 37: endodontic treatment. Partially filled root canals.") ==
          std::vector<std::string>{"endodontic treatment", "partially filled root canals"});
    // The conjunction inside a protected expression does not split it.
    CHECK(rule_phrases("Teeth 13 and 38 included and impacted.") ==
          std::vector<std::string>{"included and impacted"});
    CHECK(rule_phrases("Calcification of the right and left stylohyoid ligament complex.") ==
          std::vector<std::string>{"calcification of the right", "left stylohyoid ligament complex"});
    CHECK(rule_phrases("In the region of tooth 48; a bone scar", true) ==
          std::vector<std::string>{"region of tooth 48", "bone scar"});
    const auto with_teeth = rule_phrases("Tooth 36 and 37: endodontic treatment.", true);
    CHECK(with_teeth == std::vector<std::string>{"tooth 36", "37", "endodontic treatment"});
  }

  TEST_CASE("phrase json round-trip") {
    const auto p = NounPhrase::from_surface("Tooth 36");
    REQUIRE(p);
    CHECK(p->is_tooth_mention);
    CHECK(phrase_from_json(to_json(*p)) == *p);
    CHECK_FALSE(NounPhrase::from_surface(" . ").has_value());
  }

  TEST_CASE("bullet list parsing") {
    CHECK(parse_phrase_list("- endodontic treatment\n* root fragment\n1. metallic core\n2) coronal destruction\n") ==
          std::vector<std::string>{"endodontic treatment", "root fragment", "metallic core", "coronal destruction"});
    CHECK(parse_phrase_list("Here you go:\n\n  - **Root fragment**  \n") == std::vector<std::string>{"Root fragment"});
    CHECK(code_of([] { parse_phrase_list("I cannot help with that."); }) == ErrorCode::kResponseUnparseable);
  }

  TEST_CASE("whole-report response parsing") {
    const std::string reply =
        "**Sentence 01:**\n- anatomical modification\n\n03:\n- included and impacted\n04:\n"
        "- endodontic treatment\n- partially filled root canals\n";
    const auto sections = parse_report_response(reply, {1, 3, 4});
    CHECK(sections.at(1) == std::vector<std::string>{"anatomical modification"});
    CHECK(sections.at(4).size() == 2);
    CHECK(code_of([&] { parse_report_response(reply, {1, 5}); }) == ErrorCode::kResponseUnparseable);
    CHECK(code_of([] { parse_report_response("- orphan\n01:\n- x\n", {1}); }) == ErrorCode::kResponseUnparseable);
  }

  TEST_CASE("remote extraction issues one request per report and caches the result") {
    MockChatServer server(echo_sections);
    TempDir dir;
    const Report report = parse_report(kTable3Report, "r");
    {
      PhraseCache cache(dir.path() / "cache.jsonl");
      PhraseExtractor extractor(ExtractionStrategy::kRemote, mock_endpoint(server), default_rule_set(), &cache);
      const auto lines = extractor.extract_report(report);
      CHECK(server.requests() == 1);
      CHECK(server.last_model() == "mock-model");
      CHECK(server.last_temperature() == 0.0);
      REQUIRE(lines.size() == 7);
      CHECK(lines[1].phrases.empty());
      CHECK(lines[1].extractor.empty());
      CHECK(lines[3].extractor == "remote/mock-model/prompt_v1");
      REQUIRE(lines[3].phrases.size() == 1);
      CHECK(lines[3].phrases[0].surface == "Tooth 36 and 37: endodontic treatment. Partially filled root canals.");
      CHECK(cache.size() == 6);
    }
    // A fresh cache instance replays the file and needs no requests.
    PhraseCache cache(dir.path() / "cache.jsonl");
    PhraseExtractor extractor(ExtractionStrategy::kRemote, mock_endpoint(server), default_rule_set(), &cache);
    const auto again = extractor.extract_report(report);
    CHECK(server.requests() == 1);
    CHECK(again[3].from_cache);
  }

  TEST_CASE("per-sentence mode sends one request per non-excluded line") {
    MockChatServer server([](const std::string& system, const std::string& user) {
      CHECK(system == std::string(assets::extraction_prompt()));
      return std::pair<int, std::string>{200, "- " + user.substr(4)};
    });
    auto endpoint = mock_endpoint(server);
    endpoint.per_sentence = true;
    PhraseExtractor extractor(ExtractionStrategy::kRemote, endpoint, default_rule_set(), nullptr);
    extractor.extract_report(parse_report(kTable3Report, "r"));
    CHECK(server.requests() == 6);
    CHECK(extractor.remote_requests() == 6);
  }

  TEST_CASE("rate limiting retries with backoff then fails") {
    std::atomic<int> calls{0};
    MockChatServer server([&](const std::string&, const std::string& user) {
      if (calls++ < 2) return std::pair<int, std::string>{429, "slow down"};
      return echo_sections("", user);
    });
    PhraseExtractor ok(ExtractionStrategy::kRemote, mock_endpoint(server), default_rule_set(), nullptr);
    CHECK_NOTHROW(ok.extract_report(parse_report("01: Root fragment.\n", "r")));
    CHECK(server.requests() == 3);

    MockChatServer always([](const std::string&, const std::string&) {
      return std::pair<int, std::string>{429, "slow down"};
    });
    auto endpoint = mock_endpoint(always);
    endpoint.max_retries = 1;
    PhraseExtractor limited(ExtractionStrategy::kRemote, endpoint, default_rule_set(), nullptr);
    CHECK(code_of([&] { limited.extract_report(parse_report("01: Root fragment.\n", "r")); }) ==
          ErrorCode::kRateLimited);
    CHECK(always.requests() == 2);
  }

  TEST_CASE("server errors and unreachable endpoints") {
    MockChatServer broken([](const std::string&, const std::string&) {
      return std::pair<int, std::string>{500, "boom"};
    });
    PhraseExtractor remote(ExtractionStrategy::kRemote, mock_endpoint(broken), default_rule_set(), nullptr);
    CHECK(code_of([&] { remote.extract_report(parse_report("01: Root fragment.\n", "r")); }) ==
          ErrorCode::kEndpointUnavailable);

    EndpointConfig down;
    down.base_url = dead_endpoint();
    down.timeout_seconds = 2;
    PhraseExtractor strict(ExtractionStrategy::kRemote, down, default_rule_set(), nullptr);
    CHECK(code_of([&] { strict.extract_report(parse_report("01: Root fragment.\n", "r")); }) ==
          ErrorCode::kEndpointUnavailable);
  }

  TEST_CASE("remote-then-rules falls back when the endpoint is down or replies garbage") {
    EndpointConfig down;
    down.base_url = dead_endpoint();
    down.timeout_seconds = 2;
    TempDir dir;
    PhraseCache cache(dir.path() / "cache.jsonl");
    PhraseExtractor extractor(ExtractionStrategy::kRemoteThenRules, down, default_rule_set(), &cache);
    const auto lines = extractor.extract_report(parse_report(kTable3Report, "r"));
    CHECK(lines[3].extractor == "rules/v1");
    std::vector<std::string> got;
    for (const auto& p : lines[3].phrases) {
      if (!p.is_tooth_mention) got.push_back(p.normalized);
    }
    CHECK(got == std::vector<std::string>{"endodontic treatment", "partially filled root canals"});

    MockChatServer garbage([](const std::string&, const std::string&) {
      return std::pair<int, std::string>{200, "Sorry, no list today."};
    });
    PhraseExtractor fallback(ExtractionStrategy::kRemoteThenRules, mock_endpoint(garbage), default_rule_set(),
                             nullptr);
    const auto g = fallback.extract_report(parse_report("01: Root fragment.\n", "r"));
    CHECK(g[0].extractor == "rules/v1");
    CHECK(g[0].phrases[0].normalized == "root fragment");
  }

  TEST_CASE("cache keys depend on prompt, sentence and extractor") {
    const std::string k = cache_key("p", "s", "x");
    CHECK(k.size() == 64);
    CHECK(k == cache_key("p", "s", "x"));
    CHECK(k != cache_key("p2", "s", "x"));
    CHECK(k != cache_key("p", "s2", "x"));
    CHECK(k != cache_key("p", "s", "x2"));
    CHECK(cache_key("ab", "c", "x") != cache_key("a", "bc", "x"));
  }

  TEST_CASE("cache: last entry wins and corruption names the key") {
    TempDir dir;
    const fs::path path = dir.path() / "cache.jsonl";
    {
      PhraseCache cache(path);
      cache.store({"k1", "rules/v1", {*NounPhrase::from_surface("a")}, "t"});
      cache.store({"k1", "rules/v1", {*NounPhrase::from_surface("b")}, "t"});
      cache.store({"k2", "rules/v1", {}, "t"});
    }
    PhraseCache reloaded(path);
    CHECK(reloaded.size() == 2);
    CHECK(reloaded.lookup("k1")->phrases[0].normalized == "b");

    std::string text = read_text_file(path);
    const auto pos = text.find("\"b\"");
    REQUIRE(pos != std::string::npos);
    text.replace(pos, 3, "\"c\"");
    write_file(path, text);
    try {
      PhraseCache broken(path);
      FAIL("expected CacheCorrupt");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::kCacheCorrupt);
      CHECK(std::string(e.what()).find("k1") != std::string::npos);
    }

    write_file(path, "{\"key\": \"k9\", \"extractor\": tru\n");
    try {
      PhraseCache broken(path);
      FAIL("expected CacheCorrupt");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::kCacheCorrupt);
      CHECK(std::string(e.what()).find("k9") != std::string::npos);
    }
  }

  TEST_CASE("a custom prompt changes the extractor identity") {
    EndpointConfig c;
    CHECK(c.identity() == "remote/gpt-4/prompt_v1");
    c.prompt = "List noun phrases.";
    CHECK(c.identity().rfind("remote/gpt-4/custom-", 0) == 0);
    CHECK(code_of([] { parse_strategy("magic"); }) == ErrorCode::kConfigError);
    CHECK(parse_strategy(strategy_name(ExtractionStrategy::kRemoteThenRules)) == ExtractionStrategy::kRemoteThenRules);
  }

  TEST_CASE("corpus extraction preserves order and round-trips through JSONL") {
    const auto synthetic = make_synthetic_corpus(20, 4);
    std::vector<Report> corpus;
    for (const auto& [id, text] : synthetic.reports) corpus.push_back(parse_report(text, id));
    PhraseExtractor serial(ExtractionStrategy::kRules, {}, default_rule_set(), nullptr);
    PhraseExtractor parallel(ExtractionStrategy::kRules, {}, default_rule_set(), nullptr);
    const auto a = extract_corpus(corpus, serial, 1);
    const auto b = extract_corpus(corpus, parallel, 4);
    CHECK(a == b);
    std::stringstream buffer;
    write_extracted_jsonl(a, buffer);
    CHECK(read_extracted_jsonl(buffer) == a);
  }

  TEST_CASE("concurrent remote extraction makes one request per report") {
    MockChatServer server(echo_sections);
    const auto synthetic = make_synthetic_corpus(12, 8);
    std::vector<Report> corpus;
    for (const auto& [id, text] : synthetic.reports) corpus.push_back(parse_report(text, id));
    PhraseExtractor extractor(ExtractionStrategy::kRemote, mock_endpoint(server), default_rule_set(), nullptr);
    const auto out = extract_corpus(corpus, extractor, 4);
    CHECK(out.size() == corpus.size());
    CHECK(server.requests() == 12);
  }
}
