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

#ifndef DENTLABEL_PHRASE_H_
#define DENTLABEL_PHRASE_H_

#include <atomic>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "dentlabel/report.h"
#include "json.hpp"

namespace dentlabel {

// Lowercase, apostrophes dropped, other ASCII punctuation turned into spaces,
// whitespace collapsed and trimmed. Idempotent.
std::string normalize_phrase(std::string_view text);

struct NounPhrase {
  std::string surface;
  std::string normalized;
  bool is_tooth_mention = false;

  // Returns nothing when the surface normalizes to an empty string.
  static std::optional<NounPhrase> from_surface(std::string_view surface);

  bool operator==(const NounPhrase&) const = default;
};

nlohmann::json to_json(const NounPhrase& phrase);
NounPhrase phrase_from_json(const nlohmann::json& j);

// Offline chunker used when no chat endpoint is configured.
struct RuleSet {
  // Dropped from the start of every chunk.
  std::vector<std::string> leading_stop_words;
  // Normalized multiword expressions whose inner "and"/"or" must not split.
  std::vector<std::string> protected_expressions;
  std::string version = "rules/v1";
};

// Stop words plus every synonym-map expression containing a conjunction.
RuleSet default_rule_set();
RuleSet rule_set_from_synonyms(const nlohmann::json& synonyms);

// Splits at ':', '.', ';', ',' and the words "and"/"or", and right after any
// tooth number, then trims leading stop words.
std::vector<NounPhrase> extract_noun_phrases_rules(const ReportLine& line,
                                                   const RuleSet& rules = default_rule_set());

struct EndpointConfig {
  std::string base_url = "https://api.openai.com/v1";
  std::string model = "gpt-4";
  std::string api_key_env = "OPENAI_API_KEY";
  std::string prompt;  // empty selects the shipped prompt asset
  double timeout_seconds = 60.0;
  int max_concurrent = 4;
  int max_retries = 3;
  int backoff_ms = 500;
  double temperature = 0.0;
  // One request per sentence instead of one per report.
  bool per_sentence = false;

  const std::string& effective_prompt() const;
  std::string identity() const;
};

EndpointConfig endpoint_config_from_json(const nlohmann::json& j);

// A chat-completion backend. Implementations throw EndpointUnavailable or
// RateLimited.
class ChatClient {
 public:
  virtual ~ChatClient() = default;
  virtual std::string complete(const std::string& system_prompt, const std::string& user_text) = 0;
};

// OpenAI-compatible POST {base_url}/chat/completions.
class HttpChatClient : public ChatClient {
 public:
  explicit HttpChatClient(EndpointConfig config);
  std::string complete(const std::string& system_prompt, const std::string& user_text) override;

 private:
  EndpointConfig config_;
};

// Bullet lines ("-", "*", "•", "1." or "1)") from a chat response.
// Throws ResponseUnparseable when there are none.
std::vector<std::string> parse_phrase_list(std::string_view response);

// Splits a whole-report response into per-topic bullet lists. A topic header
// is a line "NN:" (optionally prefixed by "Sentence"/"Item" and wrapped in
// markdown emphasis). Throws ResponseUnparseable if a requested topic is
// missing or a bullet appears before any header.
std::map<int, std::vector<std::string>> parse_report_response(std::string_view response,
                                                              const std::vector<int>& topics);

std::vector<NounPhrase> extract_noun_phrases_remote(const ReportLine& line, ChatClient& client,
                                                    const EndpointConfig& config);
std::vector<NounPhrase> extract_noun_phrases_remote(const ReportLine& line,
                                                    const EndpointConfig& config);

struct ExtractionCacheEntry {
  std::string key;
  std::string extractor;
  std::vector<NounPhrase> phrases;
  std::string timestamp;
};

std::string cache_key(std::string_view prompt, std::string_view sentence,
                      std::string_view extractor_identity);

// Append-only JSON Lines cache. The last entry for a key wins. Each entry
// carries a checksum of its phrase list; a mismatch is CacheCorrupt.
class PhraseCache {
 public:
  // In-memory only.
  PhraseCache() = default;
  // Loads existing entries; throws CacheCorrupt naming the offending key.
  explicit PhraseCache(std::filesystem::path path);

  std::optional<ExtractionCacheEntry> lookup(const std::string& key) const;
  void store(ExtractionCacheEntry entry);
  size_t size() const;

 private:
  std::optional<std::filesystem::path> path_;
  mutable std::mutex mu_;
  std::map<std::string, ExtractionCacheEntry> entries_;
};

enum class ExtractionStrategy { kRemote, kRules, kRemoteThenRules };

ExtractionStrategy parse_strategy(std::string_view name);
std::string_view strategy_name(ExtractionStrategy strategy);

struct LineExtraction {
  std::vector<NounPhrase> phrases;
  // "rules/v1", "remote/<model>/prompt_v1", or empty for skipped lines.
  std::string extractor;
  bool from_cache = false;
};

class PhraseExtractor {
 public:
  // `client` may be null, in which case an HttpChatClient is created on
  // first remote use. `cache` may be null (no caching).
  PhraseExtractor(ExtractionStrategy strategy, EndpointConfig endpoint, RuleSet rules,
                  PhraseCache* cache, std::shared_ptr<ChatClient> client = nullptr);

  LineExtraction extract_line(const ReportLine& line);
  // Excluded lines are skipped and yield an empty extraction. In the
  // whole-report remote mode, all cache misses of a report share one request.
  std::vector<LineExtraction> extract_report(const Report& report);

  int remote_requests() const { return remote_requests_.load(); }

 private:
  std::optional<LineExtraction> cached(const ReportLine& line, const std::string& identity) const;
  LineExtraction store(const ReportLine& line, const std::string& identity,
                       std::vector<NounPhrase> phrases);
  LineExtraction run_rules(const ReportLine& line);
  ChatClient& client();

  ExtractionStrategy strategy_;
  EndpointConfig endpoint_;
  RuleSet rules_;
  PhraseCache* cache_;
  std::shared_ptr<ChatClient> client_;
  std::mutex client_mu_;
  std::atomic<int> remote_requests_{0};
};

std::vector<NounPhrase> extract_with_cache(const ReportLine& line, ExtractionStrategy strategy,
                                           PhraseCache& cache,
                                           const EndpointConfig& endpoint = {},
                                           std::shared_ptr<ChatClient> client = nullptr);

// A report together with the phrases of each of its lines.
struct ExtractedReport {
  Report report;
  std::vector<std::vector<NounPhrase>> phrases;  // parallel to report.lines
  std::vector<std::string> extractors;           // parallel to report.lines

  bool operator==(const ExtractedReport&) const = default;
};

// Runs the extractor over a corpus; remote requests are issued from up to
// `max_concurrent` workers. Output order follows the input.
std::vector<ExtractedReport> extract_corpus(const std::vector<Report>& corpus,
                                            PhraseExtractor& extractor, int max_concurrent = 1);

nlohmann::json to_json(const ExtractedReport& extracted);
ExtractedReport extracted_from_json(const nlohmann::json& j);
void write_extracted_jsonl(const std::vector<ExtractedReport>& corpus, std::ostream& out);
std::vector<ExtractedReport> read_extracted_jsonl(std::istream& in);

}  // namespace dentlabel

#endif  // DENTLABEL_PHRASE_H_
