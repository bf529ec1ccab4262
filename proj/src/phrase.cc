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

#include "dentlabel/phrase.h"

#include <algorithm>
#include <cctype>
#include <chrono>
#include <ctime>
#include <exception>
#include <fstream>
#include <regex>
#include <set>
#include <sstream>
#include <thread>

#include "dentlabel/assets.h"
#include "dentlabel/error.h"
#include "dentlabel/io.h"
#include "httplib.h"

namespace dentlabel {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

bool is_word_char(char c) {
  const auto u = static_cast<unsigned char>(c);
  return std::isalnum(u) || u >= 0x80 || c == '_';
}

bool is_separator(char c) { return c == ':' || c == '.' || c == ';' || c == ','; }

struct Token {
  enum Kind { kWord, kSeparator, kOther };
  size_t begin;
  size_t end;
  Kind kind;
};

std::vector<Token> tokenize(std::string_view s) {
  std::vector<Token> tokens;
  size_t i = 0;
  while (i < s.size()) {
    const char c = s[i];
    if (std::isspace(static_cast<unsigned char>(c))) {
      ++i;
    } else if (is_word_char(c)) {
      size_t end = i + 1;
      while (end < s.size()) {
        if (is_word_char(s[end])) {
          ++end;
        } else if ((s[end] == '-' || s[end] == '\'') && end + 1 < s.size() &&
                   is_word_char(s[end + 1])) {
          end += 2;
        } else {
          break;
        }
      }
      tokens.push_back({i, end, Token::kWord});
      i = end;
    } else {
      tokens.push_back({i, i + 1, is_separator(c) ? Token::kSeparator : Token::kOther});
      ++i;
    }
  }
  return tokens;
}

std::vector<std::string> split_words(std::string_view normalized) {
  std::vector<std::string> words;
  std::istringstream in{std::string(normalized)};
  std::string w;
  while (in >> w) words.push_back(w);
  return words;
}

std::string now_utc_iso8601() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string strip_emphasis(std::string_view s) {
  std::string out;
  for (char c : s) {
    if (c != '*' && c != '#' && c != '`') out.push_back(c);
  }
  return trim(out);
}

std::string topic_prefix(int topic) {
  std::string s = topic < 10 ? "0" : "";
  return s + std::to_string(topic) + ": ";
}

json phrases_json(const std::vector<NounPhrase>& phrases) {
  json arr = json::array();
  for (const auto& p : phrases) arr.push_back(to_json(p));
  return arr;
}

std::vector<NounPhrase> phrases_from_surfaces(const std::vector<std::string>& surfaces) {
  std::vector<NounPhrase> phrases;
  for (const auto& s : surfaces) {
    if (auto p = NounPhrase::from_surface(s)) phrases.push_back(std::move(*p));
  }
  return phrases;
}

}  // namespace

std::string normalize_phrase(std::string_view text) {
  std::string spaced;
  spaced.reserve(text.size());
  for (char c : text) {
    const auto u = static_cast<unsigned char>(c);
    if (c == '\'') continue;
    if (u < 0x80 && std::ispunct(u)) {
      spaced.push_back(' ');
    } else if (u < 0x80 && std::isspace(u)) {
      spaced.push_back(' ');
    } else {
      spaced.push_back(static_cast<char>(std::tolower(u)));
    }
  }
  std::string out;
  for (const auto& w : split_words(spaced)) {
    if (!out.empty()) out.push_back(' ');
    out += w;
  }
  return out;
}

std::optional<NounPhrase> NounPhrase::from_surface(std::string_view surface) {
  NounPhrase phrase;
  phrase.surface = trim(surface);
  phrase.normalized = normalize_phrase(phrase.surface);
  if (phrase.normalized.empty()) return std::nullopt;
  phrase.is_tooth_mention = !tokenize_teeth(phrase.surface).empty();
  return phrase;
}

json to_json(const NounPhrase& phrase) {
  return {{"surface", phrase.surface},
          {"normalized", phrase.normalized},
          {"tooth", phrase.is_tooth_mention}};
}

NounPhrase phrase_from_json(const json& j) {
  NounPhrase p;
  p.surface = j.at("surface").get<std::string>();
  p.normalized = j.at("normalized").get<std::string>();
  p.is_tooth_mention = j.at("tooth").get<bool>();
  return p;
}

RuleSet rule_set_from_synonyms(const json& synonyms) {
  RuleSet rules;
  rules.leading_stop_words = {"a",     "an",      "the",     "of",     "in",     "on",
                              "at",    "to",      "with",    "for",    "from",   "by",
                              "into",  "onto",    "over",    "under",  "near",   "between",
                              "within", "without", "around", "about",  "as",     "among",
                              "along", "across",  "upon"};
  std::set<std::string> expressions;
  auto consider = [&](const std::string& s) {
    const std::string n = normalize_phrase(s);
    const auto words = split_words(n);
    if (std::find(words.begin(), words.end(), "and") != words.end() ||
        std::find(words.begin(), words.end(), "or") != words.end()) {
      expressions.insert(n);
    }
  };
  for (const auto& [canonical, variants] : synonyms.items()) {
    consider(canonical);
    for (const auto& v : variants) consider(v.get<std::string>());
  }
  rules.protected_expressions.assign(expressions.begin(), expressions.end());
  return rules;
}

RuleSet default_rule_set() {
  static const RuleSet kDefault = rule_set_from_synonyms(json::parse(assets::synonyms_json()));
  return kDefault;
}

std::vector<NounPhrase> extract_noun_phrases_rules(const ReportLine& line, const RuleSet& rules) {
  const std::string_view text = line.text;
  const std::vector<Token> tokens = tokenize(text);

  // Flatten word tokens into normalized words to locate protected expressions.
  std::vector<std::pair<std::string, size_t>> words;  // (word, token index)
  for (size_t i = 0; i < tokens.size(); ++i) {
    if (tokens[i].kind != Token::kWord) continue;
    for (auto& w : split_words(normalize_phrase(text.substr(tokens[i].begin, tokens[i].end - tokens[i].begin)))) {
      words.emplace_back(std::move(w), i);
    }
  }
  std::vector<bool> shielded(tokens.size(), false);
  for (const auto& expression : rules.protected_expressions) {
    const auto target = split_words(expression);
    if (target.empty() || target.size() > words.size()) continue;
    for (size_t start = 0; start + target.size() <= words.size(); ++start) {
      bool match = true;
      for (size_t k = 0; k < target.size() && match; ++k) match = words[start + k].first == target[k];
      if (!match) continue;
      for (size_t k = 0; k < target.size(); ++k) shielded[words[start + k].second] = true;
    }
  }

  const std::set<std::string> stop(rules.leading_stop_words.begin(), rules.leading_stop_words.end());
  std::vector<NounPhrase> phrases;
  std::vector<size_t> chunk;
  auto flush = [&]() {
    size_t first = 0;
    size_t last = chunk.size();
    while (first < last) {
      const Token& t = tokens[chunk[first]];
      const std::string w = to_lower(text.substr(t.begin, t.end - t.begin));
      if (t.kind == Token::kOther || (t.kind == Token::kWord && stop.count(w))) {
        ++first;
      } else {
        break;
      }
    }
    while (last > first && tokens[chunk[last - 1]].kind == Token::kOther) --last;
    if (first < last) {
      const size_t begin = tokens[chunk[first]].begin;
      const size_t end = tokens[chunk[last - 1]].end;
      if (auto p = NounPhrase::from_surface(text.substr(begin, end - begin))) {
        phrases.push_back(std::move(*p));
      }
    }
    chunk.clear();
  };

  for (size_t i = 0; i < tokens.size(); ++i) {
    const Token& t = tokens[i];
    if (t.kind == Token::kSeparator) {
      flush();
      continue;
    }
    if (t.kind == Token::kWord) {
      const std::string_view raw = text.substr(t.begin, t.end - t.begin);
      const std::string w = to_lower(raw);
      if ((w == "and" || w == "or") && !shielded[i]) {
        flush();
        continue;
      }
      chunk.push_back(i);
      if (FdiTooth::from_text(raw)) flush();
      continue;
    }
    chunk.push_back(i);
  }
  flush();
  return phrases;
}

const std::string& EndpointConfig::effective_prompt() const {
  static const std::string kShipped(assets::extraction_prompt());
  return prompt.empty() ? kShipped : prompt;
}

std::string EndpointConfig::identity() const {
  std::string prompt_id = prompt.empty() || prompt == assets::extraction_prompt()
                              ? std::string(assets::kPromptVersion)
                              : "custom-" + sha256_hex(prompt).substr(0, 12);
  return "remote/" + model + "/" + prompt_id;
}

EndpointConfig endpoint_config_from_json(const json& j) {
  EndpointConfig c;
  c.base_url = j.value("base_url", c.base_url);
  c.model = j.value("model", c.model);
  c.api_key_env = j.value("api_key_env", c.api_key_env);
  c.prompt = j.value("prompt", c.prompt);
  if (j.contains("prompt_file")) c.prompt = read_text_file(j.at("prompt_file").get<std::string>());
  c.timeout_seconds = j.value("timeout_seconds", c.timeout_seconds);
  c.max_concurrent = j.value("max_concurrent", c.max_concurrent);
  c.max_retries = j.value("max_retries", c.max_retries);
  c.backoff_ms = j.value("backoff_ms", c.backoff_ms);
  c.temperature = j.value("temperature", c.temperature);
  c.per_sentence = j.value("per_sentence", c.per_sentence);
  if (c.max_concurrent < 1) fail(ErrorCode::kConfigError, "endpoint.max_concurrent must be >= 1");
  if (c.timeout_seconds <= 0) fail(ErrorCode::kConfigError, "endpoint.timeout_seconds must be > 0");
  return c;
}

HttpChatClient::HttpChatClient(EndpointConfig config) : config_(std::move(config)) {}

std::string HttpChatClient::complete(const std::string& system_prompt, const std::string& user_text) {
  const std::string& url = config_.base_url;
  const size_t scheme_end = url.find("://");
  if (scheme_end == std::string::npos) {
    fail(ErrorCode::kConfigError, "endpoint base_url needs a scheme: " + url);
  }
  const size_t path_start = url.find('/', scheme_end + 3);
  const std::string host = url.substr(0, path_start);
  std::string path = path_start == std::string::npos ? "" : url.substr(path_start);
  while (!path.empty() && path.back() == '/') path.pop_back();
  path += "/chat/completions";

  const json body = {{"model", config_.model},
                     {"temperature", config_.temperature},
                     {"messages",
                      json::array({{{"role", "system"}, {"content", system_prompt}},
                                   {{"role", "user"}, {"content", user_text}}})}};
  httplib::Headers headers;
  if (const char* key = std::getenv(config_.api_key_env.c_str()); key && *key) {
    headers.emplace("Authorization", std::string("Bearer ") + key);
  }

  httplib::Client client(host);
  const auto timeout = std::chrono::milliseconds(static_cast<long>(config_.timeout_seconds * 1000));
  client.set_connection_timeout(timeout);
  client.set_read_timeout(timeout);
  client.set_write_timeout(timeout);

  int backoff = config_.backoff_ms;
  for (int attempt = 0;; ++attempt) {
    auto res = client.Post(path, headers, body.dump(), "application/json");
    if (!res) {
      fail(ErrorCode::kEndpointUnavailable,
           "cannot reach " + host + ": " + httplib::to_string(res.error()));
    }
    if (res->status == 429) {
      if (attempt < config_.max_retries) {
        std::this_thread::sleep_for(std::chrono::milliseconds(backoff));
        backoff *= 2;
        continue;
      }
      fail(ErrorCode::kRateLimited, "endpoint rate limited the request (HTTP 429)");
    }
    if (res->status != 200) {
      fail(ErrorCode::kEndpointUnavailable,
           "endpoint returned HTTP " + std::to_string(res->status));
    }
    try {
      const json reply = json::parse(res->body);
      return reply.at("choices").at(0).at("message").at("content").get<std::string>();
    } catch (const json::exception& e) {
      fail(ErrorCode::kResponseUnparseable, std::string("unexpected completion body: ") + e.what());
    }
  }
}

namespace {

const std::regex& bullet_re() {
  static const std::regex re(R"(^(?:[-*]|\xE2\x80\xA2|\d{1,3}[.)])\s+(.+)$)");
  return re;
}

const std::regex& header_re() {
  static const std::regex re(
      R"(^(?:(?:sentence|item|topic|line)\s*)?["'\xE2\x80\x9C\xE2\x80\x9D]*(\d{2})["'\xE2\x80\x9C\xE2\x80\x9D]*\s*:(.*)$)",
      std::regex::ECMAScript | std::regex::icase);
  return re;
}

std::optional<std::string> match_bullet(const std::string& line) {
  std::smatch m;
  if (!std::regex_match(line, m, bullet_re())) return std::nullopt;
  std::string text = strip_emphasis(m[1].str());
  if (text.empty()) return std::nullopt;
  return text;
}

std::optional<int> match_header(const std::string& line) {
  std::smatch m;
  const std::string cleaned = strip_emphasis(line);
  if (!std::regex_match(cleaned, m, header_re())) return std::nullopt;
  return std::stoi(m[1].str());
}

std::vector<std::string> response_lines(std::string_view response) {
  std::vector<std::string> lines;
  std::istringstream in{std::string(response)};
  std::string line;
  while (std::getline(in, line)) {
    std::string t = trim(line);
    if (!t.empty()) lines.push_back(std::move(t));
  }
  return lines;
}

}  // namespace

std::vector<std::string> parse_phrase_list(std::string_view response) {
  std::vector<std::string> items;
  for (const auto& line : response_lines(response)) {
    if (auto b = match_bullet(line)) items.push_back(std::move(*b));
  }
  if (items.empty()) {
    fail(ErrorCode::kResponseUnparseable, "response contains no bullet or numbered list");
  }
  return items;
}

std::map<int, std::vector<std::string>> parse_report_response(std::string_view response,
                                                              const std::vector<int>& topics) {
  std::map<int, std::vector<std::string>> sections;
  std::optional<int> current;
  size_t bullets = 0;
  for (const auto& line : response_lines(response)) {
    if (auto b = match_bullet(line)) {
      if (!current) {
        fail(ErrorCode::kResponseUnparseable, "list item before any topic header: " + line);
      }
      sections[*current].push_back(std::move(*b));
      ++bullets;
    } else if (auto h = match_header(line)) {
      current = *h;
      sections[*h];
    }
  }
  if (bullets == 0) {
    fail(ErrorCode::kResponseUnparseable, "response contains no bullet or numbered list");
  }
  std::map<int, std::vector<std::string>> out;
  for (int topic : topics) {
    auto it = sections.find(topic);
    if (it == sections.end()) {
      fail(ErrorCode::kResponseUnparseable, "response has no section for topic " + std::to_string(topic));
    }
    out[topic] = it->second;
  }
  return out;
}

std::vector<NounPhrase> extract_noun_phrases_remote(const ReportLine& line, ChatClient& client,
                                                    const EndpointConfig& config) {
  if (normalize_phrase(line.text).empty()) return {};
  const std::string reply =
      client.complete(config.effective_prompt(), topic_prefix(line.topic_number) + line.text);
  return phrases_from_surfaces(parse_phrase_list(reply));
}

std::vector<NounPhrase> extract_noun_phrases_remote(const ReportLine& line,
                                                    const EndpointConfig& config) {
  HttpChatClient client(config);
  return extract_noun_phrases_remote(line, client, config);
}

std::string cache_key(std::string_view prompt, std::string_view sentence,
                      std::string_view extractor_identity) {
  std::string material;
  material.reserve(prompt.size() + sentence.size() + extractor_identity.size() + 2);
  material.append(prompt).push_back('\x1f');
  material.append(sentence).push_back('\x1f');
  material.append(extractor_identity);
  return sha256_hex(material);
}

PhraseCache::PhraseCache(fs::path path) : path_(std::move(path)) {
  if (!fs::exists(*path_)) return;
  std::ifstream in(*path_);
  if (!in) fail(ErrorCode::kCacheCorrupt, "cannot read cache " + path_->string());
  static const std::regex key_re(R"re("key"\s*:\s*"([^"]*)")re");
  std::string line;
  int line_number = 0;
  while (std::getline(in, line)) {
    ++line_number;
    if (trim(line).empty()) continue;
    std::string key_hint = "<unknown>";
    if (std::smatch m; std::regex_search(line, m, key_re)) key_hint = m[1].str();
    try {
      const json j = json::parse(line);
      ExtractionCacheEntry entry;
      entry.key = j.at("key").get<std::string>();
      entry.extractor = j.at("extractor").get<std::string>();
      entry.timestamp = j.value("timestamp", "");
      const json& phrases = j.at("phrases");
      if (sha256_hex(phrases.dump()) != j.at("checksum").get<std::string>()) {
        fail(ErrorCode::kCacheCorrupt, "cache entry " + entry.key + " (line " +
                                           std::to_string(line_number) + ") fails its checksum");
      }
      for (const auto& p : phrases) entry.phrases.push_back(phrase_from_json(p));
      entries_[entry.key] = std::move(entry);
    } catch (const json::exception& e) {
      fail(ErrorCode::kCacheCorrupt, "cache entry " + key_hint + " (line " +
                                         std::to_string(line_number) + ") is unreadable: " + e.what());
    }
  }
}

std::optional<ExtractionCacheEntry> PhraseCache::lookup(const std::string& key) const {
  std::lock_guard lock(mu_);
  auto it = entries_.find(key);
  if (it == entries_.end()) return std::nullopt;
  return it->second;
}

void PhraseCache::store(ExtractionCacheEntry entry) {
  std::lock_guard lock(mu_);
  if (path_) {
    const json phrases = phrases_json(entry.phrases);
    const json line = {{"key", entry.key},
                       {"extractor", entry.extractor},
                       {"phrases", phrases},
                       {"timestamp", entry.timestamp},
                       {"checksum", sha256_hex(phrases.dump())}};
    if (path_->has_parent_path()) fs::create_directories(path_->parent_path());
    std::ofstream out(*path_, std::ios::app);
    if (!out) fail(ErrorCode::kIoError, "cannot append to cache " + path_->string());
    out << line.dump() << '\n';
    out.flush();
  }
  entries_[entry.key] = std::move(entry);
}

size_t PhraseCache::size() const {
  std::lock_guard lock(mu_);
  return entries_.size();
}

ExtractionStrategy parse_strategy(std::string_view name) {
  if (name == "remote") return ExtractionStrategy::kRemote;
  if (name == "rules") return ExtractionStrategy::kRules;
  if (name == "remote-then-rules") return ExtractionStrategy::kRemoteThenRules;
  fail(ErrorCode::kConfigError, "unknown extraction strategy '" + std::string(name) + "'");
}

std::string_view strategy_name(ExtractionStrategy strategy) {
  switch (strategy) {
    case ExtractionStrategy::kRemote: return "remote";
    case ExtractionStrategy::kRules: return "rules";
    case ExtractionStrategy::kRemoteThenRules: return "remote-then-rules";
  }
  return "rules";
}

PhraseExtractor::PhraseExtractor(ExtractionStrategy strategy, EndpointConfig endpoint, RuleSet rules,
                                 PhraseCache* cache, std::shared_ptr<ChatClient> client)
    : strategy_(strategy),
      endpoint_(std::move(endpoint)),
      rules_(std::move(rules)),
      cache_(cache),
      client_(std::move(client)) {}

ChatClient& PhraseExtractor::client() {
  std::lock_guard lock(client_mu_);
  if (!client_) client_ = std::make_shared<HttpChatClient>(endpoint_);
  return *client_;
}

std::optional<LineExtraction> PhraseExtractor::cached(const ReportLine& line,
                                                      const std::string& identity) const {
  if (!cache_) return std::nullopt;
  auto hit = cache_->lookup(cache_key(endpoint_.effective_prompt(), line.text, identity));
  if (!hit) return std::nullopt;
  return LineExtraction{std::move(hit->phrases), hit->extractor, true};
}

LineExtraction PhraseExtractor::store(const ReportLine& line, const std::string& identity,
                                      std::vector<NounPhrase> phrases) {
  if (cache_) {
    cache_->store({cache_key(endpoint_.effective_prompt(), line.text, identity), identity, phrases,
                   now_utc_iso8601()});
  }
  return LineExtraction{std::move(phrases), identity, false};
}

LineExtraction PhraseExtractor::run_rules(const ReportLine& line) {
  if (auto hit = cached(line, rules_.version)) return *hit;
  return store(line, rules_.version, extract_noun_phrases_rules(line, rules_));
}

LineExtraction PhraseExtractor::extract_line(const ReportLine& line) {
  if (line.excluded) return {};
  if (strategy_ == ExtractionStrategy::kRules) return run_rules(line);

  const std::string remote_id = endpoint_.identity();
  if (auto hit = cached(line, remote_id)) return *hit;
  if (strategy_ == ExtractionStrategy::kRemoteThenRules) {
    if (auto hit = cached(line, rules_.version)) return *hit;
  }
  try {
    ++remote_requests_;
    return store(line, remote_id, extract_noun_phrases_remote(line, client(), endpoint_));
  } catch (const Error& e) {
    const bool recoverable = e.code() == ErrorCode::kEndpointUnavailable ||
                             e.code() == ErrorCode::kRateLimited ||
                             e.code() == ErrorCode::kResponseUnparseable;
    if (strategy_ != ExtractionStrategy::kRemoteThenRules || !recoverable) throw;
  }
  return run_rules(line);
}

std::vector<LineExtraction> PhraseExtractor::extract_report(const Report& report) {
  std::vector<LineExtraction> out(report.lines.size());
  if (strategy_ == ExtractionStrategy::kRules || endpoint_.per_sentence) {
    for (size_t i = 0; i < report.lines.size(); ++i) out[i] = extract_line(report.lines[i]);
    return out;
  }

  const std::string remote_id = endpoint_.identity();
  std::vector<size_t> misses;
  for (size_t i = 0; i < report.lines.size(); ++i) {
    const ReportLine& line = report.lines[i];
    if (line.excluded) continue;
    if (auto hit = cached(line, remote_id)) {
      out[i] = std::move(*hit);
    } else if (strategy_ == ExtractionStrategy::kRemoteThenRules && cached(line, rules_.version)) {
      out[i] = *cached(line, rules_.version);
    } else if (normalize_phrase(line.text).empty()) {
      out[i] = store(line, remote_id, {});
    } else {
      misses.push_back(i);
    }
  }
  if (misses.empty()) return out;

  std::string user_text;
  std::vector<int> topics;
  for (size_t i : misses) {
    user_text += topic_prefix(report.lines[i].topic_number) + report.lines[i].text + "\n";
    topics.push_back(report.lines[i].topic_number);
  }
  try {
    ++remote_requests_;
    const std::string reply = client().complete(endpoint_.effective_prompt(), user_text);
    auto sections = parse_report_response(reply, topics);
    for (size_t i : misses) {
      out[i] = store(report.lines[i], remote_id,
                     phrases_from_surfaces(sections.at(report.lines[i].topic_number)));
    }
  } catch (const Error& e) {
    const bool recoverable = e.code() == ErrorCode::kEndpointUnavailable ||
                             e.code() == ErrorCode::kRateLimited ||
                             e.code() == ErrorCode::kResponseUnparseable;
    if (strategy_ != ExtractionStrategy::kRemoteThenRules || !recoverable) {
      fail(e.code(), report.report_id + ": " + e.what());
    }
    for (size_t i : misses) out[i] = run_rules(report.lines[i]);
  }
  return out;
}

std::vector<NounPhrase> extract_with_cache(const ReportLine& line, ExtractionStrategy strategy,
                                           PhraseCache& cache, const EndpointConfig& endpoint,
                                           std::shared_ptr<ChatClient> client) {
  PhraseExtractor extractor(strategy, endpoint, default_rule_set(), &cache, std::move(client));
  return extractor.extract_line(line).phrases;
}

std::vector<ExtractedReport> extract_corpus(const std::vector<Report>& corpus,
                                            PhraseExtractor& extractor, int max_concurrent) {
  std::vector<ExtractedReport> out(corpus.size());
  std::atomic<size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mu;
  auto work = [&]() {
    for (size_t i = next++; i < corpus.size(); i = next++) {
      try {
        auto lines = extractor.extract_report(corpus[i]);
        ExtractedReport& er = out[i];
        er.report = corpus[i];
        for (auto& l : lines) {
          er.phrases.push_back(std::move(l.phrases));
          er.extractors.push_back(std::move(l.extractor));
        }
      } catch (...) {
        std::lock_guard lock(failure_mu);
        if (!failure) failure = std::current_exception();
        next = corpus.size();
      }
    }
  };
  const int workers = std::max(1, std::min<int>(max_concurrent, static_cast<int>(corpus.size())));
  if (workers == 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) pool.emplace_back(work);
    for (auto& t : pool) t.join();
  }
  if (failure) std::rethrow_exception(failure);
  return out;
}

json to_json(const ExtractedReport& extracted) {
  json j = to_json(extracted.report);
  for (size_t i = 0; i < extracted.report.lines.size(); ++i) {
    j["lines"][i]["phrases"] = phrases_json(extracted.phrases.at(i));
    j["lines"][i]["extractor"] = extracted.extractors.at(i);
  }
  return j;
}

ExtractedReport extracted_from_json(const json& j) {
  ExtractedReport er;
  er.report = report_from_json(j);
  try {
    for (const auto& jl : j.at("lines")) {
      std::vector<NounPhrase> phrases;
      for (const auto& p : jl.value("phrases", json::array())) phrases.push_back(phrase_from_json(p));
      er.phrases.push_back(std::move(phrases));
      er.extractors.push_back(jl.value("extractor", ""));
    }
  } catch (const json::exception& e) {
    fail(ErrorCode::kIoError, std::string("bad extracted report: ") + e.what());
  }
  return er;
}

void write_extracted_jsonl(const std::vector<ExtractedReport>& corpus, std::ostream& out) {
  for (const auto& er : corpus) out << to_json(er).dump() << '\n';
}

std::vector<ExtractedReport> read_extracted_jsonl(std::istream& in) {
  std::vector<ExtractedReport> corpus;
  for (const auto& j : read_jsonl(in)) corpus.push_back(extracted_from_json(j));
  return corpus;
}

}  // namespace dentlabel
