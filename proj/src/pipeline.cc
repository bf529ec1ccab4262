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

#include "dentlabel/pipeline.h"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

#include "CLI11.hpp"
#include "dentlabel/assets.h"
#include "dentlabel/crop.h"
#include "dentlabel/error.h"
#include "dentlabel/image.h"
#include "dentlabel/io.h"
#include "dentlabel/labeling.h"
#include "dentlabel/metrics.h"
#include "dentlabel/phrase.h"
#include "dentlabel/report.h"
#include "dentlabel/service.h"
#include "dentlabel/study.h"

namespace dentlabel {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// JSON config: top-level scalars feed global options, an object named after a
// subcommand feeds that subcommand, and "defaults" feeds whichever subcommand
// runs (keys it does not know are skipped). Keys may use '_' for '-'.
class JsonConfig : public CLI::Config {
 public:
  explicit JsonConfig(CLI::App* app) : app_(app) {}

  std::string to_config(const CLI::App*, bool, bool, std::string) const override { return "{}"; }

  std::vector<CLI::ConfigItem> from_config(std::istream& input) const override {
    json j;
    try {
      input >> j;
    } catch (const json::exception& e) {
      throw CLI::ConversionError(std::string("config is not valid JSON: ") + e.what());
    }
    if (!j.is_object()) throw CLI::ConversionError("config must be a JSON object");
    CLI::App* active = app_->get_subcommands().empty() ? nullptr : app_->get_subcommands().front();

    std::vector<CLI::ConfigItem> items;
    for (const auto& [key, value] : j.items()) {
      if (key == "defaults") {
        if (!active || !value.is_object()) continue;
        for (const auto& [k, v] : value.items()) {
          if (active->get_option_no_throw("--" + option_name(k))) items.push_back(item(active->get_name(), k, v));
        }
      } else if (value.is_object()) {
        if (!app_->get_subcommand_no_throw(key)) {
          throw CLI::ConversionError("config section '" + key + "' names no subcommand");
        }
        if (!active || active->get_name() != key) continue;
        for (const auto& [k, v] : value.items()) {
          if (!active->get_option_no_throw("--" + option_name(k))) {
            throw CLI::ConversionError("config key '" + key + "." + k + "' is not an option of " + key);
          }
          items.push_back(item(key, k, v));
        }
      } else {
        items.push_back(item("", key, value));
      }
    }
    return items;
  }

 private:
  static std::string option_name(std::string key) {
    std::replace(key.begin(), key.end(), '_', '-');
    return key;
  }

  static std::string scalar(const json& v) {
    if (v.is_string()) return v.get<std::string>();
    if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
    return v.dump();
  }

  static CLI::ConfigItem item(const std::string& parent, const std::string& key, const json& v) {
    CLI::ConfigItem it;
    if (!parent.empty()) it.parents.push_back(parent);
    it.name = option_name(key);
    if (v.is_array()) {
      for (const auto& e : v) it.inputs.push_back(scalar(e));
    } else {
      it.inputs.push_back(scalar(v));
    }
    return it;
  }

  CLI::App* app_;
};

struct Globals {
  bool dry_run = false;
};

// What a subcommand will read and write; printed instead of running under
// --dry-run.
struct Plan {
  std::string command;
  json inputs = json::object();
  json outputs = json::object();
  json params = json::object();

  json to_json() const {
    return {{"command", command}, {"inputs", inputs}, {"outputs", outputs}, {"params", params}};
  }
};

ConditionVocabulary load_vocabulary(const std::string& path) {
  if (path.empty()) return ConditionVocabulary::reference();
  return ConditionVocabulary::from_json(read_json_file(path));
}

LabelMatrix load_labels(const std::string& path, const ConditionVocabulary& vocabulary) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::kIoError, "cannot open " + path);
  return LabelMatrix::read(in, vocabulary);
}

std::vector<Report> load_corpus_jsonl(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::kIoError, "cannot open " + path);
  return read_corpus_jsonl(in);
}

std::vector<ExtractedReport> load_extracted(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::kIoError, "cannot open " + path);
  return read_extracted_jsonl(in);
}

PresenceFilter load_presence_filter(const std::string& path) {
  if (path.empty()) return PresenceFilter();
  json j = read_json_file(path);
  if (j.is_object()) j = j.value("patterns", json());
  if (!j.is_array()) fail(ErrorCode::kConfigError, path + ": expected a JSON array of patterns");
  std::vector<std::string> patterns;
  for (const auto& p : j) patterns.push_back(p.get<std::string>());
  return PresenceFilter(std::move(patterns));
}

SynonymMap load_synonyms(const std::string& path) {
  return path.empty() ? SynonymMap::shipped() : SynonymMap::from_json(read_json_file(path));
}

std::vector<PredictionRecord> load_predictions(const std::string& path) {
  std::vector<PredictionRecord> out;
  for (const auto& j : read_jsonl_file(path)) out.push_back(prediction_from_json(j));
  return out;
}

std::vector<AnnotationRecord> load_annotations(const std::string& path) {
  std::vector<AnnotationRecord> out;
  for (const auto& j : read_jsonl_file(path)) out.push_back(annotation_from_json(j));
  return out;
}

int resolve_condition(const std::string& text, const ConditionVocabulary& vocabulary) {
  if (!text.empty() && std::all_of(text.begin(), text.end(), ::isdigit)) {
    const int index = std::stoi(text);
    vocabulary.at(index);
    return index;
  }
  if (auto index = vocabulary.resolve(normalize_phrase(text))) return *index;
  fail(ErrorCode::kUnknownCondition, "unknown condition '" + text + "'");
}

void write_json(const std::string& path, const json& j) { write_text_atomic(path, j.dump(2) + "\n"); }

std::string csv_number(double v) {
  std::ostringstream s;
  s.precision(10);
  s << v;
  return s.str();
}

// Builds a directory next to `target` and swaps it in once complete.
void promote_directory(const fs::path& staging, const fs::path& target) {
  if (fs::exists(target)) fs::remove_all(target);
  fs::rename(staging, target);
}

// Rows of a CSV (with header) or a JSON array of objects, as column -> values.
std::map<std::string, std::vector<double>> read_table(const std::string& path) {
  std::map<std::string, std::vector<double>> columns;
  const std::string text = read_text_file(path);
  const auto first = text.find_first_not_of(" \t\r\n");
  if (first != std::string::npos && text[first] == '[') {
    json rows = json::parse(text);
    for (const auto& row : rows) {
      for (const auto& [k, v] : row.items()) {
        if (v.is_number()) columns[k].push_back(v.get<double>());
      }
    }
    return columns;
  }
  std::istringstream in(text);
  std::string line;
  std::vector<std::string> header;
  auto split = [](const std::string& s) {
    std::vector<std::string> cells;
    std::stringstream ss(s);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(trim(cell));
    return cells;
  };
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    auto cells = split(line);
    if (header.empty()) {
      header = cells;
      continue;
    }
    if (cells.size() != header.size()) fail(ErrorCode::kIoError, path + ": ragged CSV row");
    for (size_t i = 0; i < cells.size(); ++i) {
      try {
        columns[header[i]].push_back(std::stod(cells[i]));
      } catch (const std::exception&) {
        // Non-numeric columns (names) are not regressors.
      }
    }
  }
  return columns;
}

json fit_to_json(const RegressionFit& fit) {
  json j = fit.to_json();
  j["n"] = fit.residuals.size();
  return j;
}

json try_fit(const std::function<RegressionFit()>& fn) {
  try {
    return fit_to_json(fn());
  } catch (const Error& e) {
    return {{"error", error_code_name(e.code())}, {"message", e.what()}};
  }
}

std::vector<CropRef> crop_refs_from_jsonl(const std::string& path) {
  std::set<CropRef> refs;
  for (const auto& j : read_jsonl_file(path)) {
    try {
      refs.insert({j.at("image_id").get<std::string>(), FdiTooth(j.at("fdi").get<int>())});
    } catch (const json::exception& e) {
      fail(ErrorCode::kIoError, path + ": record lacks image_id/fdi");
    }
  }
  return {refs.begin(), refs.end()};
}

struct Commands {
  Globals globals;
  std::ostream* out = nullptr;
  std::map<CLI::App*, std::function<void()>> actions;

  // Runs `body` unless --dry-run, in which case the plan is printed.
  void run(const Plan& plan, const std::function<json()>& body) {
    if (globals.dry_run) {
      *out << plan.to_json().dump(2) << '\n';
      return;
    }
    *out << body().dump(2) << '\n';
  }
};

void add_parse_reports(CLI::App& app, Commands& cmds) {
  auto* sub = app.add_subcommand("parse-reports", "Parse report text files into a corpus (JSONL)");
  struct Opts {
    std::string reports, manifest, presence, out;
  };
  auto o = std::make_shared<Opts>();
  sub->add_option("--reports", o->reports, "Directory of <report_id>.txt files")->required()->check(CLI::ExistingDirectory);
  sub->add_option("--manifest", o->manifest, "JSON mapping report_id to image_id")->check(CLI::ExistingFile);
  sub->add_option("--presence-patterns", o->presence, "JSON array of exclusion regexes")->check(CLI::ExistingFile);
  sub->add_option("--out", o->out, "Corpus JSONL")->required();
  cmds.actions[sub] = [o, &cmds] {
    Plan plan{"parse-reports", {{"reports", o->reports}, {"manifest", o->manifest}}, {{"corpus", o->out}},
              {{"presence_patterns", o->presence}}};
    cmds.run(plan, [&] {
      const auto filter = load_presence_filter(o->presence);
      std::vector<std::string> warnings;
      std::optional<fs::path> manifest;
      if (!o->manifest.empty()) manifest = o->manifest;
      const auto corpus = load_corpus(o->reports, manifest, filter, &warnings);
      write_file_atomic(o->out, [&](std::ostream& out) { write_corpus_jsonl(corpus, out); });
      for (const auto& w : warnings) std::cerr << json{{"warning", w}}.dump() << '\n';
      size_t lines = 0;
      size_t excluded = 0;
      for (const auto& r : corpus) {
        lines += r.lines.size();
        for (const auto& l : r.lines) excluded += l.excluded ? 1 : 0;
      }
      return json{{"reports", corpus.size()}, {"lines", lines}, {"excluded", excluded},
                  {"warnings", warnings.size()}};
    });
  };
}

void add_extract_phrases(CLI::App& app, Commands& cmds) {
  auto* sub = app.add_subcommand("extract-phrases", "Extract noun phrases from every report line");
  struct Opts {
    std::string corpus, out, strategy = "rules", cache, endpoint, base_url, model, api_key_env, prompt_file,
                             synonyms;
    int concurrency = 0;
    bool per_sentence = false;
  };
  auto o = std::make_shared<Opts>();
  sub->add_option("--corpus", o->corpus, "Corpus JSONL from parse-reports")->required()->check(CLI::ExistingFile);
  sub->add_option("--out", o->out, "Extracted corpus JSONL")->required();
  sub->add_option("--strategy", o->strategy, "remote | rules | remote-then-rules")
      ->check(CLI::IsMember({"remote", "rules", "remote-then-rules"}));
  sub->add_option("--cache", o->cache, "Phrase cache JSONL");
  sub->add_option("--endpoint", o->endpoint, "Endpoint config JSON")->check(CLI::ExistingFile);
  sub->add_option("--base-url", o->base_url, "Chat completion base URL");
  sub->add_option("--model", o->model, "Model name");
  sub->add_option("--api-key-env", o->api_key_env, "Environment variable holding the API key");
  sub->add_option("--prompt-file", o->prompt_file, "Replacement system prompt")->check(CLI::ExistingFile);
  sub->add_option("--synonyms", o->synonyms, "Synonym map JSON (rule chunker)")->check(CLI::ExistingFile);
  sub->add_option("--concurrency", o->concurrency, "Concurrent remote requests")->check(CLI::Range(1, 64));
  sub->add_flag("--per-sentence", o->per_sentence, "One request per sentence instead of per report");
  cmds.actions[sub] = [o, &cmds] {
    EndpointConfig endpoint = o->endpoint.empty() ? EndpointConfig{} : endpoint_config_from_json(read_json_file(o->endpoint));
    if (!o->base_url.empty()) endpoint.base_url = o->base_url;
    if (!o->model.empty()) endpoint.model = o->model;
    if (!o->api_key_env.empty()) endpoint.api_key_env = o->api_key_env;
    if (!o->prompt_file.empty()) endpoint.prompt = read_text_file(o->prompt_file);
    if (o->concurrency > 0) endpoint.max_concurrent = o->concurrency;
    if (o->per_sentence) endpoint.per_sentence = true;
    const auto strategy = parse_strategy(o->strategy);
    Plan plan{"extract-phrases", {{"corpus", o->corpus}, {"cache", o->cache}}, {{"extracted", o->out}},
              {{"strategy", strategy_name(strategy)},
               {"endpoint", strategy == ExtractionStrategy::kRules ? json() : json(endpoint.base_url)},
               {"extractor", strategy == ExtractionStrategy::kRules ? "rules/v1" : endpoint.identity()}}};
    cmds.run(plan, [&] {
      const auto corpus = load_corpus_jsonl(o->corpus);
      std::unique_ptr<PhraseCache> cache =
          o->cache.empty() ? std::make_unique<PhraseCache>() : std::make_unique<PhraseCache>(o->cache);
      const RuleSet rules =
          o->synonyms.empty() ? default_rule_set() : rule_set_from_synonyms(read_json_file(o->synonyms));
      PhraseExtractor extractor(strategy, endpoint, rules, cache.get());
      const auto extracted = extract_corpus(corpus, extractor, endpoint.max_concurrent);
      write_file_atomic(o->out, [&](std::ostream& out) { write_extracted_jsonl(extracted, out); });
      std::map<std::string, int> by_extractor;
      for (const auto& r : extracted) {
        for (const auto& e : r.extractors) {
          if (!e.empty()) ++by_extractor[e];
        }
      }
      return json{{"reports", extracted.size()}, {"lines_by_extractor", by_extractor},
                  {"remote_requests", extractor.remote_requests()}, {"cache_entries", cache->size()}};
    });
  };
}

void add_build_vocab(CLI::App& app, Commands& cmds) {
  auto* sub = app.add_subcommand("build-vocab", "Select the condition vocabulary by frequency");
  struct Opts {
    std::string extracted, frequencies, allowlist, synonyms, out, counts_out;
    long min_count = 150;
  };
  auto o = std::make_shared<Opts>();
  auto* ex = sub->add_option("--extracted", o->extracted, "Extracted corpus JSONL")->check(CLI::ExistingFile);
  auto* fr = sub->add_option("--frequencies", o->frequencies, "Phrase frequency table JSON")->check(CLI::ExistingFile);
  ex->excludes(fr);
  sub->add_option("--min-count", o->min_count, "Keep phrases occurring more than this")->check(CLI::NonNegativeNumber);
  sub->add_option("--allowlist", o->allowlist, "Allowlist JSON array")->check(CLI::ExistingFile);
  sub->add_option("--synonyms", o->synonyms, "Synonym map JSON")->check(CLI::ExistingFile);
  sub->add_option("--out", o->out, "Vocabulary JSON")->required();
  sub->add_option("--counts-out", o->counts_out, "Full grouped frequency table JSON");
  cmds.actions[sub] = [o, &cmds] {
    if (o->extracted.empty() && o->frequencies.empty()) {
      fail(ErrorCode::kConfigError, "build-vocab needs --extracted or --frequencies");
    }
    Plan plan{"build-vocab",
              {{"extracted", o->extracted}, {"frequencies", o->frequencies}, {"allowlist", o->allowlist},
               {"synonyms", o->synonyms}},
              {{"vocabulary", o->out}, {"counts", o->counts_out}},
              {{"min_count", o->min_count}}};
    cmds.run(plan, [&] {
      const auto synonyms = load_synonyms(o->synonyms);
      const auto allowlist = allowlist_from_json(o->allowlist.empty() ? json::parse(assets::allowlist_json())
                                                                      : read_json_file(o->allowlist));
      FrequencyTable table;
      if (!o->extracted.empty()) {
        table = count_phrases(load_extracted(o->extracted), synonyms);
      } else {
        for (const auto& [k, v] : frequency_table_from_json(read_json_file(o->frequencies))) {
          table[synonyms.canonical(normalize_phrase(k))] += v;
        }
      }
      const auto vocabulary = build_vocabulary(table, o->min_count, allowlist, synonyms);
      write_json(o->out, vocabulary.to_json());
      if (!o->counts_out.empty()) write_json(o->counts_out, json(table));
      json names = json::array();
      for (const auto& c : vocabulary.conditions()) names.push_back({{"index", c.index}, {"name", c.name}, {"frequency", c.frequency}});
      return json{{"conditions", names}, {"candidates", table.size()}};
    });
  };
}

void add_link_labels(CLI::App& app, Commands& cmds) {
  auto* sub = app.add_subcommand("link-labels", "Link teeth to conditions and build the label matrix");
  struct Opts {
    std::string extracted, corpus, vocab, segmentation, out, summary_out;
    double threshold = 0.5;
  };
  auto o = std::make_shared<Opts>();
  auto* ex = sub->add_option("--extracted", o->extracted, "Extracted corpus JSONL")->check(CLI::ExistingFile);
  auto* co = sub->add_option("--corpus", o->corpus, "Parsed corpus JSONL (rule-based extraction is applied)")
                 ->check(CLI::ExistingFile);
  ex->excludes(co);
  sub->add_option("--vocab", o->vocab, "Vocabulary JSON (default: reference vocabulary)")->check(CLI::ExistingFile);
  sub->add_option("--segmentation", o->segmentation, "Segmentation manifest; adds all-zero records")
      ->check(CLI::ExistingFile);
  sub->add_option("--threshold", o->threshold, "Detection score threshold")->check(CLI::Range(0.0, 1.0));
  sub->add_option("--out", o->out, "Label matrix JSONL")->required();
  sub->add_option("--summary-out", o->summary_out, "Summary JSON");
  cmds.actions[sub] = [o, &cmds] {
    if (o->extracted.empty() && o->corpus.empty()) fail(ErrorCode::kConfigError, "link-labels needs --extracted or --corpus");
    Plan plan{"link-labels",
              {{"extracted", o->extracted}, {"corpus", o->corpus}, {"vocabulary", o->vocab},
               {"segmentation", o->segmentation}},
              {{"labels", o->out}, {"summary", o->summary_out}},
              {{"threshold", o->threshold}}};
    cmds.run(plan, [&] {
      const auto vocabulary = load_vocabulary(o->vocab);
      std::vector<ExtractedReport> extracted;
      if (!o->extracted.empty()) {
        extracted = load_extracted(o->extracted);
      } else {
        PhraseExtractor extractor(ExtractionStrategy::kRules, {}, default_rule_set(), nullptr);
        extracted = extract_corpus(load_corpus_jsonl(o->corpus), extractor, 1);
      }
      std::optional<SegmentedTeeth> segmented;
      if (!o->segmentation.empty()) {
        segmented = load_segmentation_manifest(o->segmentation, o->threshold).segmented_teeth();
      }
      const auto labels = build_label_matrix(extracted, vocabulary, segmented ? &*segmented : nullptr);
      write_file_atomic(o->out, [&](std::ostream& out) { labels.write_jsonl(out); });
      const json summary = labels.summary();
      if (!o->summary_out.empty()) write_json(o->summary_out, summary);
      return summary;
    });
  };
}

void add_ingest_segmentation(CLI::App& app, Commands& cmds) {
  auto* sub = app.add_subcommand("ingest-segmentation", "Validate and normalize a segmentation manifest");
  struct Opts {
    std::string manifest, out;
    double threshold = 0.5;
  };
  auto o = std::make_shared<Opts>();
  sub->add_option("--manifest", o->manifest, "Segmentation manifest JSON")->required()->check(CLI::ExistingFile);
  sub->add_option("--threshold", o->threshold, "Detection score threshold")->check(CLI::Range(0.0, 1.0));
  sub->add_option("--out", o->out, "Normalized manifest JSON")->required();
  cmds.actions[sub] = [o, &cmds] {
    Plan plan{"ingest-segmentation", {{"manifest", o->manifest}}, {{"instances", o->out}},
              {{"threshold", o->threshold}}};
    cmds.run(plan, [&] {
      const auto set = load_segmentation_manifest(o->manifest, o->threshold);
      json normalized = set.to_json();
      normalized["threshold"] = o->threshold;
      write_json(o->out, normalized);
      return json{{"images", set.images.size()}, {"instances", set.instances.size()}};
    });
  };
}

void add_make_crops(CLI::App& app, Commands& cmds) {
  auto* sub = app.add_subcommand("make-crops", "Compute tooth crop windows and optionally write crop PNGs");
  struct Opts {
    std::string segmentation, images, context = "both", out;
    double threshold = 0.5;
    int less_side = 224, more_side = 380, output_side = 224;
  };
  auto o = std::make_shared<Opts>();
  sub->add_option("--segmentation", o->segmentation, "Segmentation manifest JSON")->required()->check(CLI::ExistingFile);
  sub->add_option("--threshold", o->threshold, "Detection score threshold")->check(CLI::Range(0.0, 1.0));
  sub->add_option("--images", o->images, "Directory of <image_id>.png radiographs")->check(CLI::ExistingDirectory);
  sub->add_option("--context", o->context, "less | more | both")->check(CLI::IsMember({"less", "more", "both"}));
  sub->add_option("--less-side", o->less_side, "Less-context window side")->check(CLI::Range(1, 8192));
  sub->add_option("--more-side", o->more_side, "More-context window side")->check(CLI::Range(1, 8192));
  sub->add_option("--output-side", o->output_side, "Model input side")->check(CLI::Range(1, 8192));
  sub->add_option("--out", o->out, "Output directory")->required();
  cmds.actions[sub] = [o, &cmds] {
    Plan plan{"make-crops", {{"segmentation", o->segmentation}, {"images", o->images}},
              {{"directory", o->out}, {"manifest", (fs::path(o->out) / "crops.jsonl").string()}},
              {{"threshold", o->threshold}, {"context", o->context}, {"less_side", o->less_side},
               {"more_side", o->more_side}, {"output_side", o->output_side}}};
    cmds.run(plan, [&] {
      const auto set = load_segmentation_manifest(o->segmentation, o->threshold);
      const CropGeometry geometry{o->less_side, o->more_side, o->output_side};
      std::vector<ContextKind> kinds;
      if (o->context != "more") kinds.push_back(ContextKind::kLess);
      if (o->context != "less") kinds.push_back(ContextKind::kMore);

      const fs::path target(o->out);
      const fs::path staging = target.string() + ".tmp";
      if (fs::exists(staging)) fs::remove_all(staging);
      fs::create_directories(staging);
      const bool pixels = !o->images.empty();
      if (pixels) {
        for (auto k : kinds) fs::create_directories(staging / std::string(context_name(k)));
        if (o->context != "less") fs::create_directories(staging / "view");
      }

      std::vector<json> rows;
      std::string loaded_id;
      GrayImage image;
      for (const auto& inst : set.instances) {
        const ImageDims& dims = set.dims(inst.image_id);
        if (pixels && loaded_id != inst.image_id) {
          image = read_png(fs::path(o->images) / (inst.image_id + ".png"));
          loaded_id = inst.image_id;
        }
        const std::string id = CropRef{inst.image_id, inst.tooth}.id();
        for (auto kind : kinds) {
          const CropSpec spec = make_crop_spec(inst, kind, dims, geometry);
          json row = to_json(spec);
          row["crop_id"] = id;
          rows.push_back(std::move(row));
          if (!pixels) continue;
          const fs::path dir = staging / std::string(context_name(kind));
          write_png(dir / (id + ".png"), extract_crop(image, spec));
          if (kind == ContextKind::kMore) write_png(staging / "view" / (id + ".png"), extract_window(image, spec));
        }
      }
      {
        std::ofstream out(staging / "crops.jsonl");
        for (const auto& r : rows) out << r.dump() << '\n';
        if (!out) fail(ErrorCode::kIoError, "cannot write crop manifest");
      }
      promote_directory(staging, target);
      return json{{"instances", set.instances.size()}, {"crops", rows.size()}, {"pixels", pixels}};
    });
  };
}

void add_split(CLI::App& app, Commands& cmds) {
  auto* sub = app.add_subcommand("split", "Split crops into train/val/test by image");
  struct Opts {
    std::string crops, out;
    std::vector<double> ratios{0.70, 0.15, 0.15};
    std::uint64_t seed = 0;
  };
  auto o = std::make_shared<Opts>();
  sub->add_option("--crops", o->crops, "JSONL with image_id and fdi per record")->required()->check(CLI::ExistingFile);
  sub->add_option("--ratios", o->ratios, "train,val,test")->delimiter(',')->expected(3);
  sub->add_option("--seed", o->seed, "Shuffle seed");
  sub->add_option("--out", o->out, "Split manifest JSON")->required();
  cmds.actions[sub] = [o, &cmds] {
    Plan plan{"split", {{"crops", o->crops}}, {{"split", o->out}}, {{"ratios", o->ratios}, {"seed", o->seed}}};
    cmds.run(plan, [&] {
      const auto manifest =
          split_dataset(crop_refs_from_jsonl(o->crops), {o->ratios[0], o->ratios[1], o->ratios[2]}, o->seed);
      write_json(o->out, manifest.to_json());
      json counts = json::object();
      for (const auto& [split, n] : manifest.image_counts()) counts[std::string(split_name(split))] = n;
      return json{{"crops", manifest.entries.size()}, {"images", counts}};
    });
  };
}

void add_oversample(CLI::App& app, Commands& cmds) {
  auto* sub = app.add_subcommand("oversample", "Repeat positive training crops of one condition");
  struct Opts {
    std::string split, labels, vocab, condition, out;
    int factor = 10;
  };
  auto o = std::make_shared<Opts>();
  sub->add_option("--split", o->split, "Split manifest JSON")->required()->check(CLI::ExistingFile);
  sub->add_option("--labels", o->labels, "Label matrix JSONL")->required()->check(CLI::ExistingFile);
  sub->add_option("--vocab", o->vocab, "Vocabulary JSON")->check(CLI::ExistingFile);
  sub->add_option("--condition", o->condition, "Condition index or name")->required();
  sub->add_option("--factor", o->factor, "Repetitions of each positive")->check(CLI::Range(1, 1000));
  sub->add_option("--out", o->out, "Oversampled manifest JSON")->required();
  cmds.actions[sub] = [o, &cmds] {
    Plan plan{"oversample", {{"split", o->split}, {"labels", o->labels}, {"vocabulary", o->vocab}},
              {{"split", o->out}}, {{"condition", o->condition}, {"factor", o->factor}}};
    cmds.run(plan, [&] {
      const auto vocabulary = load_vocabulary(o->vocab);
      const int condition = resolve_condition(o->condition, vocabulary);
      const auto labels = load_labels(o->labels, vocabulary);
      const auto manifest = SplitManifest::from_json(read_json_file(o->split));
      const auto result = oversample_positives(manifest, labels, condition, o->factor);
      write_json(o->out, result.to_json());
      return json{{"condition", condition}, {"train_before", manifest.expanded(Split::kTrain).size()},
                  {"train_after", result.expanded(Split::kTrain).size()}};
    });
  };
}

void add_evaluate(CLI::App& app, Commands& cmds) {
  auto* sub = app.add_subcommand("evaluate", "Per-condition MCC and loss of classifier predictions");
  struct Opts {
    std::string predictions, labels, vocab, split, subset, out, csv;
    double alpha = 0.5, epsilon = 1e-8;
  };
  auto o = std::make_shared<Opts>();
  sub->add_option("--predictions", o->predictions, "Predictions JSONL")->required()->check(CLI::ExistingFile);
  sub->add_option("--labels", o->labels, "Label matrix JSONL")->required()->check(CLI::ExistingFile);
  sub->add_option("--vocab", o->vocab, "Vocabulary JSON")->check(CLI::ExistingFile);
  sub->add_option("--split", o->split, "Split manifest JSON")->check(CLI::ExistingFile);
  sub->add_option("--subset", o->subset, "train | val | test (requires --split)")
      ->check(CLI::IsMember({"train", "val", "test"}));
  sub->add_option("--alpha", o->alpha, "Loss mixing weight")->check(CLI::Range(0.0, 1.0));
  sub->add_option("--epsilon", o->epsilon, "Soft-MCC denominator epsilon")->check(CLI::PositiveNumber);
  sub->add_option("--out", o->out, "Evaluation report JSON")->required();
  sub->add_option("--csv", o->csv, "Per-condition CSV");
  cmds.actions[sub] = [o, &cmds] {
    if (!o->subset.empty() && o->split.empty()) fail(ErrorCode::kConfigError, "--subset requires --split");
    LossConfig loss{o->alpha, o->epsilon, 1e-7};
    loss.validate();
    Plan plan{"evaluate",
              {{"predictions", o->predictions}, {"labels", o->labels}, {"vocabulary", o->vocab}, {"split", o->split}},
              {{"report", o->out}, {"csv", o->csv}},
              {{"subset", o->subset}, {"alpha", o->alpha}, {"epsilon", o->epsilon}}};
    cmds.run(plan, [&] {
      const auto vocabulary = load_vocabulary(o->vocab);
      const auto labels = load_labels(o->labels, vocabulary);
      auto predictions = load_predictions(o->predictions);
      if (!o->subset.empty()) {
        const auto manifest = SplitManifest::from_json(read_json_file(o->split));
        const Split wanted = parse_split(o->subset);
        std::set<CropRef> keep;
        for (const auto& e : manifest.entries) {
          if (e.split == wanted) keep.insert(e.crop);
        }
        std::erase_if(predictions, [&](const auto& p) { return !keep.count(p.crop); });
      }
      std::map<int, std::map<CropRef, PredictionRecord>> by_condition;
      for (const auto& p : predictions) {
        vocabulary.at(p.condition);
        by_condition[p.condition][p.crop] = p;
      }
      json rows = json::array();
      double sum = 0;
      int evaluated = 0;
      std::string csv = "index,name,support,tp,fp,fn,tn,mcc,bce,loss\n";
      for (const auto& c : vocabulary.conditions()) {
        const auto it = by_condition.find(c.index);
        if (it == by_condition.end()) {
          rows.push_back({{"index", c.index}, {"name", c.name}, {"support", 0}, {"mcc", nullptr}});
          continue;
        }
        LabelVector predicted;
        LabelVector truth;
        std::vector<double> y;
        std::vector<double> p;
        for (const auto& [crop, rec] : it->second) {
          const bool t = labels.positive(crop.image_id, crop.tooth, c.index);
          predicted.push_back(rec.prediction);
          truth.push_back(t);
          y.push_back(t ? 1.0 : 0.0);
          p.push_back(rec.probability);
        }
        const auto counts = confusion_from_predictions(predicted, truth);
        const double m = mcc(counts);
        const double b = bce(y, p, loss.clamp);
        const double l = combined_loss(y, p, loss);
        sum += m;
        ++evaluated;
        rows.push_back({{"index", c.index}, {"name", c.name}, {"support", predicted.size()},
                        {"tp", counts.tp}, {"fp", counts.fp}, {"fn", counts.fn}, {"tn", counts.tn},
                        {"mcc", m}, {"bce", b}, {"loss", l}});
        csv += std::to_string(c.index) + "," + c.name + "," + std::to_string(predicted.size()) + "," +
               csv_number(counts.tp) + "," + csv_number(counts.fp) + "," + csv_number(counts.fn) + "," +
               csv_number(counts.tn) + "," + csv_number(m) + "," + csv_number(b) + "," + csv_number(l) + "\n";
      }
      const json report = {{"conditions", rows},
                           {"mean_mcc", evaluated ? json(sum / evaluated) : json(nullptr)},
                           {"subset", o->subset.empty() ? json(nullptr) : json(o->subset)},
                           {"loss", {{"alpha", loss.alpha}, {"epsilon", loss.epsilon}, {"clamp", loss.clamp}}}};
      write_json(o->out, report);
      if (!o->csv.empty()) write_text_atomic(o->csv, csv);
      return json{{"mean_mcc", report["mean_mcc"]}, {"conditions", evaluated}};
    });
  };
}

// Crops every rater in `raters` annotated, in dataset order when given.
std::vector<CropRef> study_items(const std::string& dataset_path, const std::vector<AnnotationRecord>& records) {
  if (!dataset_path.empty()) return ExpertImageDataset::from_json(read_json_file(dataset_path)).crops();
  std::set<CropRef> crops;
  for (const auto& r : records) crops.insert(r.crop);
  return {crops.begin(), crops.end()};
}

void add_kappa(CLI::App& app, Commands& cmds) {
  auto* sub = app.add_subcommand("kappa", "Per-condition Fleiss' kappa over one rater group");
  struct Opts {
    std::string annotations, dataset, vocab, group = "expert", out;
  };
  auto o = std::make_shared<Opts>();
  sub->add_option("--annotations", o->annotations, "Annotation JSONL")->required()->check(CLI::ExistingFile);
  sub->add_option("--dataset", o->dataset, "Expert dataset JSON (item list)")->check(CLI::ExistingFile);
  sub->add_option("--vocab", o->vocab, "Vocabulary JSON")->check(CLI::ExistingFile);
  sub->add_option("--group", o->group, "student | expert | model | all")
      ->check(CLI::IsMember({"student", "expert", "model", "all"}));
  sub->add_option("--out", o->out, "Kappa report JSON")->required();
  cmds.actions[sub] = [o, &cmds] {
    Plan plan{"kappa", {{"annotations", o->annotations}, {"dataset", o->dataset}, {"vocabulary", o->vocab}},
              {{"report", o->out}}, {{"group", o->group}}};
    cmds.run(plan, [&] {
      const auto vocabulary = load_vocabulary(o->vocab);
      const auto records = load_annotations(o->annotations);
      const AnnotationSet set(records, vocabulary.size());
      const auto crops = study_items(o->dataset, records);
      const auto raters = o->group == "all" ? set.raters() : set.raters(parse_group(o->group));
      if (raters.size() < 2) fail(ErrorCode::kInvalidArgument, "kappa needs at least two raters");
      consensus(set, crops, raters, TiePolicy::kNegative);  // completeness check
      json rows = json::array();
      for (const auto& c : vocabulary.conditions()) {
        std::vector<LabelVector> by_rater;
        for (const auto& r : raters) {
          LabelVector v;
          for (const auto& crop : crops) v.push_back((*set.find(r, crop))[c.index - 1]);
          by_rater.push_back(std::move(v));
        }
        json row = {{"index", c.index}, {"name", c.name}};
        try {
          row["kappa"] = fleiss_kappa(AgreementTable::from_binary(by_rater));
          row["degenerate"] = false;
        } catch (const Error& e) {
          if (e.code() != ErrorCode::kDegenerateAgreement) throw;
          row["kappa"] = nullptr;
          row["degenerate"] = true;
        }
        rows.push_back(std::move(row));
      }
      const json report = {{"raters", raters}, {"items", crops.size()}, {"conditions", rows}};
      write_json(o->out, report);
      return report;
    });
  };
}

void add_fit_trend(CLI::App& app, Commands& cmds) {
  auto* sub = app.add_subcommand("fit-trend", "Ordinary least squares over columns of a table");
  struct Opts {
    std::string table, y, out;
    std::vector<std::string> x;
    bool no_intercept = false;
  };
  auto o = std::make_shared<Opts>();
  sub->add_option("--table", o->table, "CSV with header, or JSON array of objects")->required()->check(CLI::ExistingFile);
  sub->add_option("--x", o->x, "Regressor column(s)")->required()->delimiter(',');
  sub->add_option("--y", o->y, "Response column")->required();
  sub->add_flag("--no-intercept", o->no_intercept, "Fit through the origin");
  sub->add_option("--out", o->out, "Fit JSON")->required();
  cmds.actions[sub] = [o, &cmds] {
    Plan plan{"fit-trend", {{"table", o->table}}, {{"fit", o->out}},
              {{"x", o->x}, {"y", o->y}, {"intercept", !o->no_intercept}}};
    cmds.run(plan, [&] {
      const auto columns = read_table(o->table);
      auto column = [&](const std::string& name) -> const std::vector<double>& {
        auto it = columns.find(name);
        if (it == columns.end()) fail(ErrorCode::kConfigError, "table has no numeric column '" + name + "'");
        return it->second;
      };
      const auto& y = column(o->y);
      std::vector<std::vector<double>> rows(y.size());
      for (const auto& name : o->x) {
        const auto& xs = column(name);
        if (xs.size() != y.size()) fail(ErrorCode::kLengthMismatch, "column '" + name + "' has a different length");
        for (size_t i = 0; i < xs.size(); ++i) rows[i].push_back(xs[i]);
      }
      json fit = fit_to_json(ols_fit(rows, y, !o->no_intercept));
      fit["x"] = o->x;
      fit["y"] = o->y;
      write_json(o->out, fit);
      return json{{"r_squared", fit["r_squared"]}, {"coefficients", fit["coefficients"]}, {"n", fit["n"]}};
    });
  };
}

void add_sample_expert_set(CLI::App& app, Commands& cmds) {
  auto* sub = app.add_subcommand("sample-expert-set", "Draw the TP/FP/FN expert evaluation set");
  struct Opts {
    std::string predictions, labels, vocab, split, subset = "test", out;
    std::uint64_t seed = 0;
    int tp = 2, fp = 2, fn = 2;
  };
  auto o = std::make_shared<Opts>();
  sub->add_option("--predictions", o->predictions, "Predictions JSONL")->required()->check(CLI::ExistingFile);
  sub->add_option("--labels", o->labels, "Label matrix JSONL")->required()->check(CLI::ExistingFile);
  sub->add_option("--vocab", o->vocab, "Vocabulary JSON")->check(CLI::ExistingFile);
  sub->add_option("--split", o->split, "Split manifest; restricts to --subset")->check(CLI::ExistingFile);
  sub->add_option("--subset", o->subset, "Split to draw from")->check(CLI::IsMember({"train", "val", "test"}));
  sub->add_option("--seed", o->seed, "Sampling seed");
  sub->add_option("--tp", o->tp, "True positives per condition")->check(CLI::NonNegativeNumber);
  sub->add_option("--fp", o->fp, "False positives per condition")->check(CLI::NonNegativeNumber);
  sub->add_option("--fn", o->fn, "False negatives per condition")->check(CLI::NonNegativeNumber);
  sub->add_option("--out", o->out, "Expert dataset JSON")->required();
  cmds.actions[sub] = [o, &cmds] {
    Plan plan{"sample-expert-set",
              {{"predictions", o->predictions}, {"labels", o->labels}, {"vocabulary", o->vocab}, {"split", o->split}},
              {{"dataset", o->out}},
              {{"seed", o->seed}, {"subset", o->split.empty() ? json(nullptr) : json(o->subset)},
               {"per_condition", {{"tp", o->tp}, {"fp", o->fp}, {"fn", o->fn}}}}};
    cmds.run(plan, [&] {
      const auto vocabulary = load_vocabulary(o->vocab);
      const auto labels = load_labels(o->labels, vocabulary);
      auto predictions = load_predictions(o->predictions);
      if (!o->split.empty()) {
        const auto manifest = SplitManifest::from_json(read_json_file(o->split));
        const Split wanted = parse_split(o->subset);
        std::set<CropRef> keep;
        for (const auto& e : manifest.entries) {
          if (e.split == wanted) keep.insert(e.crop);
        }
        std::erase_if(predictions, [&](const auto& p) { return !keep.count(p.crop); });
      }
      const auto dataset = sample_expert_set(predictions, labels, {o->tp, o->fp, o->fn}, o->seed);
      write_json(o->out, dataset.to_json());
      return json{{"items", dataset.items.size()}};
    });
  };
}

void add_consensus_eval(CLI::App& app, Commands& cmds) {
  auto* sub = app.add_subcommand("consensus-eval", "Leave-one-out consensus scoring and agreement analysis");
  struct Opts {
    std::string annotations, dataset, vocab, tie = "negative", out, csv;
  };
  auto o = std::make_shared<Opts>();
  sub->add_option("--annotations", o->annotations, "Annotation JSONL")->required()->check(CLI::ExistingFile);
  sub->add_option("--dataset", o->dataset, "Expert dataset JSON")->check(CLI::ExistingFile);
  sub->add_option("--vocab", o->vocab, "Vocabulary JSON")->check(CLI::ExistingFile);
  sub->add_option("--tie", o->tie, "Majority-vote tie policy")->check(CLI::IsMember({"negative", "positive"}));
  sub->add_option("--out", o->out, "Report JSON")->required();
  sub->add_option("--csv", o->csv, "Per-condition CSV");
  cmds.actions[sub] = [o, &cmds] {
    Plan plan{"consensus-eval", {{"annotations", o->annotations}, {"dataset", o->dataset}, {"vocabulary", o->vocab}},
              {{"report", o->out}, {"csv", o->csv}}, {{"tie", o->tie}}};
    cmds.run(plan, [&] {
      const auto vocabulary = load_vocabulary(o->vocab);
      const auto records = load_annotations(o->annotations);
      const AnnotationSet set(records, vocabulary.size());
      const auto crops = study_items(o->dataset, records);
      const TiePolicy tie = parse_tie_policy(o->tie);

      const auto scores = leave_one_out_eval(set, crops, tie);
      json raters = json::array();
      for (const auto& s : scores) {
        raters.push_back({{"rater_id", s.rater_id}, {"group", group_name(s.group)}, {"average", s.average},
                          {"per_condition", s.per_condition_mcc}});
      }
      const auto rows = per_condition_analysis(set, crops, tie);
      json conditions = json::array();
      std::set<std::string> groups;
      std::string csv = "index,name,frequency,kappa";
      for (const auto& s : scores) groups.insert(std::string(group_name(s.group)));
      for (const auto& g : groups) csv += ",mcc_" + g;
      for (const auto& g : groups) {
        if (g != "expert") csv += ",aggregate_mcc_" + g;
      }
      csv += "\n";
      for (const auto& r : rows) {
        conditions.push_back({{"index", r.condition}, {"name", vocabulary.at(r.condition).name},
                              {"frequency", r.frequency}, {"kappa", r.kappa ? json(*r.kappa) : json(nullptr)},
                              {"mean_mcc", r.mean_mcc}, {"aggregate_mcc", r.aggregate_mcc}});
        csv += std::to_string(r.condition) + "," + vocabulary.at(r.condition).name + "," +
               std::to_string(r.frequency) + "," + (r.kappa ? csv_number(*r.kappa) : "");
        for (const auto& g : groups) csv += "," + csv_number(r.mean_mcc.at(g));
        for (const auto& g : groups) {
          if (g != "expert") csv += "," + (r.aggregate_mcc.count(g) ? csv_number(r.aggregate_mcc.at(g)) : "");
        }
        csv += "\n";
      }
      json trends = json::object();
      for (const auto& g : groups) {
        trends[g] = {{"kappa_only", try_fit([&] { return fit_agreement_trends(rows, g).kappa_only; })},
                     {"kappa_and_frequency", try_fit([&] { return fit_agreement_trends(rows, g).kappa_and_frequency; })}};
      }
      const json report = {{"items", crops.size()}, {"tie", o->tie}, {"raters", raters},
                           {"group_averages", group_average(scores)}, {"conditions", conditions},
                           {"trends", trends}};
      write_json(o->out, report);
      if (!o->csv.empty()) write_text_atomic(o->csv, csv);
      return json{{"group_averages", report["group_averages"]}, {"items", crops.size()}};
    });
  };
}

void add_serve(CLI::App& app, Commands& cmds) {
  auto* sub = app.add_subcommand("serve", "Run the annotation service");
  struct Opts {
    std::string service_config, dataset, vocab, crops_dir, log, static_dir, host, cors_origin;
    std::vector<std::string> raters;
    int port = -1;
    std::int64_t seed = -1;
  };
  auto o = std::make_shared<Opts>();
  sub->add_option("--service-config", o->service_config, "Service config JSON")->check(CLI::ExistingFile);
  sub->add_option("--dataset", o->dataset, "Expert dataset JSON")->check(CLI::ExistingFile);
  sub->add_option("--vocab", o->vocab, "Vocabulary JSON")->check(CLI::ExistingFile);
  sub->add_option("--crops-dir", o->crops_dir, "Directory of view crops (<crop id>.png)");
  sub->add_option("--log", o->log, "Annotation log JSONL");
  sub->add_option("--static-dir", o->static_dir, "UI bundle directory");
  sub->add_option("--host", o->host, "Bind address");
  sub->add_option("--port", o->port, "Port")->check(CLI::Range(0, 65535));
  sub->add_option("--seed", o->seed, "Item order seed")->check(CLI::NonNegativeNumber);
  sub->add_option("--cors-origin", o->cors_origin, "Allowed UI origin");
  sub->add_option("--rater", o->raters, "id[:group[:token]] (repeatable)");
  cmds.actions[sub] = [o, &cmds] {
    ServiceConfig config =
        o->service_config.empty() ? ServiceConfig{} : service_config_from_json(read_json_file(o->service_config));
    if (!o->dataset.empty()) config.dataset_path = o->dataset;
    if (!o->vocab.empty()) config.vocabulary_path = o->vocab;
    if (!o->crops_dir.empty()) config.crops_dir = o->crops_dir;
    if (!o->log.empty()) config.log_path = o->log;
    if (!o->static_dir.empty()) config.static_dir = o->static_dir;
    if (!o->host.empty()) config.host = o->host;
    if (!o->cors_origin.empty()) config.cors_origin = o->cors_origin;
    if (o->port >= 0) config.port = o->port;
    if (o->seed >= 0) config.seed = static_cast<std::uint64_t>(o->seed);
    for (const auto& spec : o->raters) {
      std::vector<std::string> parts;
      std::stringstream ss(spec);
      std::string part;
      while (std::getline(ss, part, ':')) parts.push_back(part);
      if (parts.empty() || parts[0].empty()) fail(ErrorCode::kConfigError, "bad --rater '" + spec + "'");
      RaterToken t{parts.size() > 2 ? parts[2] : parts[0], parts[0],
                   parse_group(parts.size() > 1 ? parts[1] : "expert")};
      config.raters.push_back(std::move(t));
    }
    json raters = json::array();
    for (const auto& r : config.raters) raters.push_back({{"id", r.rater_id}, {"group", group_name(r.group)}});
    Plan plan{"serve", {{"dataset", config.dataset_path}, {"vocabulary", config.vocabulary_path},
                        {"crops_dir", config.crops_dir}, {"static_dir", config.static_dir}},
              {{"log", config.log_path}},
              {{"host", config.host}, {"port", config.port}, {"seed", config.seed}, {"raters", raters}}};
    if (cmds.globals.dry_run) {
      *cmds.out << plan.to_json().dump(2) << '\n';
      return;
    }
    auto service = AnnotationService::from_config(config);
    ServiceRunner runner(*service);
    const int port = runner.start(config.host, config.port);
    *cmds.out << json{{"listening", config.host + ":" + std::to_string(port)}}.dump() << std::endl;
    runner.wait();
  };
}

int report_error(std::ostream& err, std::string_view code, const std::string& message, int status) {
  err << json{{"error", code}, {"message", message}, {"exit_code", status}}.dump() << '\n';
  return status;
}

}  // namespace

json version_info() {
  return {{"name", "dentlabel"},
          {"version", DENTLABEL_VERSION},
          {"prompt_version", assets::kPromptVersion},
          {"assets",
           {{"prompt", sha256_hex(assets::extraction_prompt())},
            {"synonyms", sha256_hex(assets::synonyms_json())},
            {"allowlist", sha256_hex(assets::allowlist_json())},
            {"presence_patterns", sha256_hex(assets::presence_patterns_json())},
            {"reference_frequencies", sha256_hex(assets::reference_frequencies_json())}}}};
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app("Report-driven tooth labeling pipeline and rater study tools", "dentlabel");
  app.require_subcommand(1);
  app.set_version_flag("--version", version_info().dump(2));
  app.set_config("--config", "", "JSON config; command-line flags take precedence");
  app.config_formatter(std::make_shared<JsonConfig>(&app));

  Commands cmds;
  cmds.out = &out;
  app.add_flag("--dry-run", cmds.globals.dry_run, "Print the plan without reading or writing artifacts");

  add_parse_reports(app, cmds);
  add_extract_phrases(app, cmds);
  add_build_vocab(app, cmds);
  add_link_labels(app, cmds);
  add_ingest_segmentation(app, cmds);
  add_make_crops(app, cmds);
  add_split(app, cmds);
  add_oversample(app, cmds);
  add_evaluate(app, cmds);
  add_kappa(app, cmds);
  add_fit_trend(app, cmds);
  add_sample_expert_set(app, cmds);
  add_consensus_eval(app, cmds);
  add_serve(app, cmds);

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForVersion&) {
    out << app.version() << '\n';
    return kExitOk;
  } catch (const CLI::Success& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    return report_error(err, "UsageError", e.what(), kExitValidation);
  } catch (const Error& e) {
    return report_error(err, error_code_name(e.code()), e.what(),
                        is_validation_error(e.code()) ? kExitValidation : kExitRuntime);
  }

  try {
    for (auto* sub : app.get_subcommands()) cmds.actions.at(sub)();
  } catch (const Error& e) {
    return report_error(err, error_code_name(e.code()), e.what(),
                        is_validation_error(e.code()) ? kExitValidation : kExitRuntime);
  } catch (const fs::filesystem_error& e) {
    return report_error(err, "IoError", e.what(), kExitRuntime);
  } catch (const json::exception& e) {
    return report_error(err, "IoError", e.what(), kExitRuntime);
  } catch (const std::exception& e) {
    return report_error(err, "Internal", e.what(), kExitRuntime);
  }
  return kExitOk;
}

int run_cli(int argc, char** argv) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return run_cli(args, std::cout, std::cerr);
}

}  // namespace dentlabel
