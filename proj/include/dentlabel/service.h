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

#ifndef DENTLABEL_SERVICE_H_
#define DENTLABEL_SERVICE_H_

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <thread>
#include <vector>

#include "dentlabel/crop.h"
#include "dentlabel/labeling.h"
#include "dentlabel/study.h"
#include "json.hpp"

namespace httplib {
class Server;
}

namespace dentlabel {

struct RaterToken {
  std::string token;
  std::string rater_id;
  RaterGroup group = RaterGroup::kExpert;
};

struct ServiceConfig {
  std::string host = "127.0.0.1";
  int port = 8080;
  std::filesystem::path dataset_path;     // ExpertImageDataset JSON
  std::filesystem::path vocabulary_path;  // empty: reference vocabulary
  std::filesystem::path crops_dir;        // <crop id>.png, un-resized view rasters
  std::filesystem::path log_path;         // empty: in-memory store
  std::filesystem::path static_dir;       // empty: no UI bundle
  std::vector<RaterToken> raters;
  std::uint64_t seed = 0;
  std::string cors_origin = "*";
};

// {"host", "port", "dataset", "vocabulary", "crops_dir", "log", "static_dir",
//  "seed", "cors_origin", "raters": [{"token"?, "id", "group"}]}
ServiceConfig service_config_from_json(const nlohmann::json& j);

// Append-only JSONL log plus the latest-record-wins index derived from it.
class AnnotationStore {
 public:
  using Key = std::pair<std::string, CropRef>;

  // Replays an existing log at `path`; an empty path keeps everything in
  // memory.
  AnnotationStore(std::filesystem::path path, int conditions);

  AnnotationRecord append(AnnotationRecord record);

  std::vector<AnnotationRecord> log() const;
  std::map<Key, AnnotationRecord> current() const;
  std::optional<AnnotationRecord> find(const std::string& rater, const CropRef& crop) const;

  static std::map<Key, AnnotationRecord> rebuild(const std::vector<AnnotationRecord>& log);
  static std::vector<AnnotationRecord> read_log(const std::filesystem::path& path);

 private:
  std::filesystem::path path_;
  int conditions_;
  mutable std::shared_mutex mutex_;
  std::vector<AnnotationRecord> log_;
  std::map<Key, AnnotationRecord> current_;
  std::ofstream out_;
};

// HTTP-independent service state. Every handler returns the JSON body; errors
// propagate as dentlabel::Error.
class AnnotationService {
 public:
  AnnotationService(ServiceConfig config, ConditionVocabulary vocabulary, ExpertImageDataset dataset);
  // Loads dataset and vocabulary from the config paths.
  static std::unique_ptr<AnnotationService> from_config(const ServiceConfig& config);

  nlohmann::json conditions() const;
  nlohmann::json next_task(const std::string& token) const;
  nlohmann::json submit(const nlohmann::json& body);
  nlohmann::json agreement() const;
  std::string crop_png(const std::string& crop_id) const;

  // The rater's seeded item order.
  std::vector<CropRef> session_order(const std::string& rater_id) const;
  const RaterToken& rater(const std::string& token) const;
  const AnnotationStore& store() const { return store_; }
  int item_count() const { return static_cast<int>(crops_.size()); }

  void mount(httplib::Server& server);

 private:
  const CropRef& crop(const std::string& crop_id) const;

  ServiceConfig config_;
  ConditionVocabulary vocabulary_;
  std::vector<CropRef> crops_;
  std::map<std::string, CropRef> by_id_;
  std::map<std::string, RaterToken> tokens_;
  AnnotationStore store_;
  mutable std::mutex png_mutex_;
  mutable std::map<std::string, std::string> png_cache_;
};

// Runs the service on a background thread. port 0 binds any free port.
class ServiceRunner {
 public:
  explicit ServiceRunner(AnnotationService& service);
  ~ServiceRunner();

  int start(const std::string& host, int port);
  void stop();
  // Blocks until the server stops.
  void wait();

 private:
  std::unique_ptr<httplib::Server> server_;
  std::thread thread_;
};

}  // namespace dentlabel

#endif  // DENTLABEL_SERVICE_H_
