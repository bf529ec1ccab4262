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

#include "dentlabel/service.h"

#include <chrono>
#include <ctime>
#include <random>

#include "dentlabel/error.h"
#include "dentlabel/image.h"
#include "dentlabel/io.h"
#include "dentlabel/random.h"
#include "httplib.h"

namespace dentlabel {

using nlohmann::json;

namespace {

std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(now.time_since_epoch()).count() % 1000;
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[64];
  std::snprintf(buf, sizeof buf, "%04d-%02d-%02dT%02d:%02d:%02d.%03dZ", tm.tm_year + 1900, tm.tm_mon + 1,
                tm.tm_mday, tm.tm_hour, tm.tm_min, tm.tm_sec, static_cast<int>(ms));
  return buf;
}

int http_status(ErrorCode code) {
  switch (code) {
    case ErrorCode::kUnknownRater:
    case ErrorCode::kUnknownCrop:
      return 404;
    case ErrorCode::kBadVectorLength:
    case ErrorCode::kInvalidArgument:
    case ErrorCode::kIoError:
      return 400;
    default:
      return 500;
  }
}

}  // namespace

ServiceConfig service_config_from_json(const json& j) {
  ServiceConfig c;
  try {
    c.host = j.value("host", c.host);
    c.port = j.value("port", c.port);
    if (j.contains("dataset")) c.dataset_path = j.at("dataset").get<std::string>();
    if (j.contains("vocabulary")) c.vocabulary_path = j.at("vocabulary").get<std::string>();
    if (j.contains("crops_dir")) c.crops_dir = j.at("crops_dir").get<std::string>();
    if (j.contains("log")) c.log_path = j.at("log").get<std::string>();
    if (j.contains("static_dir")) c.static_dir = j.at("static_dir").get<std::string>();
    c.seed = j.value("seed", c.seed);
    c.cors_origin = j.value("cors_origin", c.cors_origin);
    for (const auto& r : j.value("raters", json::array())) {
      RaterToken t;
      t.rater_id = r.at("id").get<std::string>();
      t.token = r.value("token", t.rater_id);
      t.group = parse_group(r.value("group", "expert"));
      c.raters.push_back(std::move(t));
    }
  } catch (const json::exception& e) {
    fail(ErrorCode::kConfigError, std::string("bad service config: ") + e.what());
  }
  if (c.port < 0 || c.port > 65535) fail(ErrorCode::kConfigError, "service port out of range");
  return c;
}

AnnotationStore::AnnotationStore(std::filesystem::path path, int conditions)
    : path_(std::move(path)), conditions_(conditions) {
  if (path_.empty()) return;
  if (std::filesystem::exists(path_)) {
    log_ = read_log(path_);
    for (const auto& r : log_) {
      if (static_cast<int>(r.labels.size()) != conditions_) {
        fail(ErrorCode::kBadVectorLength, "annotation log " + path_.string() + " holds a record of length " +
                                              std::to_string(r.labels.size()));
      }
    }
    current_ = rebuild(log_);
  } else if (path_.has_parent_path()) {
    std::filesystem::create_directories(path_.parent_path());
  }
  out_.open(path_, std::ios::app);
  if (!out_) fail(ErrorCode::kIoError, "cannot open annotation log " + path_.string());
}

AnnotationRecord AnnotationStore::append(AnnotationRecord record) {
  if (static_cast<int>(record.labels.size()) != conditions_) {
    fail(ErrorCode::kBadVectorLength, "expected " + std::to_string(conditions_) + " labels, got " +
                                          std::to_string(record.labels.size()));
  }
  if (record.timestamp.empty()) record.timestamp = utc_timestamp();
  std::unique_lock lock(mutex_);
  if (out_.is_open()) {
    // One write per record keeps appends line-atomic.
    const std::string line = to_json(record).dump() + "\n";
    out_.write(line.data(), static_cast<std::streamsize>(line.size()));
    out_.flush();
    if (!out_) fail(ErrorCode::kIoError, "append to " + path_.string() + " failed");
  }
  log_.push_back(record);
  current_[{record.rater_id, record.crop}] = record;
  return record;
}

std::vector<AnnotationRecord> AnnotationStore::log() const {
  std::shared_lock lock(mutex_);
  return log_;
}

std::map<AnnotationStore::Key, AnnotationRecord> AnnotationStore::current() const {
  std::shared_lock lock(mutex_);
  return current_;
}

std::optional<AnnotationRecord> AnnotationStore::find(const std::string& rater, const CropRef& crop) const {
  std::shared_lock lock(mutex_);
  auto it = current_.find({rater, crop});
  if (it == current_.end()) return std::nullopt;
  return it->second;
}

std::map<AnnotationStore::Key, AnnotationRecord> AnnotationStore::rebuild(
    const std::vector<AnnotationRecord>& log) {
  std::map<Key, AnnotationRecord> index;
  for (const auto& r : log) index[{r.rater_id, r.crop}] = r;
  return index;
}

std::vector<AnnotationRecord> AnnotationStore::read_log(const std::filesystem::path& path) {
  std::vector<AnnotationRecord> out;
  for (const auto& j : read_jsonl_file(path)) out.push_back(annotation_from_json(j));
  return out;
}

AnnotationService::AnnotationService(ServiceConfig config, ConditionVocabulary vocabulary,
                                     ExpertImageDataset dataset)
    : config_(std::move(config)),
      vocabulary_(std::move(vocabulary)),
      crops_(dataset.crops()),
      store_(config_.log_path, vocabulary_.size()) {
  if (vocabulary_.empty()) fail(ErrorCode::kConfigError, "annotation service needs a non-empty vocabulary");
  if (crops_.empty()) fail(ErrorCode::kConfigError, "annotation service needs a non-empty dataset");
  if (config_.raters.empty()) fail(ErrorCode::kConfigError, "annotation service needs rater tokens");
  for (const auto& c : crops_) by_id_.emplace(c.id(), c);
  std::map<std::string, RaterGroup> groups;
  for (const auto& r : config_.raters) {
    if (!tokens_.emplace(r.token, r).second) fail(ErrorCode::kConfigError, "duplicate rater token " + r.token);
    if (!groups.emplace(r.rater_id, r.group).second) {
      fail(ErrorCode::kConfigError, "duplicate rater id " + r.rater_id);
    }
  }
  for (const auto& r : store_.log()) {
    auto it = groups.find(r.rater_id);
    if (it == groups.end() || it->second != r.group || !by_id_.count(r.crop.id())) {
      fail(ErrorCode::kConfigError, "annotation log does not match the configured raters and dataset");
    }
  }
}

std::unique_ptr<AnnotationService> AnnotationService::from_config(const ServiceConfig& config) {
  if (config.dataset_path.empty()) fail(ErrorCode::kConfigError, "service config lacks a dataset path");
  auto dataset = ExpertImageDataset::from_json(read_json_file(config.dataset_path));
  auto vocabulary = config.vocabulary_path.empty()
                        ? ConditionVocabulary::reference()
                        : ConditionVocabulary::from_json(read_json_file(config.vocabulary_path));
  return std::make_unique<AnnotationService>(config, std::move(vocabulary), std::move(dataset));
}

json AnnotationService::conditions() const {
  json out = json::array();
  for (const auto& c : vocabulary_.conditions()) out.push_back({{"index", c.index}, {"name", c.name}});
  return out;
}

const RaterToken& AnnotationService::rater(const std::string& token) const {
  auto it = tokens_.find(token);
  if (it == tokens_.end()) fail(ErrorCode::kUnknownRater, "unknown rater '" + token + "'");
  return it->second;
}

const CropRef& AnnotationService::crop(const std::string& crop_id) const {
  auto it = by_id_.find(crop_id);
  if (it == by_id_.end()) fail(ErrorCode::kUnknownCrop, "unknown crop '" + crop_id + "'");
  return it->second;
}

std::vector<CropRef> AnnotationService::session_order(const std::string& rater_id) const {
  std::vector<CropRef> order = crops_;
  std::sort(order.begin(), order.end());
  std::mt19937_64 rng(config_.seed ^ stable_hash(rater_id));
  seeded_shuffle(order, rng);
  return order;
}

json AnnotationService::next_task(const std::string& token) const {
  const auto& r = rater(token);
  const auto order = session_order(r.rater_id);
  int done = 0;
  std::optional<size_t> next;
  for (size_t i = 0; i < order.size(); ++i) {
    if (store_.find(r.rater_id, order[i])) {
      ++done;
    } else if (!next) {
      next = i;
    }
  }
  json out = {{"rater", r.rater_id}, {"completed", done}, {"total", order.size()}};
  if (!next) {
    out["done"] = true;
    return out;
  }
  const auto& c = order[*next];
  out["done"] = false;
  out["cursor"] = *next;
  out["crop_id"] = c.id();
  out["image_url"] = "/crops/" + c.id() + ".png";
  return out;
}

json AnnotationService::submit(const json& body) {
  if (!body.is_object()) fail(ErrorCode::kInvalidArgument, "annotation body must be a JSON object");
  AnnotationRecord record;
  try {
    const auto& r = rater(body.at("rater").get<std::string>());
    record.rater_id = r.rater_id;
    record.group = r.group;
    record.crop = crop(body.at("crop_id").get<std::string>());
    for (const auto& v : body.at("labels")) {
      if (v.is_boolean()) {
        record.labels.push_back(v.get<bool>());
      } else {
        const int bit = v.get<int>();
        if (bit != 0 && bit != 1) fail(ErrorCode::kInvalidArgument, "labels must be 0 or 1");
        record.labels.push_back(static_cast<std::uint8_t>(bit));
      }
    }
  } catch (const json::exception& e) {
    fail(ErrorCode::kInvalidArgument, std::string("bad annotation body: ") + e.what());
  }
  if (static_cast<int>(record.labels.size()) != vocabulary_.size()) {
    fail(ErrorCode::kBadVectorLength, "expected " + std::to_string(vocabulary_.size()) + " labels, got " +
                                          std::to_string(record.labels.size()));
  }
  if (body.value("none", false)) {
    for (auto bit : record.labels) {
      if (bit) fail(ErrorCode::kInvalidArgument, "\"none\" cannot be combined with a marked condition");
    }
  }
  return {{"stored", to_json(store_.append(std::move(record)))}};
}

json AnnotationService::agreement() const {
  const auto current = store_.current();
  std::map<std::string, int> done;
  for (const auto& [key, record] : current) ++done[key.first];

  std::vector<std::string> complete;
  json progress = json::object();
  for (const auto& [token, r] : tokens_) {
    const int n = done.count(r.rater_id) ? done.at(r.rater_id) : 0;
    progress[r.rater_id] = n;
    if (n == item_count()) complete.push_back(r.rater_id);
  }
  std::sort(complete.begin(), complete.end());

  json out = {{"items", item_count()}, {"progress", progress}, {"complete_raters", complete}};
  if (complete.size() < 2) return out;

  json rows = json::array();
  for (const auto& c : vocabulary_.conditions()) {
    std::vector<LabelVector> by_rater;
    for (const auto& rid : complete) {
      LabelVector ratings;
      for (const auto& crop : crops_) ratings.push_back(current.at({rid, crop}).labels[c.index - 1]);
      by_rater.push_back(std::move(ratings));
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
  out["conditions"] = std::move(rows);
  return out;
}

std::string AnnotationService::crop_png(const std::string& crop_id) const {
  crop(crop_id);
  std::lock_guard lock(png_mutex_);
  auto it = png_cache_.find(crop_id);
  if (it != png_cache_.end()) return it->second;
  const auto path = config_.crops_dir / (crop_id + ".png");
  if (config_.crops_dir.empty() || !std::filesystem::exists(path)) {
    fail(ErrorCode::kUnknownCrop, "no raster for crop '" + crop_id + "'");
  }
  std::string bytes = read_text_file(path);
  png_cache_.emplace(crop_id, bytes);
  return bytes;
}

void AnnotationService::mount(httplib::Server& server) {
  const auto guarded = [](auto&& fn) {
    return [fn](const httplib::Request& req, httplib::Response& res) {
      try {
        fn(req, res);
      } catch (const Error& e) {
        res.status = http_status(e.code());
        res.set_content(json{{"error", error_code_name(e.code())}, {"message", e.what()}}.dump(),
                        "application/json");
      } catch (const std::exception& e) {
        res.status = 500;
        res.set_content(json{{"error", "Internal"}, {"message", e.what()}}.dump(), "application/json");
      }
    };
  };
  const auto send = [](httplib::Response& res, const json& body) {
    res.set_content(body.dump(), "application/json");
  };

  server.Get("/conditions", guarded([this, send](const httplib::Request&, httplib::Response& res) {
               send(res, conditions());
             }));
  server.Get("/tasks/next", guarded([this, send](const httplib::Request& req, httplib::Response& res) {
               send(res, next_task(req.get_param_value("rater")));
             }));
  server.Post("/annotations", guarded([this, send](const httplib::Request& req, httplib::Response& res) {
                json body;
                try {
                  body = json::parse(req.body);
                } catch (const json::exception& e) {
                  fail(ErrorCode::kInvalidArgument, std::string("body is not JSON: ") + e.what());
                }
                send(res, submit(body));
              }));
  server.Get("/agreement", guarded([this, send](const httplib::Request&, httplib::Response& res) {
               send(res, agreement());
             }));
  server.Get(R"(/crops/([^/]+)\.png)", guarded([this](const httplib::Request& req, httplib::Response& res) {
               res.set_content(crop_png(req.matches[1]), "image/png");
             }));
  server.Options(R"(.*)", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });
  const std::string origin = config_.cors_origin;
  server.set_post_routing_handler([origin](const httplib::Request&, httplib::Response& res) {
    res.set_header("Access-Control-Allow-Origin", origin);
    res.set_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS");
    res.set_header("Access-Control-Allow-Headers", "Content-Type");
  });
  if (!config_.static_dir.empty()) {
    if (!server.set_mount_point("/", config_.static_dir.string())) {
      fail(ErrorCode::kConfigError, "static directory " + config_.static_dir.string() + " does not exist");
    }
  }
}

ServiceRunner::ServiceRunner(AnnotationService& service) : server_(std::make_unique<httplib::Server>()) {
  service.mount(*server_);
}

ServiceRunner::~ServiceRunner() { stop(); }

int ServiceRunner::start(const std::string& host, int port) {
  int bound = port;
  if (port == 0) {
    bound = server_->bind_to_any_port(host);
  } else if (!server_->bind_to_port(host, port)) {
    bound = -1;
  }
  if (bound < 0) fail(ErrorCode::kIoError, "cannot bind " + host + ":" + std::to_string(port));
  thread_ = std::thread([this] { server_->listen_after_bind(); });
  server_->wait_until_ready();
  return bound;
}

void ServiceRunner::stop() {
  if (server_) server_->stop();
  if (thread_.joinable()) thread_.join();
}

void ServiceRunner::wait() {
  if (thread_.joinable()) thread_.join();
}

}  // namespace dentlabel
