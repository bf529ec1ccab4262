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

// Shared helpers for the test binaries: temporary directories, synthetic
// corpora with known ground truth, and a scriptable chat endpoint.
#ifndef DENTLABEL_TESTS_TEST_SUPPORT_H_
#define DENTLABEL_TESTS_TEST_SUPPORT_H_

#include <stdlib.h>

#include <atomic>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "dentlabel/crop.h"
#include "dentlabel/image.h"
#include "dentlabel/io.h"
#include "dentlabel/pipeline.h"
#include "dentlabel/study.h"
#include "httplib.h"
#include "json.hpp"

namespace dentlabel::testing {

namespace fs = std::filesystem;
using nlohmann::json;

inline fs::path fixture(const std::string& name) { return fs::path(DENTLABEL_FIXTURE_DIR) / name; }

class TempDir {
 public:
  TempDir() {
    std::string pattern = (fs::temp_directory_path() / "dentlabel-XXXXXX").string();
    path_ = mkdtemp(pattern.data());
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const fs::path& path() const { return path_; }
  fs::path operator/(const std::string& name) const { return path_ / name; }

 private:
  fs::path path_;
};

inline void write_file(const fs::path& path, const std::string& text) {
  fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  out << text;
}

struct CliResult {
  int code = 0;
  std::string out;
  std::string err;
};

inline CliResult cli(const std::vector<std::string>& args) {
  std::ostringstream out;
  std::ostringstream err;
  const int code = run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

// Exit status of the real binary, output discarded.
inline int cli_process(const std::string& args) {
  const std::string cmd = std::string("\"") + DENTLABEL_CLI_PATH + "\" " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

inline const char* kTable3Report =
    "01: Anatomical modification in the right and left mandible condyle.\n"
    "02: Missing teeth: 18, 28 and 48.\n"
    "03: Teeth 13 and 38 included and impacted.\n"
    "04: Tooth 36 and 37: endodontic treatment. Partially filled root canals.\n"
    "05: Mild bone loss in the region of the present teeth.\n"
    "06: Modification of the bone trabeculation in the region of tooth 48 compatible with a bone scar.\n"
    "07: Calcification of the right and left stylohyoid ligament complex.\n";

// A synthetic corpus whose expected labels are known by construction.
struct SyntheticCorpus {
  // report_id -> text; report "rep_007" describes image "img_007".
  std::map<std::string, std::string> reports;
  std::map<std::string, std::string> image_of;
  // (image_id, fdi) -> canonical condition names expected after linkage.
  std::map<std::pair<std::string, int>, std::set<std::string>> expected;
  // image_id -> every tooth that appears in a tooth-bearing line.
  std::map<std::string, std::set<int>> teeth;
};

inline SyntheticCorpus make_synthetic_corpus(int count, std::uint64_t seed) {
  // (surface text, canonical name); surfaces exercise plural and variant folding.
  static const std::vector<std::pair<std::string, std::string>> kPhrases = {
      {"endodontic treatment", "endodontic treatment"},
      {"Endodontic treatments", "endodontic treatment"},
      {"coronal destruction", "coronal destruction"},
      {"periapical bone rarefaction", "periapical bone rarefaction"},
      {"unfilled root canal", "unfilled root canals"},
      {"Partially filled root canals", "unfilled root canals"},
      {"metallic core", "metallic core"},
      {"root fragment", "root fragment"},
      {"increased apical periodontal space", "increased apical periodontal space"},
      {"extensive restoration", "extensive restoration"},
      {"idiopathic osteosclerosis", "idiopathic osteosclerosis"},
      {"unfavorable positioning for eruption", "unfavorable positioning for eruption"},
  };
  static const std::vector<int> kPermanent = {11, 12, 13, 14, 15, 16, 17, 18, 21, 22, 23, 24, 25, 26, 27, 28,
                                              31, 32, 33, 34, 35, 36, 37, 38, 41, 42, 43, 44, 45, 46, 47, 48};
  static const std::vector<int> kDeciduous = {53, 54, 55, 63, 64, 65, 73, 74, 75, 83, 84, 85};

  std::mt19937_64 rng(seed);
  auto pick = [&](const auto& v) { return v[std::uniform_int_distribution<size_t>(0, v.size() - 1)(rng)]; };

  SyntheticCorpus corpus;
  for (int r = 0; r < count; ++r) {
    char id[32];
    std::snprintf(id, sizeof id, "rep_%03d", r);
    char img[32];
    std::snprintf(img, sizeof img, "img_%03d", r);
    corpus.image_of[id] = img;
    std::ostringstream text;
    int topic = 1;
    auto line = [&](const std::string& body) {
      char prefix[8];
      std::snprintf(prefix, sizeof prefix, "%02d: ", topic++);
      text << prefix << body << "\n";
    };
    auto link = [&](int fdi, const std::string& canonical) {
      corpus.expected[{img, fdi}].insert(canonical);
      corpus.teeth[img].insert(fdi);
    };

    line("Anatomical modification in the right and left mandible condyle.");
    const int n_lines = 2 + static_cast<int>(rng() % 4);
    for (int k = 0; k < n_lines; ++k) {
      const int kind = static_cast<int>(rng() % 5);
      if (kind == 0) {
        const int a = pick(kPermanent);
        const auto& [surface, canonical] = pick(kPhrases);
        line("Tooth " + std::to_string(a) + ": " + surface + ".");
        link(a, canonical);
      } else if (kind == 1) {
        int a = pick(kPermanent);
        int b = pick(kPermanent);
        while (b == a) b = pick(kPermanent);
        const auto& [s1, c1] = pick(kPhrases);
        const auto& [s2, c2] = pick(kPhrases);
        line("Tooth " + std::to_string(a) + " and " + std::to_string(b) + ": " + s1 + ". " + s2 + ".");
        for (int t : {a, b}) {
          link(t, c1);
          link(t, c2);
        }
      } else if (kind == 2) {
        int a = pick(kPermanent);
        int b = pick(kPermanent);
        while (b == a) b = pick(kPermanent);
        line("Teeth " + std::to_string(a) + " and " + std::to_string(b) + " included and impacted.");
        link(a, "included and impacted");
        link(b, "included and impacted");
      } else if (kind == 3) {
        const int d = pick(kDeciduous);
        line("Tooth " + std::to_string(d) + ": prolonged retention.");
        link(d, "prolonged retention");
      } else {
        line("Missing teeth: " + std::to_string(pick(kPermanent)) + " and " + std::to_string(pick(kPermanent)) + ".");
      }
    }
    line("Mild bone loss in the region of the present teeth.");
    line("Calcification of the right and left stylohyoid ligament complex.");
    corpus.reports[id] = text.str();
  }
  return corpus;
}

// Writes <dir>/reports/*.txt and <dir>/manifest.json.
inline void write_synthetic_corpus(const SyntheticCorpus& corpus, const fs::path& dir) {
  json manifest = json::object();
  for (const auto& [id, text] : corpus.reports) {
    write_file(dir / "reports" / (id + ".txt"), text);
    manifest[id] = corpus.image_of.at(id);
  }
  write_file(dir / "manifest.json", manifest.dump(2));
}

inline Point tooth_position(int fdi, int width, int height) {
  // Quadrants laid out like a panoramic image; deciduous teeth share the
  // permanent quadrant's row.
  const int q = ((fdi / 10) - 1) % 4 + 1;
  const int p = fdi % 10;
  const bool upper = q == 1 || q == 2;
  const bool right = q == 1 || q == 4;
  const double step = (width / 2.0 - 40) / 8.0;
  const double x = right ? width / 2.0 - 20 - (p - 0.5) * step : width / 2.0 + 20 + (p - 0.5) * step;
  const double y = upper ? height * 0.3 : height * 0.7;
  return {x, y};
}

// Segmentation manifest covering every tooth of the corpus plus a few extra
// unlabeled teeth; one low-score duplicate per image exercises the threshold.
inline json make_segmentation_manifest(const SyntheticCorpus& corpus, int width, int height, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> score(0.6, 1.0);
  json images = json::array();
  for (const auto& [id, img] : corpus.image_of) {
    std::set<int> teeth = corpus.teeth.count(img) ? corpus.teeth.at(img) : std::set<int>{};
    teeth.insert(11);
    teeth.insert(46);
    json instances = json::array();
    for (int fdi : teeth) {
      const Point c = tooth_position(fdi, width, height);
      instances.push_back({{"fdi", fdi}, {"score", score(rng)}, {"bbox", {c.x - 20, c.y - 40, 40, 80}}});
    }
    const Point c = tooth_position(11, width, height);
    instances.push_back({{"fdi", 11}, {"score", 0.3}, {"bbox", {c.x - 10, c.y - 10, 20, 20}}});
    images.push_back({{"image_id", img}, {"width", width}, {"height", height}, {"instances", instances}});
  }
  return {{"images", images}};
}

inline GrayImage synthetic_radiograph(int width, int height, std::uint64_t seed) {
  GrayImage image(width, height);
  std::mt19937_64 rng(seed);
  const int phase = static_cast<int>(rng() % 64);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      image.at(x, y) = static_cast<std::uint8_t>((x * 3 + y * 5 + phase + ((x / 17 + y / 11) % 2) * 40) % 256);
    }
  }
  return image;
}

// Report-derived labels and classifier outputs over `images` x 10 teeth for
// the reference vocabulary. Labels are positive with probability 0.3 and each
// hard prediction disagrees with its label with probability `error_rate`.
struct PredictionFixture {
  LabelMatrix labels;
  std::vector<PredictionRecord> predictions;
  std::vector<CropRef> crops;
};

inline PredictionFixture make_prediction_fixture(int images, std::uint64_t seed, double error_rate = 0.3) {
  static const int kTeeth[] = {11, 13, 16, 21, 26, 31, 36, 38, 46, 48};
  const auto vocabulary = ConditionVocabulary::reference();
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0, 1);
  PredictionFixture f;
  std::vector<ToothLabelRecord> records;
  for (int i = 0; i < images; ++i) {
    char id[32];
    std::snprintf(id, sizeof id, "img_%03d", i);
    for (int t : kTeeth) {
      const CropRef crop{id, FdiTooth(t)};
      f.crops.push_back(crop);
      LabelVector labels(vocabulary.size(), 0);
      for (int c = 1; c <= vocabulary.size(); ++c) {
        labels[c - 1] = u(rng) < 0.3;
        const bool wrong = u(rng) < error_rate;
        const bool predicted = labels[c - 1] != wrong;
        const double p = predicted ? 0.5 + 0.5 * u(rng) : 0.5 * u(rng) * 0.99;
        f.predictions.push_back({crop, c, p, static_cast<std::uint8_t>(predicted)});
      }
      records.push_back({crop.image_id, crop.tooth, labels});
    }
  }
  f.labels = LabelMatrix(vocabulary, records, json::object());
  return f;
}

// Simulated annotation log: every rater labels every crop. Each rater sees
// `truth` with each bit flipped with the given probability.
struct SimulatedRater {
  std::string id;
  RaterGroup group;
  double flip;
};

inline std::vector<AnnotationRecord> simulate_annotations(const std::vector<CropRef>& crops,
                                                          const std::vector<LabelVector>& truth,
                                                          const std::vector<SimulatedRater>& raters,
                                                          std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0, 1);
  std::vector<AnnotationRecord> out;
  for (const auto& r : raters) {
    for (size_t i = 0; i < crops.size(); ++i) {
      LabelVector labels = truth[i];
      for (auto& b : labels) b = (u(rng) < r.flip) ? !b : b;
      out.push_back({r.id, r.group, crops[i], labels, "2026-01-01T00:00:00Z"});
    }
  }
  return out;
}

// Chat-completion endpoint whose replies are produced by `respond`, which
// receives the user message and returns (HTTP status, assistant content).
class MockChatServer {
 public:
  using Responder = std::function<std::pair<int, std::string>(const std::string& system, const std::string& user)>;

  explicit MockChatServer(Responder respond) : respond_(std::move(respond)) {
    server_.Post("/v1/chat/completions", [this](const httplib::Request& req, httplib::Response& res) {
      ++requests_;
      const json body = json::parse(req.body);
      last_model_ = body.value("model", "");
      last_temperature_ = body.value("temperature", -1.0);
      auto [status, content] =
          respond_(body.at("messages").at(0).at("content").get<std::string>(),
                   body.at("messages").at(1).at("content").get<std::string>());
      res.status = status;
      if (status == 200) {
        res.set_content(json{{"choices", {{{"message", {{"role", "assistant"}, {"content", content}}}}}}}.dump(),
                        "application/json");
      } else {
        res.set_content(content, "text/plain");
      }
    });
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~MockChatServer() {
    server_.stop();
    thread_.join();
  }

  std::string base_url() const { return "http://127.0.0.1:" + std::to_string(port_) + "/v1"; }
  int requests() const { return requests_.load(); }
  std::string last_model() const { return last_model_; }
  double last_temperature() const { return last_temperature_; }

 private:
  Responder respond_;
  httplib::Server server_;
  int port_ = 0;
  std::thread thread_;
  std::atomic<int> requests_{0};
  std::string last_model_;
  double last_temperature_ = -1;
};

// A port with nothing listening on it.
inline std::string dead_endpoint() {
  httplib::Server probe;
  const int port = probe.bind_to_any_port("127.0.0.1");
  probe.stop();
  return "http://127.0.0.1:" + std::to_string(port) + "/v1";
}

}  // namespace dentlabel::testing

#endif  // DENTLABEL_TESTS_TEST_SUPPORT_H_
