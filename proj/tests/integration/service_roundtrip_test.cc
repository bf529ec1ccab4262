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

#include "doctest.h"
#include "dentlabel/image.h"
#include "dentlabel/io.h"
#include "dentlabel/metrics.h"
#include "dentlabel/service.h"
#include "test_support.h"

using namespace dentlabel;
using namespace dentlabel::testing;

namespace {

struct Fixture {
  TempDir dir;
  ExpertImageDataset dataset;
  ServiceConfig config;

  Fixture() {
    const auto f = make_prediction_fixture(40, 11);
    dataset = sample_expert_set(f.predictions, f.labels, {}, 5);
    config.host = "127.0.0.1";
    config.port = 0;
    config.seed = 13;
    config.crops_dir = dir / "view";
    config.log_path = dir / "log.jsonl";
    config.raters = {{"t-e1", "e1", RaterGroup::kExpert},  {"t-e2", "e2", RaterGroup::kExpert},
                     {"t-e3", "e3", RaterGroup::kExpert},  {"t-s1", "s1", RaterGroup::kStudent},
                     {"t-s2", "s2", RaterGroup::kStudent}};
    std::uint64_t seed = 1;
    for (const auto& crop : dataset.crops()) {
      write_png(config.crops_dir / (crop.id() + ".png"), synthetic_radiograph(64, 64, seed++));
    }
  }
};

json get_json(httplib::Client& client, const std::string& path, int expected_status = 200) {
  auto res = client.Get(path);
  REQUIRE(res);
  CHECK(res->status == expected_status);
  return json::parse(res->body);
}

httplib::Result post(httplib::Client& client, const json& body) {
  return client.Post("/annotations", body.dump(), "application/json");
}

}  // namespace

TEST_SUITE("service_roundtrip") {
  TEST_CASE("five raters annotate the set and HTTP agreement equals the offline kappa") {
    Fixture fx;
    AnnotationService service(fx.config, ConditionVocabulary::reference(), fx.dataset);
    ServiceRunner runner(service);
    const int port = runner.start(fx.config.host, 0);
    REQUIRE(port > 0);
    httplib::Client client(fx.config.host, port);

    const json conditions = get_json(client, "/conditions");
    REQUIRE(conditions.size() == 13);

    // Each rater sees a noisy version of a shared per-crop truth.
    const auto crops = fx.dataset.crops();
    std::map<std::string, LabelVector> truth;
    std::mt19937_64 rng(3);
    for (const auto& c : crops) {
      LabelVector v(13, 0);
      for (auto& b : v) b = rng() % 4 == 0;
      truth[c.id()] = v;
    }
    std::map<std::string, double> flip = {{"e1", 0.05}, {"e2", 0.1}, {"e3", 0.1}, {"s1", 0.2}, {"s2", 0.25}};
    std::uniform_real_distribution<double> u(0, 1);
    for (const auto& r : fx.config.raters) {
      for (int i = 0;; ++i) {
        const json task = get_json(client, "/tasks/next?rater=" + r.token);
        if (task["done"] == true) {
          CHECK(task["completed"] == 78);
          CHECK(i == 78);
          break;
        }
        const std::string id = task["crop_id"];
        LabelVector labels = truth.at(id);
        for (auto& b : labels) b = u(rng) < flip.at(r.rater_id) ? !b : b;
        auto res = post(client, {{"rater", r.token}, {"crop_id", id}, {"labels", labels}});
        REQUIRE(res);
        REQUIRE(res->status == 200);
      }
    }

    const json agreement = get_json(client, "/agreement");
    CHECK(agreement["complete_raters"].size() == 5);
    REQUIRE(agreement["conditions"].size() == 13);

    // Offline: the exported log through the batch metrics.
    const AnnotationSet set(AnnotationStore::read_log(fx.config.log_path), 13);
    const auto raters = set.raters();
    REQUIRE(raters.size() == 5);
    for (int c = 0; c < 13; ++c) {
      std::vector<LabelVector> by_rater;
      for (const auto& r : raters) {
        LabelVector v;
        for (const auto& crop : crops) v.push_back((*set.find(r, crop))[c]);
        by_rater.push_back(v);
      }
      const double offline = fleiss_kappa(AgreementTable::from_binary(by_rater));
      const auto& row = agreement["conditions"][c];
      CHECK(row["index"] == c + 1);
      CHECK(std::abs(row["kappa"].get<double>() - offline) <= 1e-9);
    }
  }

  TEST_CASE("resubmission over HTTP: latest wins, the log keeps both") {
    Fixture fx;
    AnnotationService service(fx.config, ConditionVocabulary::reference(), fx.dataset);
    ServiceRunner runner(service);
    httplib::Client client(fx.config.host, runner.start(fx.config.host, 0));
    const std::string id = fx.dataset.items[0].crop.id();
    LabelVector first(13, 0), second(13, 0);
    first[2] = 1;
    second[9] = 1;
    REQUIRE(post(client, {{"rater", "t-e1"}, {"crop_id", id}, {"labels", first}})->status == 200);
    REQUIRE(post(client, {{"rater", "t-e1"}, {"crop_id", id}, {"labels", second}})->status == 200);
    const auto log = AnnotationStore::read_log(fx.config.log_path);
    REQUIRE(log.size() == 2);
    CHECK(log[0].labels == first);
    CHECK(log[1].labels == second);
    CHECK(service.store().find("e1", fx.dataset.items[0].crop)->labels == second);
    CHECK(get_json(client, "/agreement")["progress"]["e1"] == 1);
  }

  TEST_CASE("errors, CORS and crop rasters") {
    Fixture fx;
    fx.config.cors_origin = "http://localhost:5173";
    AnnotationService service(fx.config, ConditionVocabulary::reference(), fx.dataset);
    ServiceRunner runner(service);
    httplib::Client client(fx.config.host, runner.start(fx.config.host, 0));
    const std::string id = fx.dataset.items[3].crop.id();

    auto res = post(client, {{"rater", "t-s1"}, {"crop_id", id}, {"labels", LabelVector(12, 0)}});
    REQUIRE(res);
    CHECK(res->status == 400);
    CHECK(json::parse(res->body)["error"] == "BadVectorLength");
    CHECK(res->get_header_value("Access-Control-Allow-Origin") == "http://localhost:5173");

    res = post(client, {{"rater", "nobody"}, {"crop_id", id}, {"labels", LabelVector(13, 0)}});
    CHECK(res->status == 404);
    CHECK(json::parse(res->body)["error"] == "UnknownRater");

    res = client.Post("/annotations", "{not json", "application/json");
    CHECK(res->status == 400);
    CHECK(json::parse(res->body)["error"] == "InvalidArgument");

    CHECK(get_json(client, "/tasks/next?rater=nobody", 404)["error"] == "UnknownRater");

    res = client.Options("/annotations");
    REQUIRE(res);
    CHECK(res->status == 204);
    CHECK(res->get_header_value("Access-Control-Allow-Methods").find("POST") != std::string::npos);

    res = client.Get("/crops/" + id + ".png");
    REQUIRE(res);
    CHECK(res->status == 200);
    CHECK(res->get_header_value("Content-Type") == "image/png");
    CHECK(res->body == read_text_file(fx.config.crops_dir / (id + ".png")));
    auto again = client.Get("/crops/" + id + ".png");
    CHECK(again->body == res->body);
    CHECK(client.Get("/crops/img_999_11.png")->status == 404);
  }
}
