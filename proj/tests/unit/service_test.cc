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
#include "dentlabel/error.h"
#include "dentlabel/image.h"
#include "dentlabel/service.h"
#include "test_support.h"

using namespace dentlabel;
using namespace dentlabel::testing;

namespace {

ErrorCode code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an error");
  return ErrorCode::kIoError;
}

ExpertImageDataset small_dataset() {
  const auto f = make_prediction_fixture(40, 8);
  return sample_expert_set(f.predictions, f.labels, {}, 3);
}

ServiceConfig config_for(const fs::path& dir) {
  ServiceConfig c;
  c.crops_dir = dir / "crops";
  c.log_path = dir / "log.jsonl";
  c.seed = 21;
  c.raters = {{"tok-e1", "e1", RaterGroup::kExpert},
              {"tok-e2", "e2", RaterGroup::kExpert},
              {"tok-s1", "s1", RaterGroup::kStudent}};
  return c;
}

json body(const std::string& token, const std::string& crop_id, LabelVector labels) {
  return {{"rater", token}, {"crop_id", crop_id}, {"labels", labels}};
}

}  // namespace

TEST_SUITE("annotation_service") {
  TEST_CASE("conditions list the vocabulary in index order") {
    TempDir dir;
    AnnotationService service(config_for(dir.path()), ConditionVocabulary::reference(), small_dataset());
    const auto c = service.conditions();
    REQUIRE(c.size() == 13);
    CHECK(c[0]["index"] == 1);
    CHECK(c[0]["name"] == "endodontic treatment");
    CHECK(c[12]["name"] == "prolonged retention");
  }

  TEST_CASE("a rater walks the whole set in a seeded order until done") {
    TempDir dir;
    const auto dataset = small_dataset();
    AnnotationService service(config_for(dir.path()), ConditionVocabulary::reference(), dataset);
    CHECK(service.item_count() == 78);
    const auto order = service.session_order("e1");
    CHECK(order == service.session_order("e1"));
    CHECK(order != service.session_order("e2"));
    std::set<CropRef> seen;
    for (int i = 0; i < 78; ++i) {
      const json task = service.next_task("tok-e1");
      CHECK(task["done"] == false);
      CHECK(task["completed"] == i);
      CHECK(task["crop_id"] == order[i].id());
      CHECK(task["image_url"] == "/crops/" + order[i].id() + ".png");
      seen.insert(order[i]);
      LabelVector labels(13, 0);
      labels[i % 13] = 1;
      service.submit(body("tok-e1", task["crop_id"].get<std::string>(), labels));
    }
    CHECK(seen.size() == 78);
    const json done = service.next_task("tok-e1");
    CHECK(done["done"] == true);
    CHECK(done["completed"] == 78);
    CHECK(done["total"] == 78);
    CHECK(service.next_task("tok-e2")["completed"] == 0);
  }

  TEST_CASE("submission validation") {
    TempDir dir;
    const auto dataset = small_dataset();
    AnnotationService service(config_for(dir.path()), ConditionVocabulary::reference(), dataset);
    const std::string id = dataset.items[0].crop.id();
    CHECK(code_of([&] { service.submit(body("tok-e1", id, LabelVector(12, 0))); }) == ErrorCode::kBadVectorLength);
    CHECK(code_of([&] { service.submit(body("nobody", id, LabelVector(13, 0))); }) == ErrorCode::kUnknownRater);
    CHECK(code_of([&] { service.submit(body("tok-e1", "img_999_11", LabelVector(13, 0))); }) ==
          ErrorCode::kUnknownCrop);
    CHECK(code_of([&] { service.submit({{"rater", "tok-e1"}}); }) == ErrorCode::kInvalidArgument);
    json two = body("tok-e1", id, LabelVector(13, 0));
    two["labels"][0] = 2;
    CHECK(code_of([&] { service.submit(two); }) == ErrorCode::kInvalidArgument);
    json contradictory = body("tok-e1", id, LabelVector(13, 0));
    contradictory["labels"][0] = 1;
    contradictory["none"] = true;
    CHECK(code_of([&] { service.submit(contradictory); }) == ErrorCode::kInvalidArgument);
    CHECK(code_of([&] { service.next_task("nobody"); }) == ErrorCode::kUnknownRater);

    // "None of the above" is an all-zero vector and is accepted.
    json none = body("tok-e1", id, LabelVector(13, 0));
    none["none"] = true;
    const json stored = service.submit(none)["stored"];
    CHECK(stored["rater_id"] == "e1");
    CHECK(stored["group"] == "expert");
    CHECK(stored["labels"] == LabelVector(13, 0));
    CHECK_FALSE(stored["timestamp"].get<std::string>().empty());
    CHECK(service.store().log().size() == 1);
  }

  TEST_CASE("resubmission: latest record wins and the log keeps both") {
    TempDir dir;
    const auto dataset = small_dataset();
    const auto config = config_for(dir.path());
    const CropRef crop = dataset.items[5].crop;
    LabelVector first(13, 0), second(13, 0);
    first[0] = 1;
    second[4] = 1;
    {
      AnnotationService service(config, ConditionVocabulary::reference(), dataset);
      service.submit(body("tok-s1", crop.id(), first));
      service.submit(body("tok-s1", crop.id(), second));
      CHECK(service.store().log().size() == 2);
      CHECK(service.store().find("s1", crop)->labels == second);
      CHECK(service.next_task("tok-s1")["completed"] == 1);
    }
    // The log on disk replays to the same state.
    const auto log = AnnotationStore::read_log(config.log_path);
    REQUIRE(log.size() == 2);
    CHECK(log[0].labels == first);
    CHECK(AnnotationStore::rebuild(log).at({"s1", crop}).labels == second);
    AnnotationService reopened(config, ConditionVocabulary::reference(), dataset);
    CHECK(reopened.store().find("s1", crop)->labels == second);
    CHECK(reopened.store().log().size() == 2);
  }

  TEST_CASE("agreement appears once two raters are complete and equals the offline kappa") {
    TempDir dir;
    const auto dataset = small_dataset();
    AnnotationService service(config_for(dir.path()), ConditionVocabulary::reference(), dataset);
    const auto crops = dataset.crops();
    std::vector<LabelVector> truth;
    for (size_t i = 0; i < crops.size(); ++i) {
      LabelVector v(13, 0);
      v[i % 13] = 1;
      if (i % 3 == 0) v[(i + 5) % 13] = 1;
      truth.push_back(v);
    }
    const auto log = simulate_annotations(crops, truth,
                                          {{"e1", RaterGroup::kExpert, 0.1}, {"e2", RaterGroup::kExpert, 0.1}}, 2);
    json a = service.agreement();
    CHECK(a["items"] == 78);
    CHECK_FALSE(a.contains("conditions"));
    for (const auto& r : log) service.submit(body("tok-" + r.rater_id, r.crop.id(), r.labels));
    a = service.agreement();
    CHECK(a["complete_raters"] == json::array({"e1", "e2"}));
    CHECK(a["progress"]["s1"] == 0);
    REQUIRE(a["conditions"].size() == 13);
    const AnnotationSet set(log, 13);
    for (int c = 0; c < 13; ++c) {
      std::vector<LabelVector> by_rater;
      for (const auto& r : {"e1", "e2"}) {
        LabelVector v;
        for (const auto& crop : crops) v.push_back((*set.find(r, crop))[c]);
        by_rater.push_back(v);
      }
      const auto& row = a["conditions"][c];
      try {
        const double k = fleiss_kappa(AgreementTable::from_binary(by_rater));
        CHECK(std::abs(row["kappa"].get<double>() - k) <= 1e-12);
      } catch (const Error&) {
        CHECK(row["degenerate"] == true);
      }
    }
  }

  TEST_CASE("crop rasters are served byte-identically") {
    TempDir dir;
    const auto dataset = small_dataset();
    const auto config = config_for(dir.path());
    const CropRef crop = dataset.items[0].crop;
    fs::create_directories(config.crops_dir);
    write_png(config.crops_dir / (crop.id() + ".png"), synthetic_radiograph(380, 380, 1));
    AnnotationService service(config, ConditionVocabulary::reference(), dataset);
    const std::string first = service.crop_png(crop.id());
    CHECK(first.substr(1, 3) == "PNG");
    CHECK(service.crop_png(crop.id()) == first);
    CHECK(code_of([&] { service.crop_png(dataset.items[1].crop.id()); }) == ErrorCode::kUnknownCrop);
    CHECK(code_of([&] { service.crop_png("img_999_11"); }) == ErrorCode::kUnknownCrop);
  }

  TEST_CASE("construction rejects inconsistent configuration") {
    TempDir dir;
    const auto dataset = small_dataset();
    auto config = config_for(dir.path());
    CHECK(code_of([&] { AnnotationService(config, ConditionVocabulary(), dataset); }) == ErrorCode::kConfigError);
    CHECK(code_of([&] { AnnotationService(config, ConditionVocabulary::reference(), ExpertImageDataset{}); }) ==
          ErrorCode::kConfigError);
    auto dup = config;
    dup.raters.push_back({"tok-e1", "e9", RaterGroup::kExpert});
    CHECK(code_of([&] { AnnotationService(dup, ConditionVocabulary::reference(), dataset); }) ==
          ErrorCode::kConfigError);
    auto none = config;
    none.raters.clear();
    CHECK(code_of([&] { AnnotationService(none, ConditionVocabulary::reference(), dataset); }) ==
          ErrorCode::kConfigError);
    // A log written by a rater the config no longer knows is refused.
    {
      AnnotationService service(config, ConditionVocabulary::reference(), dataset);
      service.submit(body("tok-s1", dataset.items[0].crop.id(), LabelVector(13, 0)));
    }
    auto fewer = config;
    fewer.raters.pop_back();
    CHECK(code_of([&] { AnnotationService(fewer, ConditionVocabulary::reference(), dataset); }) ==
          ErrorCode::kConfigError);
  }

  TEST_CASE("service config from json") {
    const auto c = service_config_from_json({{"port", 0},
                                             {"dataset", "d.json"},
                                             {"seed", 4},
                                             {"raters", {{{"id", "e1"}, {"group", "expert"}},
                                                         {{"id", "s1"}, {"group", "student"}, {"token", "x"}}}}});
    CHECK(c.port == 0);
    CHECK(c.host == "127.0.0.1");
    CHECK(c.dataset_path == "d.json");
    REQUIRE(c.raters.size() == 2);
    CHECK(c.raters[0].token == "e1");
    CHECK(c.raters[1].token == "x");
    CHECK(c.raters[1].group == RaterGroup::kStudent);
    CHECK(code_of([] { service_config_from_json({{"port", 70000}}); }) == ErrorCode::kConfigError);
  }
}
