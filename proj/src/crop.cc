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

#include "dentlabel/crop.h"

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <random>
#include <set>

#include "dentlabel/error.h"
#include "dentlabel/io.h"
#include "dentlabel/random.h"

namespace dentlabel {

using nlohmann::json;

namespace {

double number_at(const json& j, size_t i, const std::string& what) {
  if (!j.is_array() || i >= j.size() || !j[i].is_number()) {
    fail(ErrorCode::kManifestParseError, what + " must be a numeric array");
  }
  return j[i].get<double>();
}

std::vector<Point> parse_polygon(const json& j) {
  std::vector<Point> points;
  if (!j.is_array()) fail(ErrorCode::kManifestParseError, "polygon must be an array");
  // COCO exports nest one flat list per part; only the first part is used.
  const json& flat = (!j.empty() && j[0].is_array() && !j[0].empty() && j[0][0].is_number() &&
                      j[0].size() > 2)
                         ? j[0]
                         : j;
  if (!flat.empty() && flat[0].is_array()) {
    for (const auto& p : flat) points.push_back({number_at(p, 0, "polygon"), number_at(p, 1, "polygon")});
  } else {
    if (flat.size() % 2 != 0) fail(ErrorCode::kManifestParseError, "polygon has odd coordinate count");
    for (size_t i = 0; i + 1 < flat.size(); i += 2) {
      points.push_back({number_at(flat, i, "polygon"), number_at(flat, i + 1, "polygon")});
    }
  }
  return points;
}

int parse_fdi(const json& j, const std::string& image_id) {
  int code = 0;
  if (j.is_number_integer()) {
    code = j.get<int>();
  } else if (j.is_string()) {
    auto t = FdiTooth::from_text(j.get<std::string>());
    if (!t) fail(ErrorCode::kManifestParseError, image_id + ": bad fdi '" + j.get<std::string>() + "'");
    code = t->code();
  } else {
    fail(ErrorCode::kManifestParseError, image_id + ": instance lacks an fdi code");
  }
  if (!FdiTooth::is_valid(code)) {
    fail(ErrorCode::kManifestParseError, image_id + ": invalid fdi " + std::to_string(code));
  }
  return code;
}

}  // namespace

const ImageDims& SegmentationSet::dims(const std::string& image_id) const {
  auto it = images.find(image_id);
  if (it == images.end()) fail(ErrorCode::kUnknownImage, "no image " + image_id + " in the manifest");
  return it->second;
}

SegmentedTeeth SegmentationSet::segmented_teeth() const {
  SegmentedTeeth out;
  for (const auto& [id, _] : images) out[id];
  for (const auto& inst : instances) out[inst.image_id].push_back(inst.tooth);
  return out;
}

Point polygon_centroid(const std::vector<Point>& polygon) {
  if (polygon.empty()) fail(ErrorCode::kManifestParseError, "empty polygon");
  double area2 = 0;
  double cx = 0;
  double cy = 0;
  for (size_t i = 0; i < polygon.size(); ++i) {
    const Point& a = polygon[i];
    const Point& b = polygon[(i + 1) % polygon.size()];
    const double cross = a.x * b.y - b.x * a.y;
    area2 += cross;
    cx += (a.x + b.x) * cross;
    cy += (a.y + b.y) * cross;
  }
  if (std::abs(area2) < 1e-9) {
    Point mean;
    for (const auto& p : polygon) {
      mean.x += p.x;
      mean.y += p.y;
    }
    mean.x /= static_cast<double>(polygon.size());
    mean.y /= static_cast<double>(polygon.size());
    return mean;
  }
  return {cx / (3 * area2), cy / (3 * area2)};
}

SegmentationSet parse_segmentation_manifest(const json& manifest, double score_threshold) {
  const json* images = &manifest;
  if (manifest.is_object()) {
    if (!manifest.contains("images")) fail(ErrorCode::kManifestParseError, "manifest lacks 'images'");
    images = &manifest.at("images");
  }
  if (!images->is_array()) fail(ErrorCode::kManifestParseError, "'images' must be an array");

  SegmentationSet set;
  std::map<std::pair<std::string, int>, ToothInstance> best;
  for (const auto& img : *images) {
    if (!img.is_object() || !img.contains("image_id") || !img.at("image_id").is_string()) {
      fail(ErrorCode::kManifestParseError, "image entry lacks a string image_id");
    }
    const std::string image_id = img.at("image_id").get<std::string>();
    if (!img.contains("width") || !img.contains("height") || !img.at("width").is_number_integer() ||
        !img.at("height").is_number_integer()) {
      fail(ErrorCode::kMissingImageDimensions, "image " + image_id + " lacks width/height");
    }
    const ImageDims dims{img.at("width").get<int>(), img.at("height").get<int>()};
    if (dims.width <= 0 || dims.height <= 0) {
      fail(ErrorCode::kMissingImageDimensions, "image " + image_id + " has non-positive dimensions");
    }
    if (!set.images.emplace(image_id, dims).second) {
      fail(ErrorCode::kManifestParseError, "image " + image_id + " listed twice");
    }
    for (const auto& ji : img.value("instances", json::array())) {
      ToothInstance inst;
      inst.image_id = image_id;
      inst.tooth = FdiTooth(parse_fdi(ji.value("fdi", json()), image_id));
      if (ji.contains("score") && !ji.at("score").is_null()) {
        if (!ji.at("score").is_number()) fail(ErrorCode::kManifestParseError, image_id + ": non-numeric score");
        inst.score = ji.at("score").get<double>();
      }
      if (inst.score < 0.0 || inst.score > 1.0) {
        fail(ErrorCode::kManifestParseError, image_id + ": score outside [0, 1]");
      }
      if (inst.score < score_threshold) continue;
      if (!ji.contains("bbox")) fail(ErrorCode::kManifestParseError, image_id + ": instance lacks bbox");
      const json& jb = ji.at("bbox");
      BBox raw{number_at(jb, 0, "bbox"), number_at(jb, 1, "bbox"), number_at(jb, 2, "bbox"),
               number_at(jb, 3, "bbox")};
      // Detections may spill over the border; keep the in-image part.
      const double x0 = std::clamp(raw.x, 0.0, static_cast<double>(dims.width));
      const double y0 = std::clamp(raw.y, 0.0, static_cast<double>(dims.height));
      const double x1 = std::clamp(raw.x + raw.width, 0.0, static_cast<double>(dims.width));
      const double y1 = std::clamp(raw.y + raw.height, 0.0, static_cast<double>(dims.height));
      if (x1 <= x0 || y1 <= y0) {
        fail(ErrorCode::kManifestParseError,
             image_id + ": bbox of tooth " + inst.tooth.text() + " is empty or outside the image");
      }
      inst.bbox = {x0, y0, x1 - x0, y1 - y0};
      if (ji.contains("polygon") && !ji.at("polygon").is_null() && !ji.at("polygon").empty()) {
        inst.centroid = polygon_centroid(parse_polygon(ji.at("polygon")));
      } else if (ji.contains("centroid") && !ji.at("centroid").is_null()) {
        inst.centroid = {number_at(ji.at("centroid"), 0, "centroid"), number_at(ji.at("centroid"), 1, "centroid")};
      } else {
        inst.centroid = {x0 + (x1 - x0) / 2, y0 + (y1 - y0) / 2};
      }
      inst.centroid.x = std::clamp(inst.centroid.x, x0, x1);
      inst.centroid.y = std::clamp(inst.centroid.y, y0, y1);

      auto key = std::make_pair(image_id, inst.tooth.code());
      auto it = best.find(key);
      if (it == best.end()) {
        best.emplace(key, std::move(inst));
      } else if (inst.score > it->second.score) {
        it->second = std::move(inst);
      }
    }
  }
  for (auto& [_, inst] : best) set.instances.push_back(std::move(inst));
  return set;
}

json SegmentationSet::to_json() const {
  std::map<std::string, json> per_image;
  for (const auto& [id, dims] : images) {
    per_image[id] = {{"image_id", id}, {"width", dims.width}, {"height", dims.height}, {"instances", json::array()}};
  }
  for (const auto& inst : instances) {
    json ji = dentlabel::to_json(inst);
    ji.erase("image_id");
    per_image.at(inst.image_id)["instances"].push_back(std::move(ji));
  }
  json out = json::array();
  for (auto& [_, j] : per_image) out.push_back(std::move(j));
  return {{"images", out}};
}

SegmentationSet load_segmentation_manifest(const std::filesystem::path& path, double score_threshold) {
  json manifest;
  try {
    manifest = json::parse(read_text_file(path));
  } catch (const json::parse_error& e) {
    fail(ErrorCode::kManifestParseError, path.string() + ": " + e.what());
  }
  return parse_segmentation_manifest(manifest, score_threshold);
}

json to_json(const ToothInstance& inst) {
  return {{"image_id", inst.image_id},
          {"fdi", inst.tooth.code()},
          {"score", inst.score},
          {"bbox", {inst.bbox.x, inst.bbox.y, inst.bbox.width, inst.bbox.height}},
          {"centroid", {inst.centroid.x, inst.centroid.y}}};
}

ToothInstance instance_from_json(const json& j) {
  ToothInstance inst;
  try {
    inst.image_id = j.at("image_id").get<std::string>();
    inst.tooth = FdiTooth(j.at("fdi").get<int>());
    inst.score = j.value("score", 1.0);
    const auto& b = j.at("bbox");
    inst.bbox = {b.at(0).get<double>(), b.at(1).get<double>(), b.at(2).get<double>(), b.at(3).get<double>()};
    const auto& c = j.at("centroid");
    inst.centroid = {c.at(0).get<double>(), c.at(1).get<double>()};
  } catch (const json::exception& e) {
    fail(ErrorCode::kManifestParseError, std::string("bad instance record: ") + e.what());
  }
  return inst;
}

std::string_view context_name(ContextKind kind) {
  return kind == ContextKind::kLess ? "less" : "more";
}

CropSpec crop_window(Point centroid, int window_side, ImageDims dims) {
  if (window_side <= 0) fail(ErrorCode::kInvalidArgument, "window side must be positive");
  if (dims.width < window_side || dims.height < window_side) {
    fail(ErrorCode::kImageTooSmall, "image " + std::to_string(dims.width) + "x" +
                                        std::to_string(dims.height) + " cannot hold a " +
                                        std::to_string(window_side) + " window");
  }
  const double half = window_side / 2.0;
  CropSpec spec;
  spec.window_side = window_side;
  spec.image = dims;
  spec.x0 = std::clamp(static_cast<int>(std::floor(centroid.x - half + 0.5)), 0, dims.width - window_side);
  spec.y0 = std::clamp(static_cast<int>(std::floor(centroid.y - half + 0.5)), 0, dims.height - window_side);
  spec.center_dx = spec.x0 + half - centroid.x;
  spec.center_dy = spec.y0 + half - centroid.y;
  return spec;
}

CropSpec make_crop_spec(const ToothInstance& instance, ContextKind kind, ImageDims dims,
                        const CropGeometry& geometry) {
  const int side = kind == ContextKind::kLess ? geometry.less_side : geometry.more_side;
  CropSpec spec = crop_window(instance.centroid, side, dims);
  spec.image_id = instance.image_id;
  spec.tooth = instance.tooth;
  spec.context = kind;
  spec.output_side = geometry.output_side;
  return spec;
}

GrayImage resize_bilinear(const GrayImage& src, int width, int height) {
  if (width <= 0 || height <= 0 || src.width() == 0 || src.height() == 0) {
    fail(ErrorCode::kInvalidArgument, "resize to an empty raster");
  }
  GrayImage out(width, height);
  const double sx = static_cast<double>(src.width()) / width;
  const double sy = static_cast<double>(src.height()) / height;
  for (int y = 0; y < height; ++y) {
    const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, static_cast<double>(src.height() - 1));
    const int y0 = static_cast<int>(fy);
    const int y1 = std::min(y0 + 1, src.height() - 1);
    const double wy = fy - y0;
    for (int x = 0; x < width; ++x) {
      const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, static_cast<double>(src.width() - 1));
      const int x0 = static_cast<int>(fx);
      const int x1 = std::min(x0 + 1, src.width() - 1);
      const double wx = fx - x0;
      const double top = src.at(x0, y0) * (1 - wx) + src.at(x1, y0) * wx;
      const double bottom = src.at(x0, y1) * (1 - wx) + src.at(x1, y1) * wx;
      out.at(x, y) = static_cast<std::uint8_t>(std::lround(top * (1 - wy) + bottom * wy));
    }
  }
  return out;
}

GrayImage extract_window(const GrayImage& image, const CropSpec& spec) {
  if (image.width() != spec.image.width || image.height() != spec.image.height) {
    fail(ErrorCode::kDimensionMismatch,
         spec.image_id + ": raster is " + std::to_string(image.width()) + "x" +
             std::to_string(image.height()) + ", manifest says " + std::to_string(spec.image.width) +
             "x" + std::to_string(spec.image.height));
  }
  if (spec.x0 < 0 || spec.y0 < 0 || spec.x0 + spec.window_side > image.width() ||
      spec.y0 + spec.window_side > image.height()) {
    fail(ErrorCode::kDimensionMismatch, spec.image_id + ": crop window leaves the image");
  }
  GrayImage out(spec.window_side, spec.window_side);
  for (int y = 0; y < spec.window_side; ++y) {
    for (int x = 0; x < spec.window_side; ++x) out.at(x, y) = image.at(spec.x0 + x, spec.y0 + y);
  }
  return out;
}

GrayImage extract_crop(const GrayImage& image, const CropSpec& spec) {
  GrayImage window = extract_window(image, spec);
  if (spec.window_side == spec.output_side) return window;
  return resize_bilinear(window, spec.output_side, spec.output_side);
}

json to_json(const CropSpec& spec) {
  return {{"image_id", spec.image_id},
          {"fdi", spec.tooth.code()},
          {"context", context_name(spec.context)},
          {"x0", spec.x0},
          {"y0", spec.y0},
          {"window_side", spec.window_side},
          {"output_side", spec.output_side},
          {"image_width", spec.image.width},
          {"image_height", spec.image.height},
          {"center_dx", spec.center_dx},
          {"center_dy", spec.center_dy}};
}

CropSpec crop_spec_from_json(const json& j) {
  CropSpec spec;
  try {
    spec.image_id = j.at("image_id").get<std::string>();
    spec.tooth = FdiTooth(j.at("fdi").get<int>());
    spec.context = j.at("context").get<std::string>() == "more" ? ContextKind::kMore : ContextKind::kLess;
    spec.x0 = j.at("x0").get<int>();
    spec.y0 = j.at("y0").get<int>();
    spec.window_side = j.at("window_side").get<int>();
    spec.output_side = j.at("output_side").get<int>();
    spec.image = {j.at("image_width").get<int>(), j.at("image_height").get<int>()};
    spec.center_dx = j.value("center_dx", 0.0);
    spec.center_dy = j.value("center_dy", 0.0);
  } catch (const json::exception& e) {
    fail(ErrorCode::kManifestParseError, std::string("bad crop spec: ") + e.what());
  }
  return spec;
}

std::string_view split_name(Split split) {
  switch (split) {
    case Split::kTrain: return "train";
    case Split::kValidation: return "val";
    case Split::kTest: return "test";
  }
  return "train";
}

Split parse_split(std::string_view name) {
  if (name == "train") return Split::kTrain;
  if (name == "val" || name == "validation") return Split::kValidation;
  if (name == "test") return Split::kTest;
  fail(ErrorCode::kInvalidArgument, "unknown split '" + std::string(name) + "'");
}

std::map<Split, int> SplitManifest::image_counts() const {
  std::map<Split, std::set<std::string>> images;
  for (const auto& e : entries) images[e.split].insert(e.crop.image_id);
  std::map<Split, int> counts{{Split::kTrain, 0}, {Split::kValidation, 0}, {Split::kTest, 0}};
  for (const auto& [split, ids] : images) counts[split] = static_cast<int>(ids.size());
  return counts;
}

std::vector<CropRef> SplitManifest::expanded(std::optional<Split> only) const {
  std::vector<CropRef> out;
  for (const auto& e : entries) {
    if (only && e.split != *only) continue;
    for (int r = 0; r < e.repetition; ++r) out.push_back(e.crop);
  }
  return out;
}

json SplitManifest::to_json() const {
  json jentries = json::array();
  for (const auto& e : entries) {
    jentries.push_back({{"image_id", e.crop.image_id},
                        {"fdi", e.crop.tooth.code()},
                        {"split", split_name(e.split)},
                        {"repetition", e.repetition}});
  }
  return {{"seed", seed},
          {"ratios", {ratios.train, ratios.validation, ratios.test}},
          {"entries", jentries}};
}

SplitManifest SplitManifest::from_json(const json& j) {
  SplitManifest m;
  try {
    m.seed = j.at("seed").get<std::uint64_t>();
    const auto& r = j.at("ratios");
    m.ratios = {r.at(0).get<double>(), r.at(1).get<double>(), r.at(2).get<double>()};
    for (const auto& e : j.at("entries")) {
      m.entries.push_back({{e.at("image_id").get<std::string>(), FdiTooth(e.at("fdi").get<int>())},
                           parse_split(e.at("split").get<std::string>()),
                           e.value("repetition", 1)});
    }
  } catch (const json::exception& e) {
    fail(ErrorCode::kManifestParseError, std::string("bad split manifest: ") + e.what());
  }
  return m;
}

SplitManifest split_dataset(const std::vector<CropRef>& crops, SplitRatios ratios, std::uint64_t seed) {
  const double parts[3] = {ratios.train, ratios.validation, ratios.test};
  for (double p : parts) {
    if (!(p > 0.0) || !std::isfinite(p)) fail(ErrorCode::kBadRatios, "split ratios must be positive");
  }
  if (std::abs(parts[0] + parts[1] + parts[2] - 1.0) > 1e-9) {
    fail(ErrorCode::kBadRatios, "split ratios must sum to 1");
  }

  std::set<std::string> unique;
  for (const auto& c : crops) unique.insert(c.image_id);
  std::vector<std::string> images(unique.begin(), unique.end());
  std::mt19937_64 rng(seed);
  seeded_shuffle(images, rng);

  // Largest-remainder apportionment keeps each split within one image of
  // ratio * N.
  const auto n = static_cast<double>(images.size());
  int counts[3];
  double remainders[3];
  int assigned = 0;
  for (int s = 0; s < 3; ++s) {
    const double exact = parts[s] * n;
    counts[s] = static_cast<int>(std::floor(exact + 1e-9));
    remainders[s] = exact - counts[s];
    assigned += counts[s];
  }
  std::array<int, 3> order{0, 1, 2};
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return remainders[a] > remainders[b]; });
  for (int k = 0; assigned < static_cast<int>(images.size()); ++k, ++assigned) ++counts[order[k % 3]];

  std::map<std::string, Split> split_of;
  size_t pos = 0;
  const Split kinds[3] = {Split::kTrain, Split::kValidation, Split::kTest};
  for (int s = 0; s < 3; ++s) {
    for (int i = 0; i < counts[s]; ++i) split_of[images[pos++]] = kinds[s];
  }

  SplitManifest manifest;
  manifest.seed = seed;
  manifest.ratios = ratios;
  std::set<CropRef> seen;
  for (const auto& c : crops) {
    if (seen.insert(c).second) manifest.entries.push_back({c, split_of.at(c.image_id), 1});
  }
  std::sort(manifest.entries.begin(), manifest.entries.end(),
            [](const SplitEntry& a, const SplitEntry& b) { return a.crop < b.crop; });
  return manifest;
}

SplitManifest oversample_positives(const SplitManifest& manifest, const LabelMatrix& labels,
                                   int condition, int factor) {
  labels.vocabulary().at(condition);
  if (factor < 1) fail(ErrorCode::kInvalidArgument, "oversampling factor must be >= 1");
  const bool has_train = std::any_of(manifest.entries.begin(), manifest.entries.end(),
                                     [](const SplitEntry& e) { return e.split == Split::kTrain; });
  if (!has_train) fail(ErrorCode::kEmptyTrainSplit, "manifest has no train entries");

  SplitManifest out = manifest;
  for (auto& e : out.entries) {
    e.repetition = 1;
    if (e.split == Split::kTrain && labels.positive(e.crop.image_id, e.crop.tooth, condition)) {
      e.repetition = factor;
    }
  }
  return out;
}

}  // namespace dentlabel
