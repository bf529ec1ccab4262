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

#ifndef DENTLABEL_CROP_H_
#define DENTLABEL_CROP_H_

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "dentlabel/image.h"
#include "dentlabel/labeling.h"
#include "dentlabel/report.h"
#include "json.hpp"

namespace dentlabel {

struct Point {
  double x = 0;
  double y = 0;
};

struct BBox {
  double x = 0;
  double y = 0;
  double width = 0;
  double height = 0;
};

struct ImageDims {
  int width = 0;
  int height = 0;

  bool operator==(const ImageDims&) const = default;
};

struct ToothInstance {
  std::string image_id;
  FdiTooth tooth{11};
  double score = 1.0;
  BBox bbox;
  Point centroid;
};

struct SegmentationSet {
  std::map<std::string, ImageDims> images;
  std::vector<ToothInstance> instances;  // sorted by (image_id, tooth)

  const ImageDims& dims(const std::string& image_id) const;
  SegmentedTeeth segmented_teeth() const;
  // A manifest that parses back to this set.
  nlohmann::json to_json() const;
};

// Manifest: {"images": [{image_id, width, height, instances: [{fdi, score?,
// bbox: [x, y, w, h], polygon?, centroid?}]}]}. Instances scoring below the threshold
// are dropped; a missing score means ground truth (1.0). Duplicate teeth in
// one image keep the highest score. Throws ManifestParseError or
// MissingImageDimensions.
SegmentationSet parse_segmentation_manifest(const nlohmann::json& manifest, double score_threshold = 0.5);
SegmentationSet load_segmentation_manifest(const std::filesystem::path& path,
                                           double score_threshold = 0.5);

nlohmann::json to_json(const ToothInstance& instance);
ToothInstance instance_from_json(const nlohmann::json& j);

// Area centroid of a simple polygon; vertex mean when the area vanishes.
Point polygon_centroid(const std::vector<Point>& polygon);

enum class ContextKind { kLess, kMore };

std::string_view context_name(ContextKind kind);

struct CropSpec {
  std::string image_id;
  FdiTooth tooth{11};
  ContextKind context = ContextKind::kLess;
  int x0 = 0;
  int y0 = 0;
  int window_side = 224;
  int output_side = 224;
  ImageDims image;
  // Window centre minus requested centre, non-zero only after clamping.
  double center_dx = 0;
  double center_dy = 0;

  bool operator==(const CropSpec&) const = default;
};

// Window of `window_side` centred on `centroid`, shifted to lie fully inside
// the image. Throws ImageTooSmall.
CropSpec crop_window(Point centroid, int window_side, ImageDims dims);

struct CropGeometry {
  int less_side = 224;
  int more_side = 380;
  int output_side = 224;
};

CropSpec make_crop_spec(const ToothInstance& instance, ContextKind kind, ImageDims dims,
                        const CropGeometry& geometry = {});

// Bilinear resampling with pixel-centre alignment.
GrayImage resize_bilinear(const GrayImage& source, int width, int height);

// The raw window pixels, never resized.
GrayImage extract_window(const GrayImage& image, const CropSpec& spec);

// Window copied, then resized to output_side when the window is larger.
// Throws DimensionMismatch when the raster does not match spec.image.
GrayImage extract_crop(const GrayImage& image, const CropSpec& spec);

nlohmann::json to_json(const CropSpec& spec);
CropSpec crop_spec_from_json(const nlohmann::json& j);

enum class Split { kTrain, kValidation, kTest };

std::string_view split_name(Split split);
Split parse_split(std::string_view name);

struct CropRef {
  std::string image_id;
  FdiTooth tooth{11};

  auto operator<=>(const CropRef&) const = default;
  std::string id() const { return image_id + "_" + tooth.text(); }
};

struct SplitRatios {
  double train = 0.70;
  double validation = 0.15;
  double test = 0.15;
};

struct SplitEntry {
  CropRef crop;
  Split split = Split::kTrain;
  int repetition = 1;

  bool operator==(const SplitEntry&) const = default;
};

struct SplitManifest {
  std::vector<SplitEntry> entries;  // sorted by crop
  std::uint64_t seed = 0;
  SplitRatios ratios;

  // Number of distinct images per split.
  std::map<Split, int> image_counts() const;
  // Entries repeated according to their repetition count.
  std::vector<CropRef> expanded(std::optional<Split> only = std::nullopt) const;

  nlohmann::json to_json() const;
  static SplitManifest from_json(const nlohmann::json& j);
};

// Images are shuffled with the seed and apportioned to the splits by largest
// remainder; every crop follows its image. Throws BadRatios.
SplitManifest split_dataset(const std::vector<CropRef>& crops, SplitRatios ratios, std::uint64_t seed);

// Train entries positive for `condition` get repetition = factor.
// Throws UnknownCondition, EmptyTrainSplit, InvalidArgument (factor < 1).
SplitManifest oversample_positives(const SplitManifest& manifest, const LabelMatrix& labels,
                                   int condition, int factor = 10);

}  // namespace dentlabel

#endif  // DENTLABEL_CROP_H_
