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

#include "dentlabel/error.h"

namespace dentlabel {

std::string_view error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::kMalformedLine: return "MalformedLine";
    case ErrorCode::kDuplicateTopicNumber: return "DuplicateTopicNumber";
    case ErrorCode::kInvalidFdiCode: return "InvalidFdiCode";
    case ErrorCode::kInvalidPattern: return "InvalidPattern";
    case ErrorCode::kConfigError: return "ConfigError";
    case ErrorCode::kMissingManifestEntry: return "MissingManifestEntry";
    case ErrorCode::kEndpointUnavailable: return "EndpointUnavailable";
    case ErrorCode::kResponseUnparseable: return "ResponseUnparseable";
    case ErrorCode::kRateLimited: return "RateLimited";
    case ErrorCode::kCacheCorrupt: return "CacheCorrupt";
    case ErrorCode::kEmptyVocabulary: return "EmptyVocabulary";
    case ErrorCode::kUnknownImage: return "UnknownImage";
    case ErrorCode::kManifestParseError: return "ManifestParseError";
    case ErrorCode::kMissingImageDimensions: return "MissingImageDimensions";
    case ErrorCode::kImageTooSmall: return "ImageTooSmall";
    case ErrorCode::kDimensionMismatch: return "DimensionMismatch";
    case ErrorCode::kBadRatios: return "BadRatios";
    case ErrorCode::kUnknownCondition: return "UnknownCondition";
    case ErrorCode::kEmptyTrainSplit: return "EmptyTrainSplit";
    case ErrorCode::kEmptyCounts: return "EmptyCounts";
    case ErrorCode::kLengthMismatch: return "LengthMismatch";
    case ErrorCode::kDegenerateAgreement: return "DegenerateAgreement";
    case ErrorCode::kRankDeficient: return "RankDeficient";
    case ErrorCode::kDegenerateVariance: return "DegenerateVariance";
    case ErrorCode::kInvalidArgument: return "InvalidArgument";
    case ErrorCode::kStratumExhausted: return "StratumExhausted";
    case ErrorCode::kIncompleteAnnotations: return "IncompleteAnnotations";
    case ErrorCode::kEmptyGroup: return "EmptyGroup";
    case ErrorCode::kUnknownRater: return "UnknownRater";
    case ErrorCode::kUnknownCrop: return "UnknownCrop";
    case ErrorCode::kBadVectorLength: return "BadVectorLength";
    case ErrorCode::kIoError: return "IoError";
  }
  return "Unknown";
}

bool is_validation_error(ErrorCode code) {
  switch (code) {
    case ErrorCode::kEndpointUnavailable:
    case ErrorCode::kRateLimited:
    case ErrorCode::kResponseUnparseable:
    case ErrorCode::kCacheCorrupt:
    case ErrorCode::kIoError:
    case ErrorCode::kRankDeficient:
    case ErrorCode::kDegenerateVariance:
    case ErrorCode::kDegenerateAgreement:
    case ErrorCode::kStratumExhausted:
    case ErrorCode::kEmptyVocabulary:
      return false;
    default:
      return true;
  }
}

}  // namespace dentlabel
