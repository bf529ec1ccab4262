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

#ifndef DENTLABEL_ERROR_H_
#define DENTLABEL_ERROR_H_

#include <stdexcept>
#include <string>
#include <string_view>

namespace dentlabel {

// Every failure the library reports carries one of these codes. The CLI maps
// them onto exit statuses and the service onto HTTP statuses.
enum class ErrorCode {
  // report_corpus
  kMalformedLine,
  kDuplicateTopicNumber,
  kInvalidFdiCode,
  kInvalidPattern,
  kConfigError,
  kMissingManifestEntry,
  // phrase_extraction
  kEndpointUnavailable,
  kResponseUnparseable,
  kRateLimited,
  kCacheCorrupt,
  // labeling
  kEmptyVocabulary,
  kUnknownImage,
  // crop_engine
  kManifestParseError,
  kMissingImageDimensions,
  kImageTooSmall,
  kDimensionMismatch,
  kBadRatios,
  kUnknownCondition,
  kEmptyTrainSplit,
  // metrics
  kEmptyCounts,
  kLengthMismatch,
  kDegenerateAgreement,
  kRankDeficient,
  kDegenerateVariance,
  kInvalidArgument,
  // study
  kStratumExhausted,
  kIncompleteAnnotations,
  kEmptyGroup,
  // annotation_service
  kUnknownRater,
  kUnknownCrop,
  kBadVectorLength,
  // generic I/O
  kIoError,
};

std::string_view error_code_name(ErrorCode code);

// True for errors caused by bad user input or configuration (CLI exit 1);
// false for failures met while running (CLI exit 2).
bool is_validation_error(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message) {
  throw Error(code, message);
}

}  // namespace dentlabel

#endif  // DENTLABEL_ERROR_H_
