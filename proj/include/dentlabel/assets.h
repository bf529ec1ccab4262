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

#ifndef DENTLABEL_ASSETS_H_
#define DENTLABEL_ASSETS_H_

#include <string_view>

namespace dentlabel::assets {

// Config assets shipped in assets/ and compiled into the library.
std::string_view extraction_prompt();
inline constexpr std::string_view kPromptVersion = "prompt_v1";
std::string_view synonyms_json();
std::string_view allowlist_json();
std::string_view reference_frequencies_json();
std::string_view presence_patterns_json();

}  // namespace dentlabel::assets

#endif  // DENTLABEL_ASSETS_H_
