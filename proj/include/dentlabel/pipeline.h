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

#ifndef DENTLABEL_PIPELINE_H_
#define DENTLABEL_PIPELINE_H_

#include <iosfwd>
#include <string>
#include <vector>

#include "json.hpp"

namespace dentlabel {

// Exit statuses of the command line.
inline constexpr int kExitOk = 0;
inline constexpr int kExitValidation = 1;
inline constexpr int kExitRuntime = 2;

// Version plus SHA-256 of every embedded config asset.
nlohmann::json version_info();

// Runs one subcommand. `args` excludes the program name. Diagnostics go to
// `err` as one JSON object per line.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int run_cli(int argc, char** argv);

}  // namespace dentlabel

#endif  // DENTLABEL_PIPELINE_H_
