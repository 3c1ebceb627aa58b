// Copyright 2026 The calm-text Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef CALM_TEXT_HPP_
#define CALM_TEXT_HPP_

#include <string>
#include <string_view>
#include <vector>

namespace calm::text {

// Shared tokenizer: ASCII-lowercases, splits on whitespace, and emits every
// punctuation character as its own token. Token budgets (256 context tokens,
// 7 action tokens) are measured with this function everywhere.
std::vector<std::string> tokenize(std::string_view text);

// Lowercase, trim, and collapse internal whitespace runs to one space.
std::string normalize_action(std::string_view action);

std::string to_lower(std::string_view s);
std::string_view trim(std::string_view s);
std::string join(const std::vector<std::string>& parts, std::string_view sep);
std::vector<std::string> split(std::string_view s, char delim);

bool starts_with(std::string_view s, std::string_view prefix);

// Comma-separated list with whitespace trimmed; empty items dropped.
std::vector<std::string> split_list(std::string_view s);

}  // namespace calm::text

#endif  // CALM_TEXT_HPP_
