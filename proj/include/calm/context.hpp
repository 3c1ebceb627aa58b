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

#ifndef CALM_CONTEXT_HPP_
#define CALM_CONTEXT_HPP_

#include <string>
#include <string_view>
#include <vector>

namespace calm {

// Observation and action used in place of (o_0, a_0) for the first turn of a
// trajectory.
inline constexpr std::string_view kPadObservation =
    "You are at the start of your journey";
inline constexpr std::string_view kPadAction = "begin journey";

// Two-turn window (o_{t-1}, a_{t-1}, o_t) that conditions action generation.
struct Context {
  std::string prev_observation{kPadObservation};
  std::string prev_action{kPadAction};
  std::string observation;

  bool operator==(const Context&) const = default;
};

// Anything that proposes a ranked list of candidate actions for a context.
class ActionModel {
 public:
  virtual ~ActionModel() = default;

  // Top-k candidates, best first. Must be safe to call concurrently.
  virtual std::vector<std::string> generate(const Context& context,
                                            int k) const = 0;

  // True when generate(c, k1) is always a prefix of generate(c, k2), k1 <= k2.
  virtual bool prefix_consistent() const { return true; }

  virtual std::string name() const = 0;
};

}  // namespace calm

#endif  // CALM_CONTEXT_HPP_
