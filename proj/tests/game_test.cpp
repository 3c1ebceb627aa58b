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

#include <gtest/gtest.h>

#include <numeric>

#include "calm/game.hpp"
#include "calm/rng.hpp"
#include "oracles.hpp"

namespace calm::game {
namespace {

constexpr char kMinimal[] = R"(
[meta]
name: minimal
[room cell]
description: A bare cell.
[object pebble]
attributes: takeable
location: cell
[reward]
when: held(pebble)
value: 7
[walkthrough]
take pebble
)";

TEST(LoadGameSpec, DuplicateMetaIsRejected) {
  EXPECT_THROW(load_game_spec(std::string(kMinimal) + "[meta]\n", "m"),
               ValidationError);
}

TEST(LoadGameSpec, MinimalSingleRewardSetsMaxScore) {
  const std::string doc = std::string(kMinimal).replace(
      std::string(kMinimal).find("[room"), 0, "prelude: standard\n");
  const auto spec = load_game_spec(doc, "minimal");
  EXPECT_DOUBLE_EQ(spec.max_score, 7.0);
  EXPECT_EQ(spec.rooms.size(), 1u);
  EXPECT_EQ(spec.walkthrough, std::vector<std::string>{"take pebble"});
}

TEST(LoadGameSpec, ExitToUndefinedRoomIsValidationError) {
  constexpr char kDoc[] = R"(
[room a]
exits: north -> nowhere_land
)";
  EXPECT_THROW(load_game_spec(kDoc), ValidationError);
}

TEST(LoadGameSpec, ParseErrorCarriesLineAndColumn) {
  constexpr char kDoc[] = "[meta]\nname: x\n\n[room a\n";
  try {
    load_game_spec(kDoc, "bad.game");
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 4u);
    EXPECT_GT(e.column(), 0u);
    EXPECT_NE(std::string(e.what()).find("bad.game:4:"), std::string::npos);
  }
}

TEST(LoadGameSpec, UnknownKeyIsParseError) {
  EXPECT_THROW(load_game_spec("[room a]\ncolour: red\n"), ParseError);
}

TEST(LoadGameSpec, RewardReferencingUnknownIdIsValidationError) {
  EXPECT_THROW(load_game_spec("[room a]\n[reward]\nwhen: held(ghost)\nvalue: 1\n"),
               ValidationError);
}

TEST(LoadGameSpec, WalkthroughMustReachMaxScore) {
  constexpr char kDoc[] = R"(
[meta]
max_score: 10
prelude: standard
[room a]
[object pebble]
attributes: takeable
location: a
[reward]
when: held(pebble)
value: 7
[walkthrough]
take pebble
)";
  EXPECT_THROW(load_game_spec(kDoc), ValidationError);
}

TEST(LoadGameSpec, ToyzorkVocabularyCoversEverything) {
  const auto spec = testing::load_game("toyzork");
  EXPECT_LE(spec.vocabulary.size(), 30u);
  for (const auto& t : spec.templates)
    for (const auto& el : t.elements)
      if (el.slot < 0) EXPECT_TRUE(spec.vocabulary.count(el.literal)) << el.literal;
  for (const auto& o : spec.objects)
    for (const auto& toks : o.name_tokens)
      for (const auto& tok : toks) EXPECT_TRUE(spec.vocabulary.count(tok));
  for (const auto& r : spec.rooms)
    for (const auto& [dir, target] : r.exits) EXPECT_TRUE(spec.vocabulary.count(dir));
}

TEST(Reset, ObservationHasStartRoomAndScoreZero) {
  const auto spec = testing::load_game("toyzork");
  const auto [state, obs] = reset(spec);
  EXPECT_NE(obs.find(spec.rooms[spec.start_room].description), std::string::npos);
  EXPECT_NE(obs.find("You are empty-handed."), std::string::npos);
  EXPECT_EQ(state.score, 0.0);
  EXPECT_TRUE(std::all_of(state.reward_claims.begin(), state.reward_claims.end(),
                          [](int c) { return c == 0; }));
}

TEST(Reset, Deterministic) {
  const auto spec = testing::load_game("toyzork");
  const auto a = reset(spec);
  const auto b = reset(spec);
  EXPECT_EQ(a.first, b.first);
  EXPECT_EQ(a.second, b.second);
}

TEST(Step, GibberishIsInadmissible) {
  const auto spec = testing::load_game("toyzork");
  const auto [state, obs] = reset(spec);
  const auto [next, r] = step(spec, state, "north a");
  EXPECT_FALSE(r.state_changed);
  EXPECT_EQ(r.reward, 0.0);
  EXPECT_EQ(next.moves, state.moves + 1);
  EXPECT_TRUE(next.same_except_moves(state));
  const auto& cat = failure_catalog();
  EXPECT_NE(std::find(cat.begin(), cat.end(), r.response), cat.end());
}

TEST(Step, FailureKinds) {
  const auto spec = testing::load_game("toyzork");
  const auto [s0, obs] = reset(spec);
  EXPECT_EQ(step(spec, s0, "dance").second.failure, Failure::kUnknownWord);
  EXPECT_EQ(step(spec, s0, "lamp").second.failure, Failure::kUnknownVerb);
  EXPECT_EQ(step(spec, s0, "take lamp").second.failure, Failure::kNotHere);
  EXPECT_EQ(step(spec, s0, "west").second.failure, Failure::kNoExit);
  EXPECT_EQ(step(spec, s0, "north a").second.failure, Failure::kUnknownWord);
  EXPECT_EQ(step(spec, s0, "north lamp").second.failure, Failure::kIncomplete);
  EXPECT_EQ(step(spec, s0, "take lamp").second.response,
            "That object is either not here or not important.");
}

TEST(Step, WalkthroughReplayReachesMaxScore) {
  const auto spec = testing::load_game("toyzork");
  auto [state, obs] = reset(spec);
  double total = 0;
  bool done = false;
  for (const auto& a : spec.walkthrough) {
    ASSERT_FALSE(done);
    auto [next, r] = step(spec, state, a);
    EXPECT_TRUE(r.state_changed) << a;
    total += r.reward;
    done = r.done;
    state = next;
  }
  EXPECT_DOUBLE_EQ(total, spec.max_score);
  EXPECT_DOUBLE_EQ(state.score, spec.max_score);
  EXPECT_TRUE(done);
}

TEST(Step, OnceOnlyRewardDoesNotRefire) {
  const auto spec = testing::load_game("toyzork");
  auto [s, obs] = reset(spec);
  for (const char* a : {"east", "take lamp", "turn on lamp", "down"})
    s = step(spec, s, a).first;
  auto [s1, r1] = step(spec, s, "take key");
  EXPECT_DOUBLE_EQ(r1.reward, 2.0);
  auto [s2, r2] = step(spec, s1, "drop key");
  EXPECT_TRUE(r2.state_changed);
  auto [s3, r3] = step(spec, s2, "take key");
  EXPECT_TRUE(r3.state_changed);
  EXPECT_DOUBLE_EQ(r3.reward, 0.0);
  EXPECT_DOUBLE_EQ(s3.score, 2.0);
}

TEST(Step, DarkRoomHidesObjects) {
  const auto spec = testing::load_game("toyzork");
  auto [s, obs] = reset(spec);
  for (const char* a : {"east", "down"}) s = step(spec, s, a).first;
  EXPECT_FALSE(in_scope(spec, s, spec.object_index("key")));
  EXPECT_NE(look_text(spec, s).find("pitch dark"), std::string::npos);
  EXPECT_EQ(step(spec, s, "take key").second.failure, Failure::kNotHere);
}

TEST(Step, DoorGateOverridesMovement) {
  const auto spec = testing::load_game("toyzork");
  auto [s, obs] = reset(spec);
  s = step(spec, s, "north").first;
  const auto [n, r] = step(spec, s, "north");
  EXPECT_FALSE(r.state_changed);
  EXPECT_EQ(r.response, "The door is closed.");
}

TEST(Step, SynonymsLongestMatchThenDeclarationOrder) {
  constexpr char kDoc[] = R"(
[meta]
prelude: standard
[room a]
[object redball]
names: red ball, ball
attributes: takeable
location: a
[object blueball]
names: blue ball, ball
attributes: takeable
location: a
)";
  const auto spec = load_game_spec(kDoc);
  const auto [s, obs] = reset(spec);
  const auto [s1, r1] = step(spec, s, "take blue ball");
  EXPECT_EQ(s1.object_locations[1].place, Place::kInventory);
  EXPECT_EQ(s1.object_locations[0].place, Place::kRoom);
  const auto [s2, r2] = step(spec, s, "take ball");
  EXPECT_EQ(s2.object_locations[0].place, Place::kInventory);
  EXPECT_EQ(s2.object_locations[1].place, Place::kRoom);
}

TEST(Step, ScoreConservationUnderRandomPlay) {
  const auto spec = testing::load_game("toyzork");
  Rng rng(11);
  for (int episode = 0; episode < 20; ++episode) {
    auto [s, obs] = reset(spec);
    double emitted = 0;
    for (int t = 0; t < 60; ++t) {
      auto cands = template_candidates(spec, s);
      const auto& a = cands[rng.below(cands.size())];
      auto [next, r] = step(spec, s, a);
      if (!r.state_changed) {
        EXPECT_TRUE(next.same_except_moves(s));
        EXPECT_EQ(r.reward, 0.0);
      }
      emitted += r.reward;
      s = next;
      EXPECT_DOUBLE_EQ(s.score, emitted);
      double claimed = 0;
      for (std::size_t i = 0; i < spec.rewards.size(); ++i)
        claimed += s.reward_claims[i] * spec.rewards[i].value;
      EXPECT_DOUBLE_EQ(s.score, claimed);
    }
  }
}

TEST(Step, Deterministic) {
  const auto spec = testing::load_game("toyzork");
  const auto [s, obs] = reset(spec);
  const auto a = step(spec, s, "east");
  const auto b = step(spec, s, "east");
  EXPECT_EQ(a.first, b.first);
  EXPECT_EQ(a.second.observation, b.second.observation);
}

TEST(Admissible, StartStateMatchesHandSet) {
  const auto spec = testing::load_game("toyzork");
  const auto [s, obs] = reset(spec);
  EXPECT_EQ(admissible_actions(spec, s),
            (std::vector<std::string>{"east", "north"}));
}

TEST(Admissible, LockedAwayObjectsLeaveOnlyMovement) {
  constexpr char kDoc[] = R"(
[meta]
prelude: standard
[room a]
exits: east -> b
[room b]
exits: west -> a
[object safe]
attributes: openable, container, lockable, scenery
state: locked
locked_by: key
location: a
[object key]
attributes: takeable
location: in safe
[object gem]
attributes: takeable
location: in safe
)";
  const auto spec = load_game_spec(kDoc);
  const auto [s, obs] = reset(spec);
  EXPECT_EQ(admissible_actions(spec, s), std::vector<std::string>{"east"});
}

TEST(Admissible, EveryActionChangesState) {
  const auto spec = testing::load_game("toyzork");
  auto [s, obs] = reset(spec);
  for (const auto& gold : spec.walkthrough) {
    for (const auto& a : admissible_actions(spec, s))
      EXPECT_TRUE(step(spec, s, a).second.state_changed) << a;
    s = step(spec, s, gold).first;
  }
}

TEST(Admissible, MatchesBruteForceEnumerationAtStart) {
  const auto spec = testing::load_game("toyzork");
  const auto [s, obs] = reset(spec);
  const auto oracle = testing::brute_force_admissible(spec, s);
  const auto got = admissible_actions(spec, s);
  EXPECT_EQ(std::set<std::string>(got.begin(), got.end()), oracle);
}

TEST(Admissible, LeavesInputStateUntouched) {
  const auto spec = testing::load_game("toyzork");
  auto [s, obs] = reset(spec);
  s = step(spec, s, "east").first;
  const auto before = s;
  (void)admissible_actions(spec, s);
  EXPECT_EQ(s, before);
}

TEST(Walkthrough, TrajectoryShape) {
  const auto spec = testing::load_game("toyzork");
  const auto traj = walkthrough_trajectory(spec);
  ASSERT_EQ(traj.size(), spec.walkthrough.size());
  EXPECT_EQ(traj[0].context.prev_observation, kPadObservation);
  EXPECT_EQ(traj[0].context.prev_action, kPadAction);
  for (std::size_t i = 0; i < traj.size(); ++i) {
    EXPECT_EQ(traj[i].step, static_cast<int>(i) + 1);
    EXPECT_TRUE(std::binary_search(traj[i].admissible.begin(),
                                   traj[i].admissible.end(), traj[i].gold));
    if (i > 0) {
      EXPECT_EQ(traj[i].context.prev_action, traj[i - 1].gold);
      EXPECT_EQ(traj[i].context.prev_observation, traj[i - 1].context.observation);
    }
  }
}

TEST(Walkthrough, StepThreeMatchesHandComputedSet) {
  // After "east", "take lamp": in the kitchen holding an unlit lamp.
  const auto traj = walkthrough_trajectory(testing::load_game("toyzork"));
  EXPECT_EQ(traj[2].gold, "turn on lamp");
  EXPECT_EQ(traj[2].admissible,
            (std::vector<std::string>{"down", "drop lamp", "turn on lamp", "west"}));
}

TEST(Walkthrough, StepThreeMatchesBruteForce) {
  const auto spec = testing::load_game("toyzork");
  auto [s, obs] = reset(spec);
  s = step(spec, s, "east").first;
  s = step(spec, s, "take lamp").first;
  const auto oracle = testing::brute_force_admissible(spec, s);
  const auto traj = walkthrough_trajectory(spec);
  EXPECT_EQ(std::set<std::string>(traj[2].admissible.begin(), traj[2].admissible.end()),
            oracle);
}

TEST(Walkthrough, DivergenceIsReported) {
  constexpr char kDoc[] = R"(
[meta]
prelude: standard
[room a]
[object pebble]
attributes: takeable
location: a
[reward]
when: held(pebble)
value: 1
[walkthrough]
take pebble
take pebble
)";
  const auto spec = load_game_spec(kDoc);
  EXPECT_THROW(walkthrough_trajectory(spec), WalkthroughDivergence);
}

TEST(Walkthrough, JsonlRoundTrip) {
  const auto traj = walkthrough_trajectory(testing::load_game("toyzork"));
  const auto text = trajectory_to_jsonl(traj);
  EXPECT_EQ(std::count(text.begin(), text.end(), '\n'),
            static_cast<long>(traj.size()));
  const auto back = trajectory_from_jsonl(text);
  ASSERT_EQ(back.size(), traj.size());
  for (std::size_t i = 0; i < traj.size(); ++i) {
    EXPECT_EQ(back[i].context, traj[i].context);
    EXPECT_EQ(back[i].admissible, traj[i].admissible);
    EXPECT_EQ(back[i].gold, traj[i].gold);
  }
}

}  // namespace
}  // namespace calm::game
