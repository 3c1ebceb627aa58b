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

#include <algorithm>
#include <cmath>
#include <set>

#include "calm/game.hpp"
#include "calm/text.hpp"
#include "json.hpp"

namespace calm::game {
namespace {

using Binding = std::vector<int>;  // object index per template slot

std::string with_article(const std::string& name) {
  const char c = name.empty() ? 'x' : name.front();
  const bool vowel = c == 'a' || c == 'e' || c == 'i' || c == 'o' || c == 'u';
  return (vowel ? "an " : "a ") + name;
}

std::string list_phrase(const std::vector<std::string>& items) {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (i > 0) out += (i + 1 == items.size()) ? " and " : ", ";
    out += items[i];
  }
  return out;
}

int resolve_flag(const GameSpec& spec, const FlagRef& ref, const Binding& b) {
  if (ref.slot < 0) return ref.flag;
  return spec.object_flags[static_cast<std::size_t>(b[ref.slot]) *
                               spec.flag_suffixes.size() +
                           static_cast<std::size_t>(ref.suffix)];
}

int term_object(const Term& t, const Binding& b) {
  return t.kind == Term::Kind::kSlot ? b[t.index] : t.index;
}

bool object_flag(const GameSpec& spec, const WorldState& s, int obj,
                 std::string_view suffix) {
  const int f = spec.object_flag(obj, suffix);
  return f != kNoId && s.flags[f];
}

// Reachable by hand ignoring darkness: in the room or the inventory, possibly
// nested in open containers. `carried` reports whether the chain ends in the
// inventory.
bool reachable(const GameSpec& spec, const WorldState& s, int obj,
               bool* carried = nullptr) {
  Location loc = s.object_locations[obj];
  std::size_t hops = 0;
  while (loc.place == Place::kInside) {
    if (!object_flag(spec, s, loc.id, "open")) return false;
    if (++hops > s.object_locations.size()) return false;
    loc = s.object_locations[loc.id];
  }
  if (carried) *carried = loc.place == Place::kInventory;
  return loc.place == Place::kInventory ||
         (loc.place == Place::kRoom && loc.id == s.player_room);
}

bool room_lit(const GameSpec& spec, const WorldState& s) {
  if (!spec.rooms[s.player_room].dark) return true;
  for (std::size_t o = 0; o < spec.objects.size(); ++o)
    if (object_flag(spec, s, static_cast<int>(o), "lit") &&
        reachable(spec, s, static_cast<int>(o)))
      return true;
  return false;
}

std::vector<int> scope_objects(const GameSpec& spec, const WorldState& s) {
  const bool lit = room_lit(spec, s);
  std::vector<int> out;
  for (std::size_t o = 0; o < spec.objects.size(); ++o) {
    bool carried = false;
    if (reachable(spec, s, static_cast<int>(o), &carried) && (lit || carried))
      out.push_back(static_cast<int>(o));
  }
  return out;
}

bool location_matches(const WorldState& s, int obj, const Term& where,
                      const Binding& b) {
  const Location& loc = s.object_locations[obj];
  switch (where.kind) {
    case Term::Kind::kInventory:
      return loc.place == Place::kInventory;
    case Term::Kind::kNowhere:
      return loc.place == Place::kNowhere;
    case Term::Kind::kHere:
      return loc.place == Place::kRoom && loc.id == s.player_room;
    case Term::Kind::kRoom:
      return loc.place == Place::kRoom && loc.id == where.index;
    case Term::Kind::kSlot:
    case Term::Kind::kObject:
      return loc.place == Place::kInside && loc.id == term_object(where, b);
  }
  return false;
}

bool holds(const GameSpec& spec, const WorldState& s, const Predicate& p,
           const Binding& b) {
  using K = Predicate::Kind;
  bool v = false;
  switch (p.kind) {
    case K::kHeld:
      v = s.object_locations[term_object(p.a, b)].place == Place::kInventory;
      break;
    case K::kHere:
      v = in_scope(spec, s, term_object(p.a, b));
      break;
    case K::kAt:
      v = s.player_room == p.a.index;
      break;
    case K::kIn:
      v = location_matches(s, term_object(p.a, b), p.b, b);
      break;
    case K::kIs:
      v = spec.objects[term_object(p.a, b)].has(p.attribute);
      break;
    case K::kFlag:
      v = s.flags[resolve_flag(spec, p.flag, b)];
      break;
    case K::kUnlocks:
      v = spec.objects[term_object(p.b, b)].locked_by == term_object(p.a, b);
      break;
    case K::kEq:
      v = term_object(p.a, b) == term_object(p.b, b);
      break;
  }
  return v != p.negated;
}

bool all_hold(const GameSpec& spec, const WorldState& s,
              const std::vector<Predicate>& ps, const Binding& b) {
  return std::all_of(ps.begin(), ps.end(),
                     [&](const Predicate& p) { return holds(spec, s, p, b); });
}

// Applies effects in order. Returns false (leaving `s` partially modified)
// if a move would create a containment cycle.
bool apply(const GameSpec& spec, WorldState& s,
           const std::vector<Effect>& effects, const Binding& b) {
  using K = Effect::Kind;
  for (const auto& e : effects) {
    switch (e.kind) {
      case K::kMove: {
        const int obj = term_object(e.a, b);
        Location dest;
        switch (e.b.kind) {
          case Term::Kind::kInventory:
            dest = {Place::kInventory, kNoId};
            break;
          case Term::Kind::kNowhere:
            dest = {Place::kNowhere, kNoId};
            break;
          case Term::Kind::kHere:
            dest = {Place::kRoom, s.player_room};
            break;
          case Term::Kind::kRoom:
            dest = {Place::kRoom, e.b.index};
            break;
          case Term::Kind::kSlot:
          case Term::Kind::kObject: {
            const int container = term_object(e.b, b);
            int cur = container;
            std::size_t hops = 0;
            while (true) {
              if (cur == obj) return false;
              const Location& up = s.object_locations[cur];
              if (up.place != Place::kInside ||
                  ++hops > s.object_locations.size())
                break;
              cur = up.id;
            }
            dest = {Place::kInside, container};
            break;
          }
        }
        s.object_locations[obj] = dest;
        break;
      }
      case K::kSet:
        s.flags[resolve_flag(spec, e.flag, b)] = true;
        break;
      case K::kClear:
        s.flags[resolve_flag(spec, e.flag, b)] = false;
        break;
      case K::kGoto:
        s.player_room = e.a.index;
        break;
      case K::kEnd:
        s.ended = true;
        break;
    }
  }
  return true;
}

std::string substitute(const GameSpec& spec, const Template& t,
                       const std::string& say, const Binding& b) {
  std::string out;
  for (std::size_t i = 0; i < say.size(); ++i) {
    if (say[i] == '{') {
      const auto close = say.find('}', i);
      if (close != std::string::npos) {
        const std::string inner = say.substr(i + 1, close - i - 1);
        const auto colon = inner.find(':');
        const std::string slot = inner.substr(0, colon);
        const auto it = std::find(t.slot_names.begin(), t.slot_names.end(), slot);
        if (it != t.slot_names.end()) {
          const auto& obj = spec.objects[b[it - t.slot_names.begin()]];
          if (colon != std::string::npos &&
              inner.substr(colon + 1) == "description") {
            out += obj.description.empty()
                       ? "You see nothing special about the " +
                             obj.canonical_name() + "."
                       : obj.description;
          } else {
            out += obj.canonical_name();
          }
          i = close;
          continue;
        }
      }
    }
    out.push_back(say[i]);
  }
  return out;
}

// Candidate bindings for the template against the input, longest object-name
// spans first, objects in declaration order.
void match_from(const GameSpec& spec, const Template& t,
                const std::vector<std::string>& tokens, std::size_t el,
                std::size_t pos, Binding& cur, std::vector<Binding>& out) {
  if (el == t.elements.size()) {
    if (pos == tokens.size()) out.push_back(cur);
    return;
  }
  const auto& e = t.elements[el];
  if (e.slot < 0) {
    if (pos < tokens.size() && tokens[pos] == e.literal)
      match_from(spec, t, tokens, el + 1, pos + 1, cur, out);
    return;
  }
  for (std::size_t len = tokens.size() - pos; len >= 1; --len) {
    std::string span;
    for (std::size_t i = pos; i < pos + len; ++i) {
      if (i > pos) span += ' ';
      span += tokens[i];
    }
    const auto it = spec.objects_by_name.find(span);
    if (it == spec.objects_by_name.end()) continue;
    for (int obj : it->second) {
      cur[e.slot] = obj;
      match_from(spec, t, tokens, el + 1, pos + len, cur, out);
    }
  }
}

bool leading_literals_match(const Template& t,
                            const std::vector<std::string>& tokens) {
  std::size_t i = 0;
  for (; i < t.elements.size() && t.elements[i].slot < 0; ++i)
    if (i >= tokens.size() || tokens[i] != t.elements[i].literal) return false;
  return i > 0;
}

struct Outcome {
  WorldState next;
  std::string response;
  double reward = 0.0;
  Failure failure = Failure::kNone;
};

void claim_rewards(const GameSpec& spec, const WorldState& before,
                   WorldState& after, Outcome& out) {
  const Binding none;
  for (std::size_t i = 0; i < spec.rewards.size(); ++i) {
    const auto& r = spec.rewards[i];
    if (r.once && after.reward_claims[i] > 0) continue;
    if (!all_hold(spec, after, r.when, none)) continue;
    if (all_hold(spec, before, r.when, none)) continue;
    ++after.reward_claims[i];
    after.score += r.value;
    out.reward += r.value;
  }
  if (out.reward != 0.0) {
    const auto pts = std::llround(std::abs(out.reward));
    const bool whole = std::abs(std::abs(out.reward) - static_cast<double>(pts)) < 1e-9;
    out.response += std::string("\n[Your score has gone ") +
                    (out.reward > 0 ? "up" : "down") + " by " +
                    (whole ? std::to_string(pts) : std::to_string(out.reward)) +
                    (pts == 1 && whole ? " point.]" : " points.]");
  }
  if (spec.max_score > 0 && after.score >= spec.max_score - 1e-9 &&
      !after.ended) {
    after.ended = true;
    out.response += "\n*** You have won ***";
  }
}

Outcome fail_with(const WorldState& state, Failure f) {
  Outcome out{state, std::string(failure_message(f)), 0.0, f};
  out.next.moves += 1;
  return out;
}

Outcome execute(const GameSpec& spec, const WorldState& state,
                std::string_view action) {
  if (state.ended) return fail_with(state, Failure::kGameOver);
  const auto tokens = text::tokenize(action);
  if (tokens.empty()) return fail_with(state, Failure::kUnknownVerb);
  for (const auto& tok : tokens)
    if (!spec.vocabulary.count(tok)) return fail_with(state, Failure::kUnknownWord);

  int chosen = -1;
  Binding binding;
  bool matched_out_of_scope = false;
  bool partial = false;
  for (std::size_t ti = 0; ti < spec.templates.size() && chosen < 0; ++ti) {
    const auto& t = spec.templates[ti];
    std::vector<Binding> found;
    Binding cur(t.slot_names.size(), kNoId);
    match_from(spec, t, tokens, 0, 0, cur, found);
    if (found.empty()) {
      partial = partial || leading_literals_match(t, tokens);
      continue;
    }
    for (const auto& b : found) {
      const bool visible = std::all_of(b.begin(), b.end(), [&](int o) {
        return in_scope(spec, state, o);
      });
      if (visible) {
        chosen = static_cast<int>(ti);
        binding = b;
        break;
      }
      matched_out_of_scope = true;
    }
  }
  if (chosen < 0) {
    if (matched_out_of_scope) return fail_with(state, Failure::kNotHere);
    return fail_with(state,
                     partial ? Failure::kIncomplete : Failure::kUnknownVerb);
  }

  const auto& tmpl = spec.templates[chosen];
  for (int ri : spec.rules_by_template[chosen]) {
    const auto& rule = spec.rules[ri];
    if (!all_hold(spec, state, rule.when, binding)) continue;
    Outcome out{state, substitute(spec, tmpl, rule.say, binding)};
    if (!apply(spec, out.next, rule.effects, binding))
      return fail_with(state, Failure::kNothingHappens);
    out.next.moves += 1;
    claim_rewards(spec, state, out.next, out);
    return out;
  }
  if (tmpl.direction) {
    const int target = spec.rooms[state.player_room].exit(tmpl.text);
    if (target == kNoId) return fail_with(state, Failure::kNoExit);
    Outcome out{state, ""};
    out.next.player_room = target;
    out.next.moves += 1;
    claim_rewards(spec, state, out.next, out);
    return out;
  }
  return fail_with(state, Failure::kNothingHappens);
}

WorldState initial_state(const GameSpec& spec) {
  WorldState s;
  s.player_room = spec.start_room;
  for (const auto& o : spec.objects) s.object_locations.push_back(o.initial);
  s.flags = spec.initial_flags;
  s.reward_claims.assign(spec.rewards.size(), 0);
  return s;
}

}  // namespace

bool WorldState::same_except_moves(const WorldState& other) const {
  return player_room == other.player_room &&
         object_locations == other.object_locations && flags == other.flags &&
         score == other.score && reward_claims == other.reward_claims &&
         ended == other.ended;
}

const std::vector<std::string>& failure_catalog() {
  static const std::vector<std::string> kCatalog = {
      "That's not a verb I recognise.",
      "You used a word I don't know.",
      "I didn't understand that sentence.",
      "That object is either not here or not important.",
      "You can't go that way.",
      "Nothing happens.",
      "The game is over.",
  };
  return kCatalog;
}

std::string_view failure_message(Failure failure) {
  if (failure == Failure::kNone) return "";
  return failure_catalog()[static_cast<std::size_t>(failure) - 1];
}

bool in_scope(const GameSpec& spec, const WorldState& state, int object) {
  bool carried = false;
  if (!reachable(spec, state, object, &carried)) return false;
  return carried || room_lit(spec, state);
}

std::string look_text(const GameSpec& spec, const WorldState& state) {
  const auto& room = spec.rooms[state.player_room];
  std::string out = room.name + "\n";
  if (!room_lit(spec, state))
    return out + "It is pitch dark. You can't see a thing.";
  out += room.description;
  std::vector<std::string> visible;
  for (std::size_t o = 0; o < spec.objects.size(); ++o) {
    const auto& loc = state.object_locations[o];
    if (loc.place == Place::kRoom && loc.id == state.player_room &&
        !spec.objects[o].has("scenery"))
      visible.push_back(with_article(spec.objects[o].canonical_name()));
  }
  if (!visible.empty()) out += "\nYou can see " + list_phrase(visible) + " here.";
  for (int c : scope_objects(spec, state)) {
    if (!object_flag(spec, state, c, "open")) continue;
    std::vector<std::string> inside;
    for (std::size_t o = 0; o < spec.objects.size(); ++o) {
      const auto& loc = state.object_locations[o];
      if (loc.place == Place::kInside && loc.id == c)
        inside.push_back(with_article(spec.objects[o].canonical_name()));
    }
    if (!inside.empty())
      out += "\nThe " + spec.objects[c].canonical_name() + " contains " +
             list_phrase(inside) + ".";
  }
  return out;
}

std::string inventory_text(const GameSpec& spec, const WorldState& state) {
  std::vector<std::string> held;
  for (std::size_t o = 0; o < spec.objects.size(); ++o)
    if (state.object_locations[o].place == Place::kInventory)
      held.push_back(with_article(spec.objects[o].canonical_name()));
  if (held.empty()) return "You are empty-handed.";
  return "You are carrying " + list_phrase(held) + ".";
}

std::string render_observation(const GameSpec& spec, const WorldState& state,
                               std::string_view response) {
  std::string out;
  if (!response.empty()) {
    out += response;
    out += "\n\n";
  }
  out += look_text(spec, state);
  out += "\n\n";
  out += inventory_text(spec, state);
  return out;
}

std::pair<WorldState, std::string> reset(const GameSpec& spec) {
  WorldState s = initial_state(spec);
  return {s, render_observation(spec, s, spec.intro)};
}

std::pair<WorldState, StepResult> step(const GameSpec& spec,
                                       const WorldState& state,
                                       std::string_view action) {
  Outcome out = execute(spec, state, action);
  StepResult r;
  r.state_changed = !out.next.same_except_moves(state);
  r.reward = out.reward;
  r.failure = out.failure;
  r.done = out.next.ended;
  r.observation = render_observation(spec, out.next, out.response);
  r.response = std::move(out.response);
  return {std::move(out.next), std::move(r)};
}

std::vector<std::string> template_candidates(const GameSpec& spec,
                                             const WorldState& state) {
  const auto scope = scope_objects(spec, state);
  std::vector<std::string> out;
  for (const auto& t : spec.templates) {
    const int arity = t.arity();
    std::vector<Binding> bindings;
    if (arity == 0) {
      bindings.emplace_back();
    } else if (arity == 1) {
      for (int o : scope) bindings.push_back({o});
    } else {
      for (int a : scope)
        for (int b : scope) bindings.push_back({a, b});
    }
    for (const auto& b : bindings) {
      std::vector<std::string> parts;
      for (const auto& el : t.elements)
        parts.push_back(el.slot >= 0 ? spec.objects[b[el.slot]].canonical_name()
                                     : el.literal);
      out.push_back(text::join(parts, " "));
    }
  }
  return out;
}

std::vector<std::string> admissible_actions(const GameSpec& spec,
                                            const WorldState& state) {
  std::set<std::string> found;
  for (const auto& candidate : template_candidates(spec, state)) {
    if (found.count(candidate)) continue;
    const Outcome out = execute(spec, state, candidate);
    if (!out.next.same_except_moves(state)) found.insert(candidate);
  }
  return {found.begin(), found.end()};
}

std::vector<TrajectoryStep> walkthrough_trajectory(const GameSpec& spec) {
  if (spec.walkthrough.empty())
    throw InvalidArgument("game '" + spec.name + "' has no walkthrough");
  std::vector<TrajectoryStep> records;
  auto [state, obs] = reset(spec);
  Context ctx;
  ctx.observation = obs;
  int t = 0;
  for (const auto& gold : spec.walkthrough) {
    TrajectoryStep rec;
    rec.step = ++t;
    rec.context = ctx;
    rec.gold = gold;
    rec.admissible = admissible_actions(spec, state);
    if (!std::binary_search(rec.admissible.begin(), rec.admissible.end(), gold))
      throw WalkthroughDivergence("walkthrough step " + std::to_string(t) +
                                  " ('" + gold + "') is not admissible");
    auto [next, result] = step(spec, state, gold);
    state = std::move(next);
    ctx.prev_observation = std::move(ctx.observation);
    ctx.prev_action = gold;
    ctx.observation = result.observation;
    records.push_back(std::move(rec));
  }
  return records;
}

std::string trajectory_to_jsonl(const std::vector<TrajectoryStep>& records) {
  std::string out;
  for (const auto& r : records) {
    nlohmann::ordered_json j;
    j["step"] = r.step;
    j["context"] = {{"prev_observation", r.context.prev_observation},
                    {"prev_action", r.context.prev_action},
                    {"observation", r.context.observation}};
    j["gold"] = r.gold;
    j["admissible"] = r.admissible;
    out += j.dump();
    out += '\n';
  }
  return out;
}

std::vector<TrajectoryStep> trajectory_from_jsonl(std::string_view text_in) {
  std::vector<TrajectoryStep> out;
  for (const auto& line : text::split(text_in, '\n')) {
    if (text::trim(line).empty()) continue;
    const auto j = nlohmann::json::parse(line);
    TrajectoryStep r;
    r.step = j.at("step").get<int>();
    const auto& c = j.at("context");
    r.context.prev_observation = c.at("prev_observation").get<std::string>();
    r.context.prev_action = c.at("prev_action").get<std::string>();
    r.context.observation = c.at("observation").get<std::string>();
    r.gold = j.at("gold").get<std::string>();
    r.admissible = j.at("admissible").get<std::vector<std::string>>();
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace calm::game
