#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "ctlab/core.hpp"

namespace ctlab {

enum class Phase { Open, Closed };

struct Contribution {
  SubjectId subject_id;
  int amount = 0;
  Millis at_ms = 0;
  std::int64_t seq = 0;

  bool operator==(const Contribution&) const = default;
};

/// Full state of one provision-point round. Treated as a value: every
/// transition returns a fresh copy.
struct RoundState {
  RoundId round_id;
  RoundConfig config;
  std::vector<SubjectId> members;
  Phase phase = Phase::Open;
  std::vector<Contribution> contributions;
  std::set<SubjectId> passes;
  Millis deadline_ms = 0;
  int extensions_granted = 0;

  bool is_member(const SubjectId& id) const;
  bool has_acted(const SubjectId& id) const;
  int contributor_count() const { return static_cast<int>(contributions.size()); }

  bool operator==(const RoundState&) const = default;
};

struct RoundOutcome {
  RoundId round_id;
  int total = 0;
  bool funded = false;
  std::map<SubjectId, int> ranks;
  std::map<SubjectId, int> payoffs;

  bool operator==(const RoundOutcome&) const = default;
};

void to_json(Json& j, const RoundOutcome& o);
void from_json(const Json& j, RoundOutcome& o);

/// Result of applying one event. `extended_to` is set when the event pushed
/// the deadline; the caller is responsible for logging the ClockExtended
/// event at the next sequence number.
struct Transition {
  RoundState state;
  std::optional<Millis> extended_to;
};

RoundState new_round(const RoundConfig& config, std::vector<SubjectId> members,
                     RoundId round_id = {});

/// Applies a Contributed or Passed event.
Transition apply(const RoundState& state, const GameEvent& event);

/// Contributors other than `viewer`.
int social_info(const RoundState& state, const SubjectId& viewer);

/// Closes the round at `now_ms` (which must be at or past the deadline) and
/// settles payoffs: (endowment - amount) + bonus if funded.
RoundOutcome close_and_settle(const RoundState& state, Millis now_ms);

int payoff(const RoundConfig& config, int amount, bool funded);

/// Picks one round uniformly; deterministic for a given seed.
RoundId select_payment_round(std::span<const RoundId> round_ids, std::uint64_t seed);

}  // namespace ctlab
