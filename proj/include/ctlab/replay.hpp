#pragma once

#include <map>
#include <span>
#include <string>
#include <vector>

#include "ctlab/core.hpp"
#include "ctlab/engine.hpp"

namespace ctlab {

struct ReplayResult {
  /// Settled rounds in the order their RoundEnded events appear.
  std::vector<RoundOutcome> outcomes;
  /// Final state of every settled round, keyed by round id.
  std::map<RoundId, RoundState> settled;
  /// Rounds whose attempt never ended (server crash); excluded from outcomes.
  std::vector<RoundId> voided;
  /// Rounds still open at the end of the log (subset of `voided`).
  std::map<RoundId, RoundState> open;
  std::int64_t last_seq = 0;
};

/// Rebuilds every round from a session log. Sequence gaps and engine
/// invariant violations raise CorruptLog naming the first offending seq.
ReplayResult replay(std::span<const GameEvent> events);

/// Parses a JSON Lines log (blank lines ignored).
std::vector<GameEvent> parse_event_log(std::string_view text);

std::string outcomes_to_jsonl(std::span<const RoundOutcome> outcomes);

}  // namespace ctlab
