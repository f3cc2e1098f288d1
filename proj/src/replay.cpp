#include "ctlab/replay.hpp"

#include <set>

namespace ctlab {

namespace {

[[noreturn]] void corrupt(std::int64_t seq, const std::string& why) {
  throw Error(ErrorCode::CorruptLog, "seq " + std::to_string(seq) + ": " + why);
}

}  // namespace

ReplayResult replay(std::span<const GameEvent> events) {
  ReplayResult out;
  std::set<RoundId> ended;
  // Rounds whose last applied contribution extended the deadline and still
  // await their ClockExtended record.
  std::map<RoundId, Millis> pending_extension;

  for (const auto& ev : events) {
    if (ev.seq != out.last_seq + 1) {
      corrupt(ev.seq, "expected seq " + std::to_string(out.last_seq + 1));
    }
    out.last_seq = ev.seq;

    if (ev.kind == EventKind::RoundStarted && out.open.contains(ev.round_id)) {
      pending_extension.erase(ev.round_id);
    } else if (ev.kind != EventKind::ClockExtended && pending_extension.contains(ev.round_id)) {
      corrupt(ev.seq, "missing ClockExtended for round " + ev.round_id);
    }

    switch (ev.kind) {
      case EventKind::RoundStarted: {
        if (!ev.members || !ev.config) corrupt(ev.seq, "RoundStarted without members/config");
        if (ended.contains(ev.round_id)) corrupt(ev.seq, "round " + ev.round_id + " restarted after end");
        if (out.open.contains(ev.round_id)) out.voided.push_back(ev.round_id);
        try {
          out.open[ev.round_id] = new_round(*ev.config, *ev.members, ev.round_id);
        } catch (const Error& e) {
          corrupt(ev.seq, e.what());
        }
        break;
      }
      case EventKind::Contributed:
      case EventKind::Passed: {
        auto it = out.open.find(ev.round_id);
        if (it == out.open.end()) corrupt(ev.seq, "event for round that is not open: " + ev.round_id);
        try {
          auto tr = apply(it->second, ev);
          it->second = std::move(tr.state);
          if (tr.extended_to) pending_extension[ev.round_id] = *tr.extended_to;
        } catch (const Error& e) {
          corrupt(ev.seq, e.what());
        }
        break;
      }
      case EventKind::ClockExtended: {
        const auto pe = pending_extension.find(ev.round_id);
        if (pe == pending_extension.end()) corrupt(ev.seq, "unexpected ClockExtended");
        if (ev.deadline_ms && *ev.deadline_ms != pe->second) {
          corrupt(ev.seq, "ClockExtended deadline disagrees with engine");
        }
        pending_extension.erase(pe);
        break;
      }
      case EventKind::RoundEnded: {
        auto it = out.open.find(ev.round_id);
        if (it == out.open.end()) corrupt(ev.seq, "RoundEnded for round that is not open");
        RoundOutcome outcome;
        try {
          outcome = close_and_settle(it->second, ev.at_ms);
        } catch (const Error& e) {
          corrupt(ev.seq, e.what());
        }
        if ((ev.total && *ev.total != outcome.total) || (ev.funded && *ev.funded != outcome.funded)) {
          corrupt(ev.seq, "RoundEnded totals disagree with replayed contributions");
        }
        auto state = std::move(it->second);
        state.phase = Phase::Closed;
        out.settled[ev.round_id] = std::move(state);
        out.open.erase(it);
        ended.insert(ev.round_id);
        out.outcomes.push_back(std::move(outcome));
        break;
      }
    }
  }
  for (const auto& [id, st] : out.open) out.voided.push_back(id);
  return out;
}

std::vector<GameEvent> parse_event_log(std::string_view text) {
  std::vector<GameEvent> events;
  std::size_t pos = 0;
  while (pos < text.size()) {
    auto end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    const auto line = text.substr(pos, end - pos);
    if (line.find_first_not_of(" \t\r") != std::string_view::npos) {
      events.push_back(parse_event_line(line));
    }
    pos = end + 1;
  }
  return events;
}

std::string outcomes_to_jsonl(std::span<const RoundOutcome> outcomes) {
  std::string out;
  for (const auto& o : outcomes) {
    out += Json(o).dump();
    out.push_back('\n');
  }
  return out;
}

}  // namespace ctlab
