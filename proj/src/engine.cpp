#include "ctlab/engine.hpp"

#include <algorithm>
#include <random>

namespace ctlab {

bool RoundState::is_member(const SubjectId& id) const {
  return std::find(members.begin(), members.end(), id) != members.end();
}

bool RoundState::has_acted(const SubjectId& id) const {
  if (passes.contains(id)) return true;
  return std::any_of(contributions.begin(), contributions.end(),
                     [&](const Contribution& c) { return c.subject_id == id; });
}

void to_json(Json& j, const RoundOutcome& o) {
  Json ranks = Json::object();
  for (const auto& [k, v] : o.ranks) ranks[k] = v;
  Json payoffs = Json::object();
  for (const auto& [k, v] : o.payoffs) payoffs[k] = v;
  j = Json{{"round_id", o.round_id},
           {"total", o.total},
           {"funded", o.funded},
           {"ranks", ranks},
           {"payoffs", payoffs}};
}

void from_json(const Json& j, RoundOutcome& o) {
  o.round_id = j.at("round_id").get<std::string>();
  o.total = j.at("total").get<int>();
  o.funded = j.at("funded").get<bool>();
  o.ranks.clear();
  o.payoffs.clear();
  for (const auto& [k, v] : j.at("ranks").items()) o.ranks[k] = v.get<int>();
  for (const auto& [k, v] : j.at("payoffs").items()) o.payoffs[k] = v.get<int>();
}

RoundState new_round(const RoundConfig& config, std::vector<SubjectId> members, RoundId round_id) {
  config.validate();
  if (static_cast<int>(members.size()) != config.group_size) {
    throw Error(ErrorCode::ConfigError, "expected " + std::to_string(config.group_size) +
                                            " members, got " + std::to_string(members.size()));
  }
  std::vector<SubjectId> sorted = members;
  std::sort(sorted.begin(), sorted.end());
  if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) {
    throw Error(ErrorCode::ConfigError, "duplicate member id");
  }
  RoundState state;
  state.round_id = std::move(round_id);
  state.config = config;
  state.members = std::move(members);
  state.deadline_ms = config.base_duration_ms;
  return state;
}

Transition apply(const RoundState& state, const GameEvent& event) {
  if (event.kind != EventKind::Contributed && event.kind != EventKind::Passed) {
    throw Error(ErrorCode::InvalidEvent, "engine only applies Contributed/Passed events");
  }
  if (state.phase == Phase::Closed || event.at_ms > state.deadline_ms) {
    throw Error(ErrorCode::RoundClosed, "round " + state.round_id + " is closed");
  }
  if (!event.subject_id) throw Error(ErrorCode::InvalidEvent, "event without subject");
  const SubjectId& who = *event.subject_id;
  if (!state.is_member(who)) throw Error(ErrorCode::NotAMember, who);
  if (state.has_acted(who)) throw Error(ErrorCode::DuplicateAction, who);

  Transition out{state, std::nullopt};
  RoundState& next = out.state;
  if (event.kind == EventKind::Passed) {
    next.passes.insert(who);
    return out;
  }
  const int amount = event.amount.value_or(0);
  if (amount < 1 || amount > state.config.endowment) {
    throw Error(ErrorCode::InvalidAmount, std::to_string(amount));
  }
  next.contributions.push_back({who, amount, event.at_ms, event.seq});
  const auto& cfg = state.config;
  if (next.deadline_ms - event.at_ms <= cfg.extension_window_ms &&
      next.deadline_ms + cfg.extension_amount_ms <= cfg.max_duration_ms) {
    next.deadline_ms += cfg.extension_amount_ms;
    ++next.extensions_granted;
    out.extended_to = next.deadline_ms;
  }
  return out;
}

int social_info(const RoundState& state, const SubjectId& viewer) {
  if (!state.is_member(viewer)) throw Error(ErrorCode::NotAMember, viewer);
  return static_cast<int>(std::count_if(
      state.contributions.begin(), state.contributions.end(),
      [&](const Contribution& c) { return c.subject_id != viewer; }));
}

int payoff(const RoundConfig& config, int amount, bool funded) {
  return (config.endowment - amount) + (funded ? config.funded_bonus : 0);
}

RoundOutcome close_and_settle(const RoundState& state, Millis now_ms) {
  if (state.phase == Phase::Open && now_ms < state.deadline_ms) {
    throw Error(ErrorCode::NotYetClosed, state.round_id);
  }
  std::vector<Contribution> ordered = state.contributions;
  std::stable_sort(ordered.begin(), ordered.end(), [](const auto& a, const auto& b) {
    return a.at_ms != b.at_ms ? a.at_ms < b.at_ms : a.seq < b.seq;
  });

  RoundOutcome out;
  out.round_id = state.round_id;
  std::map<SubjectId, int> amounts;
  int rank = 0;
  for (const auto& c : ordered) {
    out.total += c.amount;
    out.ranks[c.subject_id] = ++rank;
    amounts[c.subject_id] = c.amount;
  }
  out.funded = out.total >= provision_point(state.config);
  for (const auto& m : state.members) {
    const auto it = amounts.find(m);
    out.payoffs[m] = payoff(state.config, it == amounts.end() ? 0 : it->second, out.funded);
  }
  return out;
}

RoundId select_payment_round(std::span<const RoundId> round_ids, std::uint64_t seed) {
  if (round_ids.empty()) throw Error(ErrorCode::NoRounds, "no rounds to select from");
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    0x9a11u};
  std::mt19937_64 rng(seq);
  std::uniform_int_distribution<std::size_t> pick(0, round_ids.size() - 1);
  return round_ids[pick(rng)];
}

}  // namespace ctlab
