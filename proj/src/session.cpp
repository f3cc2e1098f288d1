#include "ctlab/session.hpp"

#include <algorithm>

#include "ctlab/questionnaires.hpp"
#include "ctlab/replay.hpp"

namespace ctlab {

std::string_view to_string(SessionPhase p) {
  switch (p) {
    case SessionPhase::Lobby: return "Lobby";
    case SessionPhase::InRound: return "InRound";
    case SessionPhase::BetweenRounds: return "BetweenRounds";
    case SessionPhase::Questionnaire: return "Questionnaire";
    case SessionPhase::Done: return "Done";
  }
  return "?";
}

std::string_view to_string(ClockMode m) { return m == ClockMode::Wall ? "wall" : "lockstep"; }

ClockMode clock_mode_from_string(std::string_view s) {
  if (s == "wall") return ClockMode::Wall;
  if (s == "lockstep") return ClockMode::Lockstep;
  throw Error(ErrorCode::ConfigError, "clock must be 'wall' or 'lockstep', got '" + std::string(s) + "'");
}

void to_json(Json& j, const SessionOptions& o) {
  j = Json{{"clock", to_string(o.clock)},
           {"server_bots", o.server_bots},
           {"inter_round_ms", o.inter_round_ms},
           {"questionnaires", o.questionnaires}};
}

void from_json(const Json& j, SessionOptions& o) {
  o = SessionOptions{};
  try {
    if (j.contains("clock")) o.clock = clock_mode_from_string(j.at("clock").get<std::string>());
    o.server_bots = j.value("server_bots", o.server_bots);
    o.inter_round_ms = j.value("inter_round_ms", o.inter_round_ms);
    o.questionnaires = j.value("questionnaires", o.questionnaires);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ConfigError, std::string("session options: ") + e.what());
  }
  if (o.inter_round_ms < 0) throw Error(ErrorCode::ConfigError, "inter_round_ms must be non-negative");
}

Session::Session(std::string session_id, ExperimentPlan plan, SessionOptions options,
                 std::map<std::string, SubjectId> tokens)
    : id_(std::move(session_id)), plan_(std::move(plan)), options_(options), tokens_(std::move(tokens)) {
  plan_.validate();
  if (options_.server_bots < 0 || options_.server_bots > plan_.n_subjects) {
    throw Error(ErrorCode::ConfigError, "server_bots must lie in 0.." + std::to_string(plan_.n_subjects));
  }
  population_ = generate_population(plan_);
  schedule_ = schedule_rounds(plan_, population_);
  const auto n_remote = static_cast<std::size_t>(plan_.n_subjects - options_.server_bots);
  for (std::size_t i = 0; i < population_.size(); ++i) {
    auto& subject = population_[i].subject;
    member_index_[subject.subject_id] = i;
    if (i < n_remote) {
      subject.kind = SubjectKind::Human;
      remote_.insert(subject.subject_id);
      online_[subject.subject_id] = false;
    }
  }
  std::set<SubjectId> covered;
  for (const auto& [token, subject] : tokens_) {
    if (!remote_.contains(subject)) throw Error(ErrorCode::ConfigError, "token for non-remote subject " + subject);
    if (!covered.insert(subject).second) throw Error(ErrorCode::ConfigError, "two tokens for " + subject);
  }
  if (covered.size() != remote_.size()) throw Error(ErrorCode::ConfigError, "every remote subject needs a token");
}

void Session::restore(std::span<const GameEvent> events, std::span<const QuestionnaireRow> answers) {
  if (!log_.events().empty()) throw Error(ErrorCode::ConfigError, "restore needs a fresh session");
  const auto rep = replay(events);
  log_ = EventLog(std::vector<GameEvent>(events.begin(), events.end()));
  for (const auto& o : rep.outcomes) {
    settled_.push_back({rep.settled.at(o.round_id), o});
    settled_ids_.insert(o.round_id);
  }
  voided_ = rep.voided;
  for (const auto& row : answers) {
    auto& profile = answered_profiles_[row.subject_id];
    apply_questionnaire_answer(row.instrument, row.payload, profile);
    answered_[row.subject_id].insert(row.instrument);
  }
  phase_ = SessionPhase::Lobby;
  joined_.clear();
}

void Session::set_sinks(EventSink events, AnswerSink answers) {
  event_sink_ = std::move(events);
  answer_sink_ = std::move(answers);
}

bool Session::connected(const SubjectId& s) const {
  const auto it = online_.find(s);
  return it != online_.end() && it->second;
}

void Session::emit(std::vector<Outbound>& out, const SubjectId& to, Json msg, bool close) {
  if (!connected(to)) return;
  msg["session_id"] = id_;
  msg["seq"] = ++out_seq_[to];
  out.push_back({to, std::move(msg), close});
}

const GameEvent& Session::log(GameEvent e) {
  const auto& stored = log_.append(std::move(e));
  if (event_sink_) event_sink_(stored);
  return stored;
}

Session::GroupRun* Session::run_of(const SubjectId& s, std::size_t* idx) {
  for (auto& run : active_) {
    if (run.closed) continue;
    const auto& m = run.group.members;
    if (const auto it = std::find(m.begin(), m.end(), s); it != m.end()) {
      *idx = static_cast<std::size_t>(it - m.begin());
      return &run;
    }
  }
  return nullptr;
}

// --- round lifecycle -----------------------------------------------------------------

void Session::start_next(Millis now, std::vector<Outbound>& out) {
  active_.clear();
  resume_at_.reset();
  while (next_group_ < schedule_.size() && settled_ids_.contains(schedule_[next_group_].round_id)) ++next_group_;
  if (next_group_ == schedule_.size()) {
    finish_rounds(out);
    return;
  }
  phase_ = SessionPhase::InRound;
  if (options_.clock == ClockMode::Lockstep) {
    begin_group(schedule_[next_group_++], now, out);
    return;
  }
  const int round_index = schedule_[next_group_].round_index;
  while (next_group_ < schedule_.size() && schedule_[next_group_].round_index == round_index) {
    const auto& g = schedule_[next_group_++];
    if (!settled_ids_.contains(g.round_id)) begin_group(g, now, out);
  }
}

void Session::begin_group(const GroupAssignment& g, Millis now, std::vector<Outbound>& out) {
  GroupRun run;
  run.group = g;
  run.state = new_round(g.config, g.members, g.round_id);
  run.start = now;

  GameEvent e;
  e.round_id = g.round_id;
  e.kind = EventKind::RoundStarted;
  e.members = g.members;
  e.config = g.config;
  log(std::move(e));

  run.bots.resize(g.members.size());
  for (std::size_t i = 0; i < g.members.size(); ++i) {
    const auto& m = g.members[i];
    if (is_remote(m)) continue;
    run.bots[i].emplace(agent_for_round(population_[member_index_.at(m)], g.config),
                        agent_round_rng(plan_.seed, m, g.round_id), g.config.group_size - 1);
  }
  for (const auto& m : g.members) emit(out, m, round_start_msg(g.round_id, g.config));
  offer(run, out);
  active_.push_back(std::move(run));
}

void Session::offer(GroupRun& run, std::vector<Outbound>&) {
  for (std::size_t i = 0; i < run.group.members.size(); ++i) {
    const auto& m = run.group.members[i];
    if (run.scheduled.contains(i) || run.state.has_acted(m)) continue;
    if (auto& bot = run.bots[i]) {
      if (auto s = bot->observe(social_info(run.state, m), run.now)) {
        run.pending[{s->at_ms, i}] = s->amount;
        run.scheduled.insert(i);
      }
    } else if (options_.clock == ClockMode::Lockstep && connected(m)) {
      run.awaiting.insert(i);
    }
  }
}

void Session::contribute(GroupRun& run, std::size_t idx, int amount, Millis at, std::vector<Outbound>& out) {
  GameEvent ev;
  ev.seq = log_.next_seq();
  ev.at_ms = at;
  ev.round_id = run.group.round_id;
  ev.kind = EventKind::Contributed;
  ev.subject_id = run.group.members[idx];
  ev.amount = amount;
  auto tr = apply(run.state, ev);
  log(ev);
  run.state = std::move(tr.state);
  run.now = at;
  if (tr.extended_to) {
    GameEvent ext;
    ext.at_ms = at;
    ext.round_id = run.group.round_id;
    ext.kind = EventKind::ClockExtended;
    ext.deadline_ms = *tr.extended_to;
    log(std::move(ext));
    for (const auto& m : run.group.members) {
      emit(out, m, clock_extended_msg(run.group.round_id, *tr.extended_to, at));
    }
  }
  for (const auto& m : run.group.members) {
    emit(out, m, social_info_msg(run.group.round_id, social_info(run.state, m), at));
  }
  offer(run, out);
}

void Session::close_run(GroupRun& run, std::vector<Outbound>& out) {
  PlayedRound played;
  played.outcome = close_and_settle(run.state, run.state.deadline_ms);
  run.state.phase = Phase::Closed;
  run.closed = true;
  run.awaiting.clear();

  GameEvent end;
  end.at_ms = run.state.deadline_ms;
  end.round_id = run.group.round_id;
  end.kind = EventKind::RoundEnded;
  end.total = played.outcome.total;
  end.funded = played.outcome.funded;
  log(std::move(end));

  std::map<SubjectId, int> amounts;
  for (const auto& c : run.state.contributions) amounts[c.subject_id] = c.amount;
  for (const auto& m : run.group.members) {
    const auto it = amounts.find(m);
    emit(out, m, round_end_msg(run.group.round_id, played.outcome.funded, it == amounts.end() ? 0 : it->second));
  }
  played.state = run.state;
  settled_ids_.insert(run.group.round_id);
  settled_.push_back(std::move(played));
}

void Session::after_runs(Millis now, std::vector<Outbound>& out) {
  if (options_.clock == ClockMode::Lockstep) {
    start_next(now, out);
    return;
  }
  active_.clear();
  const bool more = std::any_of(schedule_.begin() + static_cast<std::ptrdiff_t>(next_group_), schedule_.end(),
                                [&](const GroupAssignment& g) { return !settled_ids_.contains(g.round_id); });
  if (!more) {
    finish_rounds(out);
    return;
  }
  phase_ = SessionPhase::BetweenRounds;
  resume_at_ = now + options_.inter_round_ms;
}

void Session::pump(Millis now, std::vector<Outbound>& out) {
  while (phase_ == SessionPhase::InRound && !active_.empty()) {
    auto& run = active_.front();
    if (!run.awaiting.empty()) return;
    if (!run.pending.empty() && run.pending.begin()->first.first <= run.state.deadline_ms) {
      const auto it = run.pending.begin();
      const auto [at, idx] = it->first;
      const int amount = it->second;
      run.pending.erase(it);
      contribute(run, idx, amount, at, out);
      continue;
    }
    close_run(run, out);
    after_runs(now, out);
  }
}

void Session::fire_due(Millis now, std::vector<Outbound>& out) {
  if (phase_ == SessionPhase::InRound) {
    for (auto& run : active_) {
      if (run.closed) continue;
      const Millis t = now - run.start;
      while (!run.pending.empty()) {
        const auto it = run.pending.begin();
        const auto [at, idx] = it->first;
        if (at > t || at > run.state.deadline_ms) break;
        const int amount = it->second;
        run.pending.erase(it);
        contribute(run, idx, amount, at, out);
      }
      if (t >= run.state.deadline_ms) close_run(run, out);
    }
    if (std::all_of(active_.begin(), active_.end(), [](const GroupRun& r) { return r.closed; })) {
      after_runs(now, out);
    }
  }
  if (phase_ == SessionPhase::BetweenRounds && resume_at_ && now >= *resume_at_) start_next(now, out);
}

void Session::finish_rounds(std::vector<Outbound>& out) {
  active_.clear();
  resume_at_.reset();
  phase_ = SessionPhase::Questionnaire;
  for (const auto& s : remote_) {
    if (connected(s)) prompt_or_pay(s, out);
  }
  check_done();
}

void Session::prompt_or_pay(const SubjectId& s, std::vector<Outbound>& out) {
  if (options_.questionnaires) {
    for (const auto& instrument : kInstrumentOrder) {
      if (!answered_[s].contains(instrument)) {
        emit(out, s, questionnaire_prompt_msg(instrument));
        return;
      }
    }
  }
  std::vector<RoundId> played;
  for (const auto& p : settled_) {
    if (p.state.is_member(s)) played.push_back(p.state.round_id);
  }
  if (played.empty()) {
    emit(out, s, payment_info_msg("", 0));
  } else {
    const auto selected = select_payment_round(played, make_rng(plan_.seed, {"payment", s})());
    for (const auto& p : settled_) {
      if (p.state.round_id == selected) emit(out, s, payment_info_msg(selected, p.outcome.payoffs.at(s)));
    }
  }
  paid_.insert(s);
}

void Session::check_done() {
  if (phase_ != SessionPhase::Questionnaire) return;
  const bool all = std::all_of(remote_.begin(), remote_.end(),
                               [&](const SubjectId& s) { return paid_.contains(s) || !connected(s); });
  if (all) phase_ = SessionPhase::Done;
}

// --- client input ----------------------------------------------------------------------

Session::JoinResult Session::join(const std::string& token, Millis now) {
  const auto it = tokens_.find(token);
  if (it == tokens_.end()) throw Error(ErrorCode::ProtocolError, "unknown join token");
  JoinResult r;
  r.subject_id = it->second;
  const auto& s = r.subject_id;
  online_[s] = true;
  joined_.insert(s);
  emit(r.out, s, welcome_msg(s, to_string(options_.clock)));

  switch (phase_) {
    case SessionPhase::Lobby:
      if (joined_.size() == remote_.size()) start_next(now, r.out);
      break;
    case SessionPhase::InRound: {
      std::size_t idx = 0;
      if (auto* run = run_of(s, &idx)) {
        emit(r.out, s, round_start_msg(run->group.round_id, run->group.config));
        emit(r.out, s, social_info_msg(run->group.round_id, social_info(run->state, s), run->now));
        if (options_.clock == ClockMode::Lockstep && !run->scheduled.contains(idx) && !run->state.has_acted(s)) {
          run->awaiting.insert(idx);
        }
      }
      break;
    }
    case SessionPhase::Questionnaire:
      if (!paid_.contains(s)) prompt_or_pay(s, r.out);
      break;
    case SessionPhase::Done:
      if (paid_.contains(s)) prompt_or_pay(s, r.out);
      break;
    case SessionPhase::BetweenRounds:
      break;
  }
  if (options_.clock == ClockMode::Lockstep) {
    pump(now, r.out);
  } else {
    fire_due(now, r.out);
  }
  return r;
}

std::vector<Outbound> Session::disconnect(const SubjectId& s, Millis now) {
  std::vector<Outbound> out;
  online_[s] = false;
  if (options_.clock == ClockMode::Lockstep) {
    std::size_t idx = 0;
    if (auto* run = run_of(s, &idx)) run->awaiting.erase(idx);
    pump(now, out);
  }
  check_done();
  return out;
}

std::vector<Outbound> Session::start(Millis now) {
  std::vector<Outbound> out;
  if (phase_ != SessionPhase::Lobby) return out;
  start_next(now, out);
  if (options_.clock == ClockMode::Lockstep) pump(now, out);
  return out;
}

std::vector<Outbound> Session::advance(Millis now) {
  std::vector<Outbound> out;
  if (phase_ == SessionPhase::Lobby) {
    if (joined_.size() != remote_.size()) return out;
    start_next(now, out);
  }
  if (options_.clock == ClockMode::Lockstep) {
    pump(now, out);
  } else {
    fire_due(now, out);
  }
  return out;
}

std::optional<Millis> Session::next_wakeup() const {
  if (phase_ == SessionPhase::Lobby) {
    return joined_.size() == remote_.size() ? std::optional<Millis>(0) : std::nullopt;
  }
  if (options_.clock == ClockMode::Lockstep) return std::nullopt;
  if (phase_ == SessionPhase::BetweenRounds) return resume_at_;
  if (phase_ != SessionPhase::InRound) return std::nullopt;
  std::optional<Millis> best;
  for (const auto& run : active_) {
    if (run.closed) continue;
    Millis t = run.state.deadline_ms;
    if (!run.pending.empty()) t = std::min(t, run.pending.begin()->first.first);
    if (!best || run.start + t < *best) best = run.start + t;
  }
  return best;
}

std::vector<Outbound> Session::handle(const SubjectId& s, const ClientMessage& msg, Millis now) {
  std::vector<Outbound> out;
  if (options_.clock == ClockMode::Wall) fire_due(now, out);
  try {
    std::visit(
        [&](const auto& m) {
          using T = std::decay_t<decltype(m)>;
          if constexpr (std::is_same_v<T, JoinMsg>) {
            throw Error(ErrorCode::ProtocolError, "already joined");
          } else if constexpr (std::is_same_v<T, ContributeMsg>) {
            on_contribute(s, m, now, out);
          } else if constexpr (std::is_same_v<T, PassMsg>) {
            on_pass(s, m, now, out);
          } else if constexpr (std::is_same_v<T, ReadyMsg>) {
            on_ready(s, m, now, out);
          } else {
            on_answer(s, m, out);
          }
        },
        msg);
  } catch (const Error& e) {
    emit(out, s, error_msg(e.code(), e.what()), e.code() == ErrorCode::ProtocolError);
  }
  return out;
}

std::vector<Outbound> Session::reject(const SubjectId& s, std::string_view detail) {
  std::vector<Outbound> out;
  emit(out, s, error_msg(ErrorCode::ProtocolError, detail), true);
  return out;
}

void Session::on_contribute(const SubjectId& s, const ContributeMsg& m, Millis now, std::vector<Outbound>& out) {
  std::size_t idx = 0;
  auto* run = run_of(s, &idx);
  if (!run || run->group.round_id != m.round_id) {
    throw Error(ErrorCode::RoundClosed, "round " + m.round_id + " is not open");
  }
  if (run->scheduled.contains(idx) || run->state.has_acted(s)) {
    throw Error(ErrorCode::DuplicateAction, s + " already acted in " + m.round_id);
  }
  if (options_.clock == ClockMode::Wall) {
    contribute(*run, idx, m.amount, std::max(now - run->start, run->now), out);
    return;
  }
  if (!m.at_ms) throw Error(ErrorCode::InvalidEvent, "lockstep contributions need at_ms");
  if (*m.at_ms < run->now) throw Error(ErrorCode::InvalidEvent, "at_ms lies before the current round time");
  GameEvent probe;
  probe.at_ms = run->now;
  probe.round_id = m.round_id;
  probe.kind = EventKind::Contributed;
  probe.subject_id = s;
  probe.amount = m.amount;
  (void)apply(run->state, probe);
  run->pending[{*m.at_ms, idx}] = m.amount;
  run->scheduled.insert(idx);
  run->awaiting.erase(idx);
  pump(now, out);
}

void Session::on_pass(const SubjectId& s, const PassMsg& m, Millis now, std::vector<Outbound>& out) {
  std::size_t idx = 0;
  auto* run = run_of(s, &idx);
  if (!run || run->group.round_id != m.round_id) {
    throw Error(ErrorCode::RoundClosed, "round " + m.round_id + " is not open");
  }
  if (run->scheduled.contains(idx)) throw Error(ErrorCode::DuplicateAction, s + " already acted in " + m.round_id);
  GameEvent ev;
  ev.seq = log_.next_seq();
  ev.at_ms = options_.clock == ClockMode::Wall ? std::max(now - run->start, run->now) : run->now;
  ev.round_id = m.round_id;
  ev.kind = EventKind::Passed;
  ev.subject_id = s;
  auto tr = apply(run->state, ev);
  log(ev);
  run->state = std::move(tr.state);
  run->now = ev.at_ms;
  run->awaiting.erase(idx);
  if (options_.clock == ClockMode::Lockstep) pump(now, out);
}

void Session::on_ready(const SubjectId& s, const ReadyMsg& m, Millis now, std::vector<Outbound>& out) {
  if (options_.clock != ClockMode::Lockstep) return;
  std::size_t idx = 0;
  auto* run = run_of(s, &idx);
  if (!run || run->group.round_id != m.round_id) return;
  run->awaiting.erase(idx);
  pump(now, out);
}

void Session::on_answer(const SubjectId& s, const QuestionnaireAnswerMsg& m, std::vector<Outbound>& out) {
  if (phase_ != SessionPhase::Questionnaire || !options_.questionnaires) {
    throw Error(ErrorCode::InvalidEvent, "no questionnaire is open");
  }
  if (std::find(kInstrumentOrder.begin(), kInstrumentOrder.end(), m.instrument) == kInstrumentOrder.end()) {
    throw Error(ErrorCode::InvalidResponse, "unknown instrument '" + m.instrument + "'");
  }
  if (answered_[s].contains(m.instrument)) throw Error(ErrorCode::DuplicateAction, m.instrument + " already answered");
  auto profile = answered_profiles_[s];
  apply_questionnaire_answer(m.instrument, m.payload, profile);
  answered_profiles_[s] = profile;
  answered_[s].insert(m.instrument);
  if (answer_sink_) answer_sink_({s, m.instrument, m.payload});
  prompt_or_pay(s, out);
  check_done();
}

// --- exports ---------------------------------------------------------------------------

std::vector<RoundOutcome> Session::outcomes() const {
  std::vector<RoundOutcome> out;
  for (const auto& p : settled_) out.push_back(p.outcome);
  return out;
}

std::string Session::records_csv() const {
  const auto subjects = subjects_by_id(population_);
  std::vector<SubjectRoundRecord> rows;
  for (const auto& p : settled_) {
    auto r = records_for_round(p.state, p.outcome, subjects);
    rows.insert(rows.end(), r.begin(), r.end());
  }
  return ctlab::records_csv(rows);
}

std::string Session::population_csv() const {
  auto pop = population_;
  for (auto& m : pop) {
    const auto& id = m.subject.subject_id;
    if (!is_remote(id)) continue;
    const auto it = answered_.find(id);
    if (it != answered_.end() && it->second.size() == kInstrumentOrder.size()) {
      m.subject.profile = answered_profiles_.at(id);
    } else {
      m.subject.profile.reset();
    }
  }
  return ctlab::population_csv(pop);
}

Json Session::status() const {
  Json roster = Json::array();
  for (const auto& m : population_) {
    const auto& id = m.subject.subject_id;
    roster.push_back({{"subject_id", id}, {"remote", is_remote(id)}, {"connected", is_remote(id) && connected(id)}});
  }
  int round_index = 0;
  for (const auto& run : active_) round_index = std::max(round_index, run.group.round_index);
  return Json{{"session_id", id_},
              {"phase", to_string(phase_)},
              {"clock", to_string(options_.clock)},
              {"round_index", round_index},
              {"groups_total", schedule_.size()},
              {"groups_settled", settled_.size()},
              {"voided", voided_},
              {"events", log_.events().size()},
              {"roster", roster}};
}

}  // namespace ctlab
