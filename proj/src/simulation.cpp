#include "ctlab/simulation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <random>

#include "ctlab/csv.hpp"
#include "ctlab/replay.hpp"

namespace ctlab {

// --- plan ----------------------------------------------------------------------

void ExperimentPlan::validate() const {
  if (n_subjects < 1 || n_rounds < 1) throw Error(ErrorCode::PlanError, "need subjects and rounds");
  if (min_group_size < 7 || max_group_size > 10 || min_group_size > max_group_size) {
    throw Error(ErrorCode::PlanError, "group sizes must lie within 7..10");
  }
  if (min_rounds_per_subject < 1 || min_rounds_per_subject > max_rounds_per_subject ||
      min_rounds_per_subject > n_rounds) {
    throw Error(ErrorCode::PlanError, "invalid rounds-per-subject range");
  }
  if (n_subjects < min_group_size) {
    throw Error(ErrorCode::PlanError, std::to_string(n_subjects) +
                                          " subjects cannot fill a group of at least " +
                                          std::to_string(min_group_size));
  }
  if (scenario_set.empty()) throw Error(ErrorCode::PlanError, "empty scenario set");
  const double shares = svo_shares.pro_social + svo_shares.pro_self + svo_shares.unclassified;
  if (!(shares > 0.0)) throw Error(ErrorCode::PlanError, "svo shares must be positive");
  try {
    RoundConfig probe = round_template;
    probe.group_size = min_group_size;
    probe.validate();
  } catch (const Error& e) {
    throw Error(ErrorCode::PlanError, e.what());
  }
}

void to_json(Json& j, const ExperimentPlan& p) {
  j = Json{{"n_subjects", p.n_subjects},
           {"n_rounds", p.n_rounds},
           {"social_info_rounds_per_subject", {p.min_rounds_per_subject, p.max_rounds_per_subject}},
           {"group_size_range", {p.min_group_size, p.max_group_size}},
           {"seed", p.seed},
           {"scenario_set", p.scenario_set},
           {"mapping", p.mapping},
           {"svo_shares",
            {{"pro_social", p.svo_shares.pro_social},
             {"pro_self", p.svo_shares.pro_self},
             {"unclassified", p.svo_shares.unclassified}}},
           {"amount_mean", p.amount_mean},
           {"amount_sd", p.amount_sd},
           {"round", p.round_template}};
}

void from_json(const Json& j, ExperimentPlan& p) {
  const ExperimentPlan d;
  p.n_subjects = j.value("n_subjects", d.n_subjects);
  p.n_rounds = j.value("n_rounds", d.n_rounds);
  if (j.contains("social_info_rounds_per_subject")) {
    const auto r = j.at("social_info_rounds_per_subject").get<std::vector<int>>();
    if (r.size() != 2) throw Error(ErrorCode::PlanError, "rounds range needs [min, max]");
    p.min_rounds_per_subject = r[0];
    p.max_rounds_per_subject = r[1];
  }
  if (j.contains("group_size_range")) {
    const auto r = j.at("group_size_range").get<std::vector<int>>();
    if (r.size() != 2) throw Error(ErrorCode::PlanError, "group size range needs [min, max]");
    p.min_group_size = r[0];
    p.max_group_size = r[1];
  }
  p.seed = j.value("seed", d.seed);
  p.scenario_set = j.value("scenario_set", d.scenario_set);
  p.mapping = j.contains("mapping") ? j.at("mapping").get<MappingParams>() : d.mapping;
  if (j.contains("svo_shares")) {
    const auto& s = j.at("svo_shares");
    p.svo_shares.pro_social = s.value("pro_social", d.svo_shares.pro_social);
    p.svo_shares.pro_self = s.value("pro_self", d.svo_shares.pro_self);
    p.svo_shares.unclassified = s.value("unclassified", d.svo_shares.unclassified);
  }
  p.amount_mean = j.value("amount_mean", d.amount_mean);
  p.amount_sd = j.value("amount_sd", d.amount_sd);
  p.round_template = j.contains("round") ? j.at("round").get<RoundConfig>() : d.round_template;
}

ExperimentPlan load_plan(const std::string& path) {
  ExperimentPlan plan;
  try {
    plan = Json::parse(read_file(path)).get<ExperimentPlan>();
  } catch (const nlohmann::json::exception& ex) {
    throw Error(ErrorCode::PlanError, path + ": " + ex.what());
  }
  plan.validate();
  return plan;
}

// --- population ------------------------------------------------------------------

namespace {

double truncated_normal(double mean, double sd, double lo, double hi, Rng& rng) {
  std::normal_distribution<double> normal(mean, sd);
  for (;;) {
    const double v = normal(rng);
    if (v >= lo && v <= hi) return v;
  }
}

double beta_draw(double a, double b, Rng& rng) {
  std::gamma_distribution<double> ga(a, 1.0), gb(b, 1.0);
  const double x = ga(rng);
  const double y = gb(rng);
  return x / (x + y);
}

std::string subject_name(int i) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "S%03d", i);
  return buf;
}

}  // namespace

std::vector<PopulationMember> generate_population(const ExperimentPlan& plan) {
  plan.validate();
  Rng rng = make_rng(plan.seed, {"population"});
  const auto& shares = plan.svo_shares;
  std::discrete_distribution<int> svo_pick({shares.pro_self, shares.pro_social, shares.unclassified});
  std::normal_distribution<double> amount(plan.amount_mean, plan.amount_sd);

  std::vector<PopulationMember> out;
  out.reserve(static_cast<std::size_t>(plan.n_subjects));
  for (int i = 1; i <= plan.n_subjects; ++i) {
    PopulationMember m;
    m.subject.subject_id = subject_name(i);
    m.subject.kind = SubjectKind::Bot;
    PersonalityProfile p;
    p.extraversion = truncated_normal(4.0, 1.2, 1.0, 7.0, rng);
    p.agreeableness = truncated_normal(4.0, 1.2, 1.0, 7.0, rng);
    p.conscientiousness = truncated_normal(4.0, 1.2, 1.0, 7.0, rng);
    p.emotional_stability = truncated_normal(4.0, 1.2, 1.0, 7.0, rng);
    p.openness = truncated_normal(4.0, 1.2, 1.0, 7.0, rng);
    p.rotter_internal = beta_draw(2.0, 2.0, rng);
    p.svo = static_cast<Svo>(svo_pick(rng));
    m.subject.profile = p;

    const auto draw = personality_to_threshold(p, plan.mapping, plan.max_group_size, rng);
    m.agent.subject_id = m.subject.subject_id;
    m.agent.threshold = draw.threshold;
    m.agent.never_start = draw.never_start;
    m.agent.latency = {plan.mapping.latency_mean_ms, plan.mapping.latency_sd_ms,
                       plan.mapping.latency_floor_ms};
    if (plan.mapping.latency_mean_log_sd > 0.0) {
      const double s = plan.mapping.latency_mean_log_sd;
      std::normal_distribution<double> z(0.0, 1.0);
      m.agent.latency.mean_ms = plan.mapping.latency_mean_ms * std::exp(s * z(rng) - 0.5 * s * s);
    }
    m.agent.contribution_amount = std::clamp(static_cast<int>(std::lround(amount(rng))), 1,
                                             plan.round_template.endowment);
    for (const auto& scenario : plan.scenario_set) {
      m.subject.importance[scenario] = beta_draw(5.0, 2.0, rng);
    }
    m.agent.importance = 1.0;
    m.agent.threshold_round_sd = plan.mapping.threshold_round_sd;
    out.push_back(std::move(m));
  }
  return out;
}

std::map<SubjectId, Subject> subjects_by_id(std::span<const PopulationMember> population) {
  std::map<SubjectId, Subject> out;
  for (const auto& m : population) out[m.subject.subject_id] = m.subject;
  return out;
}

// --- scheduling --------------------------------------------------------------------

std::string make_round_id(int round_index, int group_index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "R%02d-G%d", round_index, group_index);
  return buf;
}

namespace {

bool coverable(int n, int lo, int hi) {
  if (n == 0) return true;
  for (int g = 1; g * lo <= n; ++g) {
    if (n <= g * hi) return true;
  }
  return false;
}

}  // namespace

std::vector<int> partition_sizes(int n, int min_size, int max_size) {
  if (n == 0) return {};
  const int fewest = (n + max_size - 1) / max_size;
  const int most = n / min_size;
  if (fewest > most) {
    throw Error(ErrorCode::PlanError, std::to_string(n) + " participants cannot be split into groups of " +
                                          std::to_string(min_size) + ".." + std::to_string(max_size));
  }
  const double middle = 0.5 * (min_size + max_size);
  const int groups = std::clamp(static_cast<int>(std::lround(n / middle)), fewest, most);
  std::vector<int> sizes(static_cast<std::size_t>(groups), n / groups);
  for (int i = 0; i < n % groups; ++i) ++sizes[static_cast<std::size_t>(i)];
  return sizes;
}

std::vector<GroupAssignment> schedule_rounds(const ExperimentPlan& plan,
                                             std::span<const PopulationMember> population) {
  plan.validate();
  if (static_cast<int>(population.size()) != plan.n_subjects) {
    throw Error(ErrorCode::PlanError, "population size differs from plan");
  }
  const int n = plan.n_subjects;
  const int rounds = plan.n_rounds;
  const int max_rounds = std::min(plan.max_rounds_per_subject, rounds);
  Rng rng = make_rng(plan.seed, {"schedule"});

  for (int attempt = 0; attempt < 200; ++attempt) {
    std::uniform_int_distribution<int> target_pick(plan.min_rounds_per_subject, max_rounds);
    std::vector<int> target(static_cast<std::size_t>(n)), played(static_cast<std::size_t>(n), 0);
    for (auto& t : target) t = target_pick(rng);

    std::vector<GroupAssignment> schedule;
    bool ok = true;
    for (int r = 0; r < rounds && ok; ++r) {
      const int left = rounds - r;
      std::vector<int> forced, optional;
      int remaining = 0;
      for (int s = 0; s < n; ++s) {
        const auto i = static_cast<std::size_t>(s);
        if (played[i] >= max_rounds) continue;
        if (plan.min_rounds_per_subject - played[i] >= left) {
          forced.push_back(s);
        } else {
          optional.push_back(s);
        }
        remaining += std::max(0, target[i] - played[i]);
      }
      const int lo = static_cast<int>(forced.size());
      const int hi = lo + static_cast<int>(optional.size());
      const int want = static_cast<int>(std::lround(static_cast<double>(remaining) / left));
      int m = -1;
      for (int d = 0; d <= hi; ++d) {
        for (int c : {want - d, want + d}) {
          if (m < 0 && c >= lo && c <= hi && coverable(c, plan.min_group_size, plan.max_group_size)) {
            m = c;
          }
        }
        if (m >= 0) break;
      }
      if (m < 0) {
        ok = false;
        break;
      }
      // Fill the remaining seats with the subjects furthest from their target.
      std::vector<std::pair<double, int>> ranked;
      std::uniform_real_distribution<double> jitter(0.0, 1.0);
      for (int s : optional) {
        const auto i = static_cast<std::size_t>(s);
        ranked.emplace_back(static_cast<double>(target[i] - played[i]) + jitter(rng), s);
      }
      std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
        return a.first != b.first ? a.first > b.first : a.second < b.second;
      });
      std::vector<int> chosen = forced;
      for (int k = 0; k < m - lo; ++k) chosen.push_back(ranked[static_cast<std::size_t>(k)].second);
      std::shuffle(chosen.begin(), chosen.end(), rng);

      const auto sizes = partition_sizes(m, plan.min_group_size, plan.max_group_size);
      std::size_t cursor = 0;
      for (std::size_t g = 0; g < sizes.size(); ++g) {
        GroupAssignment ga;
        ga.round_index = r + 1;
        ga.group_index = static_cast<int>(g) + 1;
        ga.round_id = make_round_id(r + 1, static_cast<int>(g) + 1);
        ga.config = plan.round_template;
        ga.config.group_size = sizes[g];
        ga.config.scenario_id =
            plan.scenario_set[static_cast<std::size_t>(r) % plan.scenario_set.size()];
        for (int k = 0; k < sizes[g]; ++k) {
          const int s = chosen[cursor++];
          ga.members.push_back(population[static_cast<std::size_t>(s)].subject.subject_id);
          ++played[static_cast<std::size_t>(s)];
        }
        schedule.push_back(std::move(ga));
      }
    }
    if (!ok) continue;
    const bool in_range = std::all_of(played.begin(), played.end(), [&](int p) {
      return p >= plan.min_rounds_per_subject && p <= max_rounds;
    });
    if (in_range) return schedule;
  }
  throw Error(ErrorCode::PlanError, "no feasible schedule for " + std::to_string(n) +
                                        " subjects over " + std::to_string(rounds) + " rounds");
}

// --- playing rounds ------------------------------------------------------------------

Rng agent_round_rng(std::uint64_t seed, const SubjectId& subject, const RoundId& round) {
  return make_rng(seed, {"agent", subject, round});
}

ThresholdAgent agent_for_round(const PopulationMember& member, const RoundConfig& config) {
  ThresholdAgent a = member.agent;
  const auto it = member.subject.importance.find(config.scenario_id);
  if (it == member.subject.importance.end()) {
    throw Error(ErrorCode::ConfigError, member.subject.subject_id + " has no importance for " + config.scenario_id);
  }
  a.importance = it->second;
  return a;
}

const GameEvent& EventLog::append(GameEvent e) {
  e.seq = next_seq();
  events_.push_back(std::move(e));
  return events_.back();
}

PlayedRound run_group_round(const GroupAssignment& group, std::span<const ThresholdAgent> agents,
                            std::uint64_t seed, EventLog& log) {
  if (agents.size() != group.members.size()) {
    throw Error(ErrorCode::ConfigError, "one agent per member required");
  }
  RoundState state = new_round(group.config, group.members, group.round_id);
  {
    GameEvent start;
    start.round_id = group.round_id;
    start.kind = EventKind::RoundStarted;
    start.members = group.members;
    start.config = group.config;
    log.append(std::move(start));
  }

  std::vector<AgentPolicy> policies;
  policies.reserve(agents.size());
  for (std::size_t i = 0; i < agents.size(); ++i) {
    policies.emplace_back(agents[i], agent_round_rng(seed, group.members[i], group.round_id),
                          group.config.group_size - 1);
  }

  std::map<std::pair<Millis, std::size_t>, int> pending;
  auto offer_all = [&](Millis now) {
    for (std::size_t i = 0; i < policies.size(); ++i) {
      if (policies[i].committed()) continue;
      if (auto s = policies[i].observe(social_info(state, group.members[i]), now)) {
        pending[{s->at_ms, i}] = s->amount;
      }
    }
  };

  offer_all(0);
  while (!pending.empty()) {
    const auto it = pending.begin();
    const auto [at, idx] = it->first;
    if (at > state.deadline_ms) break;
    GameEvent ev;
    ev.seq = log.next_seq();
    ev.at_ms = at;
    ev.round_id = group.round_id;
    ev.kind = EventKind::Contributed;
    ev.subject_id = group.members[idx];
    ev.amount = it->second;
    auto tr = apply(state, ev);
    log.append(ev);
    state = std::move(tr.state);
    if (tr.extended_to) {
      GameEvent ext;
      ext.at_ms = at;
      ext.round_id = group.round_id;
      ext.kind = EventKind::ClockExtended;
      ext.deadline_ms = *tr.extended_to;
      log.append(std::move(ext));
    }
    pending.erase(it);
    offer_all(at);
  }

  PlayedRound out;
  out.outcome = close_and_settle(state, state.deadline_ms);
  state.phase = Phase::Closed;
  GameEvent end;
  end.at_ms = state.deadline_ms;
  end.round_id = group.round_id;
  end.kind = EventKind::RoundEnded;
  end.total = out.outcome.total;
  end.funded = out.outcome.funded;
  log.append(std::move(end));
  out.state = std::move(state);
  return out;
}

std::vector<SubjectRoundRecord> records_for_round(const RoundState& state, const RoundOutcome& outcome,
                                                  const std::map<SubjectId, Subject>& subjects) {
  std::map<SubjectId, int> amounts;
  for (const auto& c : state.contributions) amounts[c.subject_id] = c.amount;
  int first = 0;
  for (const auto& [id, rank] : outcome.ranks) {
    if (rank == 1) first = amounts.at(id);
  }
  std::vector<SubjectRoundRecord> out;
  for (const auto& m : state.members) {
    SubjectRoundRecord r;
    r.subject_id = m;
    r.round_id = state.round_id;
    r.group_size = state.config.group_size;
    if (const auto it = outcome.ranks.find(m); it != outcome.ranks.end()) r.rank = it->second;
    if (const auto it = amounts.find(m); it != amounts.end()) r.amount = it->second;
    r.funded = outcome.funded;
    r.first_contribution_amount = first;
    if (const auto s = subjects.find(m); s != subjects.end()) {
      if (const auto imp = s->second.importance.find(state.config.scenario_id);
          imp != s->second.importance.end()) {
        r.importance = imp->second;
      }
    }
    out.push_back(std::move(r));
  }
  return out;
}

ExperimentResult run_experiment(const ExperimentPlan& plan,
                                std::span<const PopulationMember> population) {
  ExperimentResult result;
  result.schedule = schedule_rounds(plan, population);
  const auto subjects = subjects_by_id(population);
  std::map<SubjectId, const PopulationMember*> lookup;
  for (const auto& m : population) lookup[m.subject.subject_id] = &m;

  EventLog log;
  for (const auto& group : result.schedule) {
    std::vector<ThresholdAgent> agents;
    for (const auto& id : group.members) agents.push_back(agent_for_round(*lookup.at(id), group.config));
    auto played = run_group_round(group, agents, plan.seed, log);
    auto rows = records_for_round(played.state, played.outcome, subjects);
    result.records.insert(result.records.end(), rows.begin(), rows.end());
    result.outcomes.push_back(std::move(played.outcome));
  }
  result.events = log.events();
  return result;
}

std::vector<SubjectRoundRecord> records_from_log(std::span<const GameEvent> events,
                                                 const std::map<SubjectId, Subject>& subjects) {
  const auto rep = replay(events);
  std::vector<SubjectRoundRecord> out;
  for (const auto& o : rep.outcomes) {
    auto rows = records_for_round(rep.settled.at(o.round_id), o, subjects);
    out.insert(out.end(), rows.begin(), rows.end());
  }
  return out;
}

// --- file formats ------------------------------------------------------------------

std::string events_to_jsonl(std::span<const GameEvent> events) {
  std::string out;
  for (const auto& e : events) {
    out += to_jsonl(e);
    out.push_back('\n');
  }
  return out;
}

namespace {
const std::vector<std::string> kRecordColumns = {
    "subject_id", "round_id", "group_size", "rank", "amount", "funded",
    "first_contribution_amount", "importance"};

const std::vector<std::string> kPopulationColumns = {
    "subject_id", "kind", "extraversion", "agreeableness", "conscientiousness",
    "emotional_stability", "openness", "rotter_internal", "svo", "threshold", "never_start",
    "contribution_amount"};
}  // namespace

std::string records_csv(std::span<const SubjectRoundRecord> records) {
  CsvTable t;
  t.header = kRecordColumns;
  for (const auto& r : records) {
    t.rows.push_back({r.subject_id, r.round_id, std::to_string(r.group_size),
                      r.rank ? std::to_string(*r.rank) : "", std::to_string(r.amount),
                      r.funded ? "1" : "0", std::to_string(r.first_contribution_amount),
                      format_optional(r.importance)});
  }
  return write_csv(t);
}

std::vector<SubjectRoundRecord> parse_records_csv(const std::string& text) {
  const auto t = parse_csv(text);
  if (t.header.empty()) throw Error(ErrorCode::NoData, "records file is empty");
  std::vector<std::size_t> idx;
  for (const auto& c : kRecordColumns) idx.push_back(t.column(c));
  std::vector<SubjectRoundRecord> out;
  for (const auto& row : t.rows) {
    SubjectRoundRecord r;
    r.subject_id = row[idx[0]];
    r.round_id = row[idx[1]];
    r.group_size = parse_int(row[idx[2]], "group_size");
    if (!row[idx[3]].empty()) r.rank = parse_int(row[idx[3]], "rank");
    r.amount = parse_int(row[idx[4]], "amount");
    const auto& funded = row[idx[5]];
    if (funded != "0" && funded != "1") {
      throw Error(ErrorCode::SchemaError, "column 'funded': expected 0 or 1");
    }
    r.funded = funded == "1";
    r.first_contribution_amount = parse_int(row[idx[6]], "first_contribution_amount");
    r.importance = parse_optional_number(row[idx[7]], "importance");
    r.validate();
    out.push_back(std::move(r));
  }
  return out;
}

std::string population_csv(std::span<const PopulationMember> population) {
  CsvTable t;
  t.header = kPopulationColumns;
  for (const auto& m : population) {
    std::vector<std::string> row{m.subject.subject_id,
                                 m.subject.kind == SubjectKind::Human ? "Human" : "Bot"};
    if (m.subject.profile) {
      const auto& p = *m.subject.profile;
      for (double v : {p.extraversion, p.agreeableness, p.conscientiousness, p.emotional_stability,
                       p.openness, p.rotter_internal}) {
        row.push_back(format_number(v));
      }
      row.emplace_back(to_string(p.svo));
    } else {
      row.insert(row.end(), 7, "");
    }
    if (m.subject.kind == SubjectKind::Bot) {
      row.push_back(std::to_string(m.agent.threshold));
      row.push_back(m.agent.never_start ? "1" : "0");
      row.push_back(std::to_string(m.agent.contribution_amount));
    } else {
      row.insert(row.end(), 3, "");
    }
    t.rows.push_back(std::move(row));
  }
  return write_csv(t);
}

std::vector<Subject> parse_population_csv(const std::string& text) {
  const auto t = parse_csv(text);
  if (t.header.empty()) throw Error(ErrorCode::NoData, "population file is empty");
  const std::vector<std::string> needed = {"subject_id", "extraversion", "agreeableness",
                                           "conscientiousness", "emotional_stability", "openness",
                                           "rotter_internal", "svo"};
  std::vector<std::size_t> idx;
  for (const auto& c : needed) idx.push_back(t.column(c));
  std::vector<Subject> out;
  for (const auto& row : t.rows) {
    Subject s;
    s.subject_id = row[idx[0]];
    bool complete = true;
    for (std::size_t k = 1; k < idx.size(); ++k) complete = complete && !row[idx[k]].empty();
    if (complete) {
      PersonalityProfile p;
      p.extraversion = parse_number(row[idx[1]], needed[1]);
      p.agreeableness = parse_number(row[idx[2]], needed[2]);
      p.conscientiousness = parse_number(row[idx[3]], needed[3]);
      p.emotional_stability = parse_number(row[idx[4]], needed[4]);
      p.openness = parse_number(row[idx[5]], needed[5]);
      p.rotter_internal = parse_number(row[idx[6]], needed[6]);
      p.svo = svo_from_string(row[idx[7]]);
      p.validate();
      s.profile = p;
    }
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace ctlab
