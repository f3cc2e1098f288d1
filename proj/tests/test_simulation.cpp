#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "ctlab/csv.hpp"
#include "ctlab/replay.hpp"
#include "ctlab/simulation.hpp"
#include "oracles.hpp"

using namespace ctlab;

namespace {

void expect_code(ErrorCode code, auto&& fn) {
  try {
    fn();
    ADD_FAILURE() << "no error, expected " << to_string(code);
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), code) << e.what();
  }
}

ExperimentResult run(std::uint64_t seed) {
  ExperimentPlan plan;
  plan.seed = seed;
  return run_experiment(plan, generate_population(plan));
}

// One-sided Mann-Whitney p-value that values in `a` tend to exceed `b`.
double mann_whitney_greater(const std::vector<double>& a, const std::vector<double>& b) {
  double u = 0;
  for (double x : a) {
    for (double y : b) u += x > y ? 1.0 : (x == y ? 0.5 : 0.0);
  }
  const double n1 = static_cast<double>(a.size()), n2 = static_cast<double>(b.size());
  const double mu = n1 * n2 / 2, sd = std::sqrt(n1 * n2 * (n1 + n2 + 1) / 12);
  return 0.5 * std::erfc((u - mu) / sd / std::sqrt(2.0));
}

}  // namespace

TEST(CoreJson, RoundTrips) {
  PersonalityProfile p{6.5, 2.0, 3.5, 4.0, 1.0, 0.3, Svo::ProSocial};
  EXPECT_EQ(Json(p).get<PersonalityProfile>(), p);
  Subject s{"s1", p, {{"S1", 0.75}}, SubjectKind::Human};
  EXPECT_EQ(Json(s).get<Subject>(), s);
  Subject blank{"s2", std::nullopt, {}, SubjectKind::Bot};
  EXPECT_EQ(Json(blank).get<Subject>(), blank);
  RoundConfig c;
  c.group_size = 9;
  c.scenario_id = "S4";
  EXPECT_EQ(Json(c).get<RoundConfig>(), c);
  SubjectRoundRecord r{"s1", "R01-G1", 8, 3, 7, true, 10, 0.5};
  EXPECT_EQ(Json(r).get<SubjectRoundRecord>(), r);
  const auto result = run(3);
  for (const auto& e : result.events) EXPECT_EQ(parse_event_line(to_jsonl(e)), e);
}

TEST(CoreJson, EventContractFields) {
  GameEvent e;
  e.seq = 7;
  e.at_ms = 1234;
  e.round_id = "R01-G2";
  e.kind = EventKind::Contributed;
  e.subject_id = "s3";
  e.amount = 4;
  EXPECT_EQ(to_jsonl(e), R"({"seq":7,"at_ms":1234,"round_id":"R01-G2","kind":"Contributed","subject_id":"s3","amount":4})");
}

TEST(CoreModel, Validation) {
  PersonalityProfile p;
  p.extraversion = 7.5;
  EXPECT_THROW(p.validate(), Error);
  RoundConfig c;
  c.funded_bonus = 10;
  expect_code(ErrorCode::ConfigError, [&] { c.validate(); });
  c = RoundConfig{};
  c.group_size = 11;
  expect_code(ErrorCode::ConfigError, [&] { c.validate(); });
  EXPECT_DOUBLE_EQ(normalize_importance(1), 0.0);
  EXPECT_DOUBLE_EQ(normalize_importance(4), 0.75);
  EXPECT_THROW(normalize_importance(6), Error);
  SubjectRoundRecord r{"s", "R", 8, std::nullopt, 3, false, 0, std::nullopt};
  EXPECT_THROW(r.validate(), Error);
}

TEST(Population, DeterministicAndPlausible) {
  ExperimentPlan plan;
  plan.seed = 5;
  const auto a = generate_population(plan);
  const auto b = generate_population(plan);
  ASSERT_EQ(a.size(), 186u);
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].subject, b[i].subject);
    EXPECT_EQ(a[i].agent, b[i].agent);
    EXPECT_NO_THROW(a[i].subject.validate());
    EXPECT_GE(a[i].agent.threshold, 0);
    EXPECT_LE(a[i].agent.threshold, plan.max_group_size - 1);
    EXPECT_EQ(a[i].subject.importance.size(), plan.scenario_set.size());
  }
}

TEST(Population, BlindMappingIsConstant) {
  ExperimentPlan plan;
  plan.mapping.a = 2.0;
  plan.mapping = plan.mapping.personality_blind();
  plan.mapping.noise_sd = 0.0;
  for (const auto& m : generate_population(plan)) EXPECT_EQ(m.agent.threshold, 2);
}

TEST(Population, ExtraversionLowersThreshold) {
  ExperimentPlan plan;
  plan.n_subjects = 10'000;
  const auto pop = generate_population(plan);
  std::vector<double> e, t;
  for (const auto& m : pop) {
    e.push_back(m.subject.profile->extraversion);
    t.push_back(m.agent.threshold);
  }
  const double n = static_cast<double>(e.size());
  const double me = std::accumulate(e.begin(), e.end(), 0.0) / n, mt = std::accumulate(t.begin(), t.end(), 0.0) / n;
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < e.size(); ++i) {
    sxy += (e[i] - me) * (t[i] - mt);
    sxx += (e[i] - me) * (e[i] - me);
    syy += (t[i] - mt) * (t[i] - mt);
  }
  EXPECT_LT(sxy / std::sqrt(sxx * syy), -0.3);
}

TEST(Schedule, DefaultsCoverRange) {
  ExperimentPlan plan;
  plan.seed = 9;
  const auto pop = generate_population(plan);
  const auto sched = schedule_rounds(plan, pop);
  std::map<SubjectId, int> played;
  std::map<int, std::set<SubjectId>> per_round;
  std::set<int> rounds;
  for (const auto& g : sched) {
    rounds.insert(g.round_index);
    EXPECT_GE(g.config.group_size, 7);
    EXPECT_LE(g.config.group_size, 10);
    EXPECT_EQ(static_cast<int>(g.members.size()), g.config.group_size);
    for (const auto& m : g.members) {
      EXPECT_TRUE(per_round[g.round_index].insert(m).second) << "subject twice in round " << g.round_index;
      ++played[m];
    }
  }
  EXPECT_EQ(rounds.size(), 28u);
  EXPECT_EQ(played.size(), 186u);
  for (const auto& [id, n] : played) {
    EXPECT_GE(n, 7) << id;
    EXPECT_LE(n, 14) << id;
  }
}

TEST(Schedule, FixedGroupsOfEight) {
  ExperimentPlan plan;
  plan.n_subjects = 16;
  plan.n_rounds = 5;
  plan.min_group_size = plan.max_group_size = 8;
  plan.min_rounds_per_subject = plan.max_rounds_per_subject = 5;
  const auto sched = schedule_rounds(plan, generate_population(plan));
  ASSERT_EQ(sched.size(), 10u);
  for (const auto& g : sched) EXPECT_EQ(g.members.size(), 8u);
}

TEST(Schedule, Infeasible) {
  EXPECT_THROW(partition_sizes(11, 7, 10), Error);
  EXPECT_EQ(partition_sizes(17, 7, 10), (std::vector<int>{9, 8}));
  EXPECT_EQ(partition_sizes(0, 7, 10), std::vector<int>{});
  ExperimentPlan plan;
  plan.n_subjects = 3;
  expect_code(ErrorCode::PlanError, [&] { plan.validate(); });
  plan = ExperimentPlan{};
  plan.min_group_size = 6;
  expect_code(ErrorCode::PlanError, [&] { plan.validate(); });
}

TEST(Plan, JsonRoundTrip) {
  ExperimentPlan plan;
  plan.seed = 99;
  plan.mapping.b_E = 4.25;
  plan.scenario_set = {"A", "B"};
  const Json j = plan;
  const auto back = j.get<ExperimentPlan>();
  EXPECT_EQ(Json(back), j);
  EXPECT_EQ(Json::object().get<ExperimentPlan>().n_subjects, 186);
}

TEST(Experiment, DefaultsAndDeterminism) {
  const auto a = run(21);
  const auto b = run(21);
  EXPECT_EQ(events_to_jsonl(a.events), events_to_jsonl(b.events));
  EXPECT_EQ(a.records, b.records);
  std::set<int> rounds;
  for (const auto& g : a.schedule) rounds.insert(g.round_index);
  EXPECT_EQ(rounds.size(), 28u);
  EXPECT_NE(events_to_jsonl(run(22).events), events_to_jsonl(a.events));
}

TEST(Experiment, ReplayIsByteIdentical) {
  const auto a = run(4);
  const auto text = events_to_jsonl(a.events);
  const auto replayed = replay(parse_event_log(text));
  EXPECT_EQ(outcomes_to_jsonl(replayed.outcomes), outcomes_to_jsonl(a.outcomes));
  EXPECT_TRUE(replayed.voided.empty());
  EXPECT_EQ(replayed.last_seq, static_cast<std::int64_t>(a.events.size()));
}

TEST(Experiment, RecordsFromLogMatchOnline) {
  ExperimentPlan plan;
  plan.seed = 8;
  const auto pop = generate_population(plan);
  const auto res = run_experiment(plan, pop);
  EXPECT_EQ(records_from_log(res.events, subjects_by_id(pop)), res.records);
  for (const auto& r : res.records) EXPECT_NO_THROW(r.validate());
}

TEST(Experiment, RecordsCsvRoundTrip) {
  ExperimentPlan plan;
  plan.seed = 2;
  const auto pop = generate_population(plan);
  const auto res = run_experiment(plan, pop);
  EXPECT_EQ(parse_records_csv(records_csv(res.records)), res.records);
  const auto subjects = parse_population_csv(population_csv(pop));
  ASSERT_EQ(subjects.size(), pop.size());
  for (std::size_t i = 0; i < pop.size(); ++i) {
    EXPECT_EQ(subjects[i].subject_id, pop[i].subject.subject_id);
    EXPECT_NEAR(subjects[i].profile->extraversion, pop[i].subject.profile->extraversion, 1e-12);
    EXPECT_EQ(subjects[i].profile->svo, pop[i].subject.profile->svo);
  }
}

TEST(Experiment, MinExtraversionHigherInFundedRounds) {
  ExperimentPlan plan;
  plan.seed = 31;
  const auto pop = generate_population(plan);
  const auto res = run_experiment(plan, pop);
  std::map<SubjectId, double> e;
  for (const auto& m : pop) e[m.subject.subject_id] = m.subject.profile->extraversion;
  std::map<RoundId, bool> funded;
  for (const auto& o : res.outcomes) funded[o.round_id] = o.funded;
  std::vector<double> yes, no;
  for (const auto& g : res.schedule) {
    double lo = 8;
    for (const auto& m : g.members) lo = std::min(lo, e[m]);
    (funded.at(g.round_id) ? yes : no).push_back(lo);
  }
  ASSERT_GE(yes.size() + no.size(), 200u);
  EXPECT_LT(mann_whitney_greater(yes, no), 0.05);
}

TEST(Replay, EmptyLog) {
  const auto r = replay(std::vector<GameEvent>{});
  EXPECT_TRUE(r.outcomes.empty());
  EXPECT_EQ(outcomes_to_jsonl(r.outcomes), "");
}

TEST(Replay, DeletedLineIsCorrupt) {
  auto events = run(6).events;
  for (std::size_t cut : {std::size_t{0}, std::size_t{5}, events.size() / 2}) {
    auto broken = events;
    broken.erase(broken.begin() + static_cast<std::ptrdiff_t>(cut));
    try {
      replay(broken);
      ADD_FAILURE() << "replay accepted a log with line " << cut << " removed";
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), ErrorCode::CorruptLog);
      EXPECT_NE(std::string(e.what()).find("seq " + std::to_string(broken[cut].seq)), std::string::npos) << e.what();
    }
  }
}

TEST(Replay, TamperedTotalIsCorrupt) {
  auto events = run(6).events;
  for (auto& e : events) {
    if (e.kind == EventKind::RoundEnded) {
      *e.total += 1;
      break;
    }
  }
  EXPECT_THROW(replay(events), Error);
}

TEST(Replay, UnfinishedRoundIsVoided) {
  auto events = run(6).events;
  std::size_t last_end = 0;
  for (std::size_t i = 0; i < events.size(); ++i) {
    if (events[i].kind == EventKind::RoundEnded) last_end = i;
  }
  // Drop the final RoundEnded: that round never settled.
  events.resize(last_end);
  const auto r = replay(events);
  ASSERT_EQ(r.voided.size(), 1u);
  EXPECT_EQ(r.open.size(), 1u);
  EXPECT_FALSE(std::any_of(r.outcomes.begin(), r.outcomes.end(),
                           [&](const RoundOutcome& o) { return o.round_id == r.voided[0]; }));
}

TEST(Replay, RestartedRoundReplacesAttempt) {
  EventLog log;
  GroupAssignment g;
  g.round_index = 1;
  g.group_index = 1;
  g.round_id = "R01-G1";
  g.config.group_size = 7;
  std::vector<ThresholdAgent> agents;
  for (int i = 0; i < 7; ++i) {
    ThresholdAgent a;
    a.subject_id = "s" + std::to_string(i);
    a.threshold = i;
    g.members.push_back(a.subject_id);
    agents.push_back(a);
  }
  GameEvent start;
  start.kind = EventKind::RoundStarted;
  start.round_id = g.round_id;
  start.members = g.members;
  start.config = g.config;
  log.append(start);
  GameEvent c;
  c.kind = EventKind::Contributed;
  c.round_id = g.round_id;
  c.subject_id = "s6";
  c.amount = 10;
  c.at_ms = 100;
  log.append(c);
  const auto played = run_group_round(g, agents, 1, log);
  const auto r = replay(log.events());
  ASSERT_EQ(r.outcomes.size(), 1u);
  EXPECT_EQ(r.outcomes[0], played.outcome);
  EXPECT_EQ(r.voided, std::vector<RoundId>{"R01-G1"});
}

TEST(DataFiles, DefaultPlanMatchesCompiledDefaults) {
  const auto j = Json::parse(read_file(std::string(CTLAB_DATA_DIR) + "/default_plan.json"));
  EXPECT_EQ(Json(j.get<ExperimentPlan>()), Json(ExperimentPlan{}));
  EXPECT_EQ(j, Json(ExperimentPlan{}));
}
