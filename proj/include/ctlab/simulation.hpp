#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "ctlab/core.hpp"
#include "ctlab/dynamics.hpp"
#include "ctlab/engine.hpp"

namespace ctlab {

struct SvoShares {
  double pro_social = 0.50;
  double pro_self = 0.42;
  double unclassified = 0.08;
};

struct ExperimentPlan {
  int n_subjects = 186;
  int n_rounds = 28;
  int min_rounds_per_subject = 7;
  int max_rounds_per_subject = 14;
  int min_group_size = 7;
  int max_group_size = 10;
  std::uint64_t seed = 1;
  std::vector<ScenarioId> scenario_set = {"S1", "S2", "S3", "S4", "S5", "S6", "S7"};
  MappingParams mapping;
  SvoShares svo_shares;
  /// Per-agent contribution amount ~ round(Normal(mean, sd)) clamped to 1..endowment.
  double amount_mean = 10.7;
  double amount_sd = 1.5;
  /// Template for every round; group_size and scenario are filled per round.
  RoundConfig round_template;

  void validate() const;
};

void to_json(Json& j, const ExperimentPlan& p);
void from_json(const Json& j, ExperimentPlan& p);
ExperimentPlan load_plan(const std::string& path);

struct PopulationMember {
  Subject subject;
  ThresholdAgent agent;
};

std::vector<PopulationMember> generate_population(const ExperimentPlan& plan);

/// One group playing one round.
struct GroupAssignment {
  int round_index = 0;  // 1-based
  int group_index = 0;  // 1-based
  RoundId round_id;
  RoundConfig config;
  std::vector<SubjectId> members;
};

std::string make_round_id(int round_index, int group_index);

/// Which subjects play in each round and how they are grouped. Every subject
/// plays between min and max rounds; every round's participants are split into
/// groups with sizes in range.
std::vector<GroupAssignment> schedule_rounds(const ExperimentPlan& plan,
                                             std::span<const PopulationMember> population);

/// Splits `n` participants into near-equal groups within [min_size, max_size],
/// using the group count whose sizes sit closest to the middle of the range.
/// PlanError when impossible.
std::vector<int> partition_sizes(int n, int min_size, int max_size);

/// Per-(subject, round) decision stream shared by the simulator, the
/// server-side bots and remote bot clients.
Rng agent_round_rng(std::uint64_t seed, const SubjectId& subject, const RoundId& round);

/// The member's agent with its importance set for the round's scenario.
ThresholdAgent agent_for_round(const PopulationMember& member, const RoundConfig& config);

/// Sequence-number source for one session log.
class EventLog {
 public:
  EventLog() = default;
  /// Continues an existing log; `events` must already be numbered 1..n.
  explicit EventLog(std::vector<GameEvent> events) : events_(std::move(events)) {}

  std::int64_t next_seq() const { return static_cast<std::int64_t>(events_.size()) + 1; }
  const GameEvent& append(GameEvent e);
  const std::vector<GameEvent>& events() const { return events_; }

 private:
  std::vector<GameEvent> events_;
};

struct PlayedRound {
  RoundState state;
  RoundOutcome outcome;
};

/// Plays one group round with in-process agents on a logical clock. Pending
/// contributions are ordered by (time, member position) so every runner of the
/// same agents produces the same event order.
PlayedRound run_group_round(const GroupAssignment& group, std::span<const ThresholdAgent> agents,
                            std::uint64_t seed, EventLog& log);

/// Analysis rows for every member of a settled round.
std::vector<SubjectRoundRecord> records_for_round(const RoundState& state, const RoundOutcome& outcome,
                                                  const std::map<SubjectId, Subject>& subjects);

struct ExperimentResult {
  std::vector<GroupAssignment> schedule;
  std::vector<GameEvent> events;
  std::vector<RoundOutcome> outcomes;
  std::vector<SubjectRoundRecord> records;
};

ExperimentResult run_experiment(const ExperimentPlan& plan,
                                std::span<const PopulationMember> population);

/// Records re-derived from a log alone (plus subject importance).
std::vector<SubjectRoundRecord> records_from_log(std::span<const GameEvent> events,
                                                 const std::map<SubjectId, Subject>& subjects);

std::map<SubjectId, Subject> subjects_by_id(std::span<const PopulationMember> population);

// --- file formats ------------------------------------------------------------

std::string events_to_jsonl(std::span<const GameEvent> events);
std::string records_csv(std::span<const SubjectRoundRecord> records);
std::vector<SubjectRoundRecord> parse_records_csv(const std::string& text);
std::string population_csv(std::span<const PopulationMember> population);

/// Subject profiles from population.csv; rows with blank personality cells
/// yield subjects without a profile.
std::vector<Subject> parse_population_csv(const std::string& text);

}  // namespace ctlab
