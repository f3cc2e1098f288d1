#pragma once

#include <functional>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "ctlab/core.hpp"
#include "ctlab/engine.hpp"
#include "ctlab/protocol.hpp"
#include "ctlab/simulation.hpp"

namespace ctlab {

enum class SessionPhase { Lobby, InRound, BetweenRounds, Questionnaire, Done };
std::string_view to_string(SessionPhase p);

/// Wall: rounds run against the server clock and contributions land when they
/// arrive. Lockstep: the round clock only advances once every connected,
/// undecided member has answered the latest view (Contribute with at_ms, Pass
/// or Ready), which makes remote bot sessions reproduce the simulator exactly.
enum class ClockMode { Wall, Lockstep };
std::string_view to_string(ClockMode m);
ClockMode clock_mode_from_string(std::string_view s);

struct SessionOptions {
  ClockMode clock = ClockMode::Wall;
  /// The last `server_bots` subjects of the population are played in-process;
  /// the rest receive join tokens.
  int server_bots = 0;
  /// Pause between rounds on the wall clock.
  Millis inter_round_ms = 3000;
  bool questionnaires = true;
};

void to_json(Json& j, const SessionOptions& o);
void from_json(const Json& j, SessionOptions& o);

struct Outbound {
  SubjectId to;
  Json message;
  bool close = false;
};

struct QuestionnaireRow {
  SubjectId subject_id;
  std::string instrument;
  Json payload;
};

inline const std::vector<std::string> kInstrumentOrder = {"tipi", "rotter", "svo"};

/// One live session: roster, schedule, the groups currently playing and the
/// append-only log. Not thread-safe; the server serializes every call.
///
/// `now` arguments are milliseconds on the session clock. Lockstep sessions
/// ignore them.
class Session {
 public:
  using EventSink = std::function<void(const GameEvent&)>;
  using AnswerSink = std::function<void(const QuestionnaireRow&)>;

  Session(std::string session_id, ExperimentPlan plan, SessionOptions options,
          std::map<std::string, SubjectId> tokens);

  /// Resumes from a persisted log. Settled rounds are kept; any round the log
  /// leaves open is voided and played again under the same id. The session
  /// returns to the lobby until the remote subjects rejoin or start() is called.
  void restore(std::span<const GameEvent> events, std::span<const QuestionnaireRow> answers);

  void set_sinks(EventSink events, AnswerSink answers);

  struct JoinResult {
    SubjectId subject_id;
    std::vector<Outbound> out;
  };
  /// ProtocolError for an unknown token.
  JoinResult join(const std::string& token, Millis now);
  std::vector<Outbound> disconnect(const SubjectId& subject, Millis now);
  /// Rejections come back as an Error message to the sender; ProtocolError
  /// additionally closes the connection.
  std::vector<Outbound> handle(const SubjectId& subject, const ClientMessage& msg, Millis now);
  /// Error{ProtocolError} for a message that could not be parsed; closes.
  std::vector<Outbound> reject(const SubjectId& subject, std::string_view detail);
  /// Leaves the lobby even if some remote subjects never joined.
  std::vector<Outbound> start(Millis now);
  /// Fires due bot contributions, deadlines and between-round pauses.
  std::vector<Outbound> advance(Millis now);
  /// Session time of the next timer, if any.
  std::optional<Millis> next_wakeup() const;

  const std::string& id() const { return id_; }
  SessionPhase phase() const { return phase_; }
  ClockMode clock() const { return options_.clock; }
  const ExperimentPlan& plan() const { return plan_; }
  const SessionOptions& options() const { return options_; }
  const std::map<std::string, SubjectId>& tokens() const { return tokens_; }
  const std::vector<GameEvent>& events() const { return log_.events(); }
  const std::vector<GroupAssignment>& schedule() const { return schedule_; }
  std::vector<RoundOutcome> outcomes() const;
  std::string records_csv() const;
  /// Generated population; remote subjects carry their questionnaire scores,
  /// or no profile until they have completed all three instruments.
  std::string population_csv() const;
  Json status() const;

 private:
  struct GroupRun {
    GroupAssignment group;
    RoundState state;
    Millis start = 0;
    Millis now = 0;
    std::vector<std::optional<AgentPolicy>> bots;
    std::map<std::pair<Millis, std::size_t>, int> pending;
    std::set<std::size_t> scheduled;
    std::set<std::size_t> awaiting;
    bool closed = false;
  };

  bool is_remote(const SubjectId& s) const { return remote_.contains(s); }
  bool connected(const SubjectId& s) const;
  void emit(std::vector<Outbound>& out, const SubjectId& to, Json msg, bool close = false);
  const GameEvent& log(GameEvent e);

  void start_next(Millis now, std::vector<Outbound>& out);
  void begin_group(const GroupAssignment& g, Millis now, std::vector<Outbound>& out);
  void offer(GroupRun& run, std::vector<Outbound>& out);
  void contribute(GroupRun& run, std::size_t idx, int amount, Millis at, std::vector<Outbound>& out);
  void close_run(GroupRun& run, std::vector<Outbound>& out);
  void after_runs(Millis now, std::vector<Outbound>& out);
  void pump(Millis now, std::vector<Outbound>& out);
  void fire_due(Millis now, std::vector<Outbound>& out);
  void finish_rounds(std::vector<Outbound>& out);
  void prompt_or_pay(const SubjectId& s, std::vector<Outbound>& out);
  void check_done();
  GroupRun* run_of(const SubjectId& s, std::size_t* idx);

  void on_contribute(const SubjectId& s, const ContributeMsg& m, Millis now, std::vector<Outbound>& out);
  void on_pass(const SubjectId& s, const PassMsg& m, Millis now, std::vector<Outbound>& out);
  void on_ready(const SubjectId& s, const ReadyMsg& m, Millis now, std::vector<Outbound>& out);
  void on_answer(const SubjectId& s, const QuestionnaireAnswerMsg& m, std::vector<Outbound>& out);

  std::string id_;
  ExperimentPlan plan_;
  SessionOptions options_;
  std::map<std::string, SubjectId> tokens_;
  std::vector<PopulationMember> population_;
  std::map<SubjectId, std::size_t> member_index_;
  std::set<SubjectId> remote_;
  std::vector<GroupAssignment> schedule_;

  SessionPhase phase_ = SessionPhase::Lobby;
  std::map<SubjectId, bool> online_;
  std::set<SubjectId> joined_;
  std::map<SubjectId, std::int64_t> out_seq_;

  EventLog log_;
  EventSink event_sink_;
  AnswerSink answer_sink_;

  std::size_t next_group_ = 0;
  std::vector<GroupRun> active_;
  std::optional<Millis> resume_at_;
  std::set<RoundId> settled_ids_;
  std::vector<PlayedRound> settled_;
  std::vector<RoundId> voided_;

  std::map<SubjectId, PersonalityProfile> answered_profiles_;
  std::map<SubjectId, std::set<std::string>> answered_;
  std::set<SubjectId> paid_;
};

}  // namespace ctlab
