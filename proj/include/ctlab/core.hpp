#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace ctlab {

using Json = nlohmann::ordered_json;
using SubjectId = std::string;
using RoundId = std::string;
using ScenarioId = std::string;
using Millis = std::int64_t;

enum class ErrorCode {
  ConfigError,
  DuplicateAction,
  RoundClosed,
  InvalidAmount,
  NotAMember,
  NotYetClosed,
  InvalidEvent,
  NoRounds,
  InvalidCurve,
  InvalidResponse,
  NoData,
  Singular,
  Degenerate,
  Separation,
  ConstantColumn,
  ZeroVariance,
  InsufficientData,
  PlanError,
  CorruptLog,
  ProtocolError,
  SchemaError,
};

std::string_view to_string(ErrorCode code);

/// Every failure in the library surfaces as this exception; `code()` is the
/// machine-readable reason that the server maps onto wire Error messages.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& detail);
  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

enum class Svo { ProSelf, ProSocial, Unclassified };
enum class SubjectKind { Human, Bot };

std::string_view to_string(Svo svo);
Svo svo_from_string(std::string_view s);

struct PersonalityProfile {
  double extraversion = 4.0;
  double agreeableness = 4.0;
  double conscientiousness = 4.0;
  double emotional_stability = 4.0;
  double openness = 4.0;
  double rotter_internal = 0.5;
  Svo svo = Svo::Unclassified;

  void validate() const;
  bool operator==(const PersonalityProfile&) const = default;
};

struct Subject {
  SubjectId subject_id;
  std::optional<PersonalityProfile> profile;
  std::map<ScenarioId, double> importance;
  SubjectKind kind = SubjectKind::Bot;

  void validate() const;
  bool operator==(const Subject&) const = default;
};

/// Normalizes a 1..5 importance rating onto [0,1].
double normalize_importance(int raw_rating);

struct RoundConfig {
  int group_size = 8;
  int endowment = 10;
  double provision_fraction = 0.6;
  Millis base_duration_ms = 50'000;
  Millis extension_window_ms = 5'000;
  Millis extension_amount_ms = 5'000;
  Millis max_duration_ms = 120'000;
  int funded_bonus = 15;
  ScenarioId scenario_id = "S1";

  void validate() const;
  bool operator==(const RoundConfig&) const = default;
};

/// Tokens the group must reach for the bonus to be paid.
int provision_point(const RoundConfig& config);

enum class EventKind { RoundStarted, Contributed, Passed, ClockExtended, RoundEnded };

std::string_view to_string(EventKind kind);
EventKind event_kind_from_string(std::string_view s);

/// One line of the canonical session log.
///
/// The contract fields are seq, at_ms, round_id, kind, subject_id and amount.
/// RoundStarted additionally carries the round's members and config so that a
/// log is self-contained for replay; ClockExtended carries the new deadline and
/// RoundEnded carries total/funded so replay can cross-check settlement.
struct GameEvent {
  std::int64_t seq = 0;
  Millis at_ms = 0;
  RoundId round_id;
  EventKind kind = EventKind::RoundStarted;
  std::optional<SubjectId> subject_id;
  std::optional<int> amount;
  std::optional<std::vector<SubjectId>> members;
  std::optional<RoundConfig> config;
  std::optional<int> total;
  std::optional<bool> funded;
  std::optional<Millis> deadline_ms;  // ClockExtended: the new deadline

  bool operator==(const GameEvent&) const = default;
};

struct SubjectRoundRecord {
  SubjectId subject_id;
  RoundId round_id;
  int group_size = 0;
  std::optional<int> rank;
  int amount = 0;
  bool funded = false;
  int first_contribution_amount = 0;
  std::optional<double> importance;

  void validate() const;
  bool operator==(const SubjectRoundRecord&) const = default;
};

void to_json(Json& j, const PersonalityProfile& p);
void from_json(const Json& j, PersonalityProfile& p);
void to_json(Json& j, const Subject& s);
void from_json(const Json& j, Subject& s);
void to_json(Json& j, const RoundConfig& c);
void from_json(const Json& j, RoundConfig& c);
void to_json(Json& j, const GameEvent& e);
void from_json(const Json& j, GameEvent& e);
void to_json(Json& j, const SubjectRoundRecord& r);
void from_json(const Json& j, SubjectRoundRecord& r);

/// Serializes one event as a single JSON Lines record (no trailing newline).
std::string to_jsonl(const GameEvent& event);
GameEvent parse_event_line(std::string_view line);

}  // namespace ctlab
