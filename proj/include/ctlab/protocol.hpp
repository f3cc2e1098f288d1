#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <variant>

#include "ctlab/core.hpp"

namespace ctlab {

// Client -> server.

struct JoinMsg {
  std::string token;
};

/// `at_ms` is required in lockstep sessions (the round-relative time the
/// contribution is scheduled for) and ignored on the wall clock.
struct ContributeMsg {
  RoundId round_id;
  int amount = 0;
  std::optional<Millis> at_ms;
};

struct PassMsg {
  RoundId round_id;
};

/// Lockstep only: the client has seen the latest view and has nothing to
/// schedule.
struct ReadyMsg {
  RoundId round_id;
};

struct QuestionnaireAnswerMsg {
  std::string instrument;
  Json payload;
};

using ClientMessage = std::variant<JoinMsg, ContributeMsg, PassMsg, ReadyMsg, QuestionnaireAnswerMsg>;

/// ProtocolError on invalid JSON, an unknown "type" or missing/mistyped fields.
ClientMessage parse_client_message(std::string_view text);
Json to_json(const ClientMessage& msg);

// Server -> client. Builders leave out session_id and seq; the session
// stamps both when it addresses the message.

Json welcome_msg(const SubjectId& subject, std::string_view clock);
Json round_start_msg(const RoundId& round, const RoundConfig& config);
Json social_info_msg(const RoundId& round, int contributor_count, Millis at_ms);
Json clock_extended_msg(const RoundId& round, Millis new_deadline_ms, Millis at_ms);
Json round_end_msg(const RoundId& round, bool funded, int your_amount);
Json payment_info_msg(const RoundId& selected_round, int payoff);
Json questionnaire_prompt_msg(std::string_view instrument);
Json error_msg(ErrorCode code, std::string_view detail);

}  // namespace ctlab
