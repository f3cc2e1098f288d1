#include "ctlab/protocol.hpp"

#include "ctlab/engine.hpp"

namespace ctlab {

namespace {

[[noreturn]] void bad(const std::string& why) { throw Error(ErrorCode::ProtocolError, why); }

template <typename T>
T field(const Json& j, const char* name) {
  const auto it = j.find(name);
  if (it == j.end()) bad(std::string("missing field '") + name + "'");
  try {
    return it->get<T>();
  } catch (const nlohmann::json::exception&) {
    bad(std::string("field '") + name + "' has the wrong type");
  }
}

Json typed(const char* type) { return Json{{"type", type}}; }

}  // namespace

ClientMessage parse_client_message(std::string_view text) {
  Json j;
  try {
    j = Json::parse(text);
  } catch (const nlohmann::json::exception&) {
    bad("message is not valid JSON");
  }
  if (!j.is_object()) bad("message must be a JSON object");
  const auto type = field<std::string>(j, "type");
  if (type == "Join") return JoinMsg{field<std::string>(j, "token")};
  if (type == "Contribute") {
    const auto amount = j.find("amount");
    if (amount == j.end() || !amount->is_number_integer()) bad("field 'amount' must be an integer");
    ContributeMsg m{field<std::string>(j, "round_id"), amount->get<int>(), std::nullopt};
    if (j.contains("at_ms")) m.at_ms = field<Millis>(j, "at_ms");
    return m;
  }
  if (type == "Pass") return PassMsg{field<std::string>(j, "round_id")};
  if (type == "Ready") return ReadyMsg{field<std::string>(j, "round_id")};
  if (type == "QuestionnaireAnswer") {
    if (!j.contains("payload") || !j["payload"].is_object()) bad("field 'payload' must be an object");
    return QuestionnaireAnswerMsg{field<std::string>(j, "instrument"), j["payload"]};
  }
  bad("unknown message type '" + type + "'");
}

Json to_json(const ClientMessage& msg) {
  return std::visit(
      [](const auto& m) -> Json {
        using T = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<T, JoinMsg>) {
          return {{"type", "Join"}, {"token", m.token}};
        } else if constexpr (std::is_same_v<T, ContributeMsg>) {
          Json j{{"type", "Contribute"}, {"round_id", m.round_id}, {"amount", m.amount}};
          if (m.at_ms) j["at_ms"] = *m.at_ms;
          return j;
        } else if constexpr (std::is_same_v<T, PassMsg>) {
          return {{"type", "Pass"}, {"round_id", m.round_id}};
        } else if constexpr (std::is_same_v<T, ReadyMsg>) {
          return {{"type", "Ready"}, {"round_id", m.round_id}};
        } else {
          return {{"type", "QuestionnaireAnswer"}, {"instrument", m.instrument}, {"payload", m.payload}};
        }
      },
      msg);
}

Json welcome_msg(const SubjectId& subject, std::string_view clock) {
  auto j = typed("Welcome");
  j["subject_id"] = subject;
  j["clock"] = clock;
  return j;
}

Json round_start_msg(const RoundId& round, const RoundConfig& config) {
  auto j = typed("RoundStart");
  j["round_id"] = round;
  j["scenario"] = config.scenario_id;
  j["endowment"] = config.endowment;
  j["provision_point"] = provision_point(config);
  j["duration_ms"] = config.base_duration_ms;
  j["group_size"] = config.group_size;
  j["at_ms"] = 0;
  return j;
}

Json social_info_msg(const RoundId& round, int contributor_count, Millis at_ms) {
  auto j = typed("SocialInfo");
  j["round_id"] = round;
  j["contributor_count"] = contributor_count;
  j["at_ms"] = at_ms;
  return j;
}

Json clock_extended_msg(const RoundId& round, Millis new_deadline_ms, Millis at_ms) {
  auto j = typed("ClockExtended");
  j["round_id"] = round;
  j["new_deadline_ms"] = new_deadline_ms;
  j["at_ms"] = at_ms;
  return j;
}

Json round_end_msg(const RoundId& round, bool funded, int your_amount) {
  auto j = typed("RoundEnd");
  j["round_id"] = round;
  j["funded"] = funded;
  j["your_amount"] = your_amount;
  return j;
}

Json payment_info_msg(const RoundId& selected_round, int payoff) {
  auto j = typed("PaymentInfo");
  j["selected_round"] = selected_round;
  j["payoff"] = payoff;
  return j;
}

Json questionnaire_prompt_msg(std::string_view instrument) {
  auto j = typed("QuestionnairePrompt");
  j["instrument"] = instrument;
  return j;
}

Json error_msg(ErrorCode code, std::string_view detail) {
  auto j = typed("Error");
  j["code"] = to_string(code);
  j["detail"] = detail;
  return j;
}

}  // namespace ctlab
