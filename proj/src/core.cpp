#include "ctlab/core.hpp"

#include <cmath>

namespace ctlab {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::ConfigError: return "ConfigError";
    case ErrorCode::DuplicateAction: return "DuplicateAction";
    case ErrorCode::RoundClosed: return "RoundClosed";
    case ErrorCode::InvalidAmount: return "InvalidAmount";
    case ErrorCode::NotAMember: return "NotAMember";
    case ErrorCode::NotYetClosed: return "NotYetClosed";
    case ErrorCode::InvalidEvent: return "InvalidEvent";
    case ErrorCode::NoRounds: return "NoRounds";
    case ErrorCode::InvalidCurve: return "InvalidCurve";
    case ErrorCode::InvalidResponse: return "InvalidResponse";
    case ErrorCode::NoData: return "NoData";
    case ErrorCode::Singular: return "Singular";
    case ErrorCode::Degenerate: return "Degenerate";
    case ErrorCode::Separation: return "Separation";
    case ErrorCode::ConstantColumn: return "ConstantColumn";
    case ErrorCode::ZeroVariance: return "ZeroVariance";
    case ErrorCode::InsufficientData: return "InsufficientData";
    case ErrorCode::PlanError: return "PlanError";
    case ErrorCode::CorruptLog: return "CorruptLog";
    case ErrorCode::ProtocolError: return "ProtocolError";
    case ErrorCode::SchemaError: return "SchemaError";
  }
  return "Unknown";
}

Error::Error(ErrorCode code, const std::string& detail)
    : std::runtime_error(std::string(to_string(code)) + ": " + detail), code_(code) {}

std::string_view to_string(Svo svo) {
  switch (svo) {
    case Svo::ProSelf: return "ProSelf";
    case Svo::ProSocial: return "ProSocial";
    case Svo::Unclassified: return "Unclassified";
  }
  return "Unclassified";
}

Svo svo_from_string(std::string_view s) {
  if (s == "ProSelf") return Svo::ProSelf;
  if (s == "ProSocial") return Svo::ProSocial;
  if (s == "Unclassified") return Svo::Unclassified;
  throw Error(ErrorCode::SchemaError, "unknown svo '" + std::string(s) + "'");
}

void PersonalityProfile::validate() const {
  for (double v : {extraversion, agreeableness, conscientiousness, emotional_stability, openness}) {
    if (!(v >= 1.0 && v <= 7.0)) {
      throw Error(ErrorCode::InvalidResponse, "big-5 score outside [1,7]");
    }
  }
  if (!(rotter_internal >= 0.0 && rotter_internal <= 1.0)) {
    throw Error(ErrorCode::InvalidResponse, "rotter score outside [0,1]");
  }
}

void Subject::validate() const {
  if (subject_id.empty()) throw Error(ErrorCode::ConfigError, "empty subject id");
  if (profile) profile->validate();
  for (const auto& [scenario, value] : importance) {
    if (!(value >= 0.0 && value <= 1.0)) {
      throw Error(ErrorCode::ConfigError, "importance for " + scenario + " outside [0,1]");
    }
  }
}

double normalize_importance(int raw_rating) {
  if (raw_rating < 1 || raw_rating > 5) {
    throw Error(ErrorCode::InvalidResponse, "importance rating must be 1..5");
  }
  return (raw_rating - 1) / 4.0;
}

void RoundConfig::validate() const {
  if (group_size < 7 || group_size > 10) {
    throw Error(ErrorCode::ConfigError, "group_size must be 7..10");
  }
  if (endowment < 1) throw Error(ErrorCode::ConfigError, "endowment must be positive");
  if (!(provision_fraction > 0.0 && provision_fraction <= 1.0)) {
    throw Error(ErrorCode::ConfigError, "provision_fraction must be in (0,1]");
  }
  if (provision_point(*this) < 1) throw Error(ErrorCode::ConfigError, "provision point below 1");
  if (funded_bonus <= endowment) {
    throw Error(ErrorCode::ConfigError, "funded_bonus must exceed endowment");
  }
  if (base_duration_ms <= 0 || base_duration_ms > max_duration_ms) {
    throw Error(ErrorCode::ConfigError, "base_duration must be positive and <= max_duration");
  }
  if (extension_window_ms < 0 || extension_amount_ms < 0) {
    throw Error(ErrorCode::ConfigError, "negative extension parameters");
  }
}

int provision_point(const RoundConfig& config) {
  return static_cast<int>(
      std::lround(config.provision_fraction * config.endowment * config.group_size));
}

std::string_view to_string(EventKind kind) {
  switch (kind) {
    case EventKind::RoundStarted: return "RoundStarted";
    case EventKind::Contributed: return "Contributed";
    case EventKind::Passed: return "Passed";
    case EventKind::ClockExtended: return "ClockExtended";
    case EventKind::RoundEnded: return "RoundEnded";
  }
  return "RoundStarted";
}

EventKind event_kind_from_string(std::string_view s) {
  if (s == "RoundStarted") return EventKind::RoundStarted;
  if (s == "Contributed") return EventKind::Contributed;
  if (s == "Passed") return EventKind::Passed;
  if (s == "ClockExtended") return EventKind::ClockExtended;
  if (s == "RoundEnded") return EventKind::RoundEnded;
  throw Error(ErrorCode::SchemaError, "unknown event kind '" + std::string(s) + "'");
}

void SubjectRoundRecord::validate() const {
  if (rank.has_value() != (amount >= 1)) {
    throw Error(ErrorCode::SchemaError, "rank must be present iff amount >= 1");
  }
  if (rank && (*rank < 1 || *rank > group_size)) {
    throw Error(ErrorCode::SchemaError, "rank outside 1..group_size");
  }
  if (importance && !(*importance >= 0.0 && *importance <= 1.0)) {
    throw Error(ErrorCode::SchemaError, "importance outside [0,1]");
  }
}

// --- JSON ------------------------------------------------------------------

void to_json(Json& j, const PersonalityProfile& p) {
  j = Json{{"extraversion", p.extraversion},
           {"agreeableness", p.agreeableness},
           {"conscientiousness", p.conscientiousness},
           {"emotional_stability", p.emotional_stability},
           {"openness", p.openness},
           {"rotter_internal", p.rotter_internal},
           {"svo", std::string(to_string(p.svo))}};
}

void from_json(const Json& j, PersonalityProfile& p) {
  p.extraversion = j.at("extraversion").get<double>();
  p.agreeableness = j.at("agreeableness").get<double>();
  p.conscientiousness = j.at("conscientiousness").get<double>();
  p.emotional_stability = j.at("emotional_stability").get<double>();
  p.openness = j.at("openness").get<double>();
  p.rotter_internal = j.at("rotter_internal").get<double>();
  p.svo = svo_from_string(j.at("svo").get<std::string>());
}

void to_json(Json& j, const Subject& s) {
  j = Json{{"subject_id", s.subject_id}};
  j["profile"] = s.profile ? Json(*s.profile) : Json(nullptr);
  Json imp = Json::object();
  for (const auto& [k, v] : s.importance) imp[k] = v;
  j["importance"] = imp;
  j["kind"] = s.kind == SubjectKind::Human ? "Human" : "Bot";
}

void from_json(const Json& j, Subject& s) {
  s.subject_id = j.at("subject_id").get<std::string>();
  if (j.contains("profile") && !j.at("profile").is_null()) {
    s.profile = j.at("profile").get<PersonalityProfile>();
  } else {
    s.profile.reset();
  }
  s.importance.clear();
  if (j.contains("importance")) {
    for (const auto& [k, v] : j.at("importance").items()) s.importance[k] = v.get<double>();
  }
  const auto kind = j.value("kind", std::string("Bot"));
  if (kind == "Human") {
    s.kind = SubjectKind::Human;
  } else if (kind == "Bot") {
    s.kind = SubjectKind::Bot;
  } else {
    throw Error(ErrorCode::SchemaError, "unknown subject kind '" + kind + "'");
  }
}

void to_json(Json& j, const RoundConfig& c) {
  j = Json{{"group_size", c.group_size},
           {"endowment", c.endowment},
           {"provision_fraction", c.provision_fraction},
           {"base_duration_ms", c.base_duration_ms},
           {"extension_window_ms", c.extension_window_ms},
           {"extension_amount_ms", c.extension_amount_ms},
           {"max_duration_ms", c.max_duration_ms},
           {"funded_bonus", c.funded_bonus},
           {"scenario_id", c.scenario_id}};
}

void from_json(const Json& j, RoundConfig& c) {
  RoundConfig d;
  c.group_size = j.value("group_size", d.group_size);
  c.endowment = j.value("endowment", d.endowment);
  c.provision_fraction = j.value("provision_fraction", d.provision_fraction);
  c.base_duration_ms = j.value("base_duration_ms", d.base_duration_ms);
  c.extension_window_ms = j.value("extension_window_ms", d.extension_window_ms);
  c.extension_amount_ms = j.value("extension_amount_ms", d.extension_amount_ms);
  c.max_duration_ms = j.value("max_duration_ms", d.max_duration_ms);
  c.funded_bonus = j.value("funded_bonus", d.funded_bonus);
  c.scenario_id = j.value("scenario_id", d.scenario_id);
}

void to_json(Json& j, const GameEvent& e) {
  j = Json{{"seq", e.seq},
           {"at_ms", e.at_ms},
           {"round_id", e.round_id},
           {"kind", std::string(to_string(e.kind))}};
  if (e.subject_id) j["subject_id"] = *e.subject_id;
  if (e.amount) j["amount"] = *e.amount;
  if (e.members) j["members"] = *e.members;
  if (e.config) j["config"] = *e.config;
  if (e.total) j["total"] = *e.total;
  if (e.funded) j["funded"] = *e.funded;
  if (e.deadline_ms) j["deadline_ms"] = *e.deadline_ms;
}

void from_json(const Json& j, GameEvent& e) {
  e = GameEvent{};
  e.seq = j.at("seq").get<std::int64_t>();
  e.at_ms = j.at("at_ms").get<Millis>();
  e.round_id = j.at("round_id").get<std::string>();
  e.kind = event_kind_from_string(j.at("kind").get<std::string>());
  if (j.contains("subject_id")) e.subject_id = j.at("subject_id").get<std::string>();
  if (j.contains("amount")) e.amount = j.at("amount").get<int>();
  if (j.contains("members")) e.members = j.at("members").get<std::vector<SubjectId>>();
  if (j.contains("config")) e.config = j.at("config").get<RoundConfig>();
  if (j.contains("total")) e.total = j.at("total").get<int>();
  if (j.contains("funded")) e.funded = j.at("funded").get<bool>();
  if (j.contains("deadline_ms")) e.deadline_ms = j.at("deadline_ms").get<Millis>();
}

void to_json(Json& j, const SubjectRoundRecord& r) {
  j = Json{{"subject_id", r.subject_id}, {"round_id", r.round_id}, {"group_size", r.group_size}};
  j["rank"] = r.rank ? Json(*r.rank) : Json(nullptr);
  j["amount"] = r.amount;
  j["funded"] = r.funded;
  j["first_contribution_amount"] = r.first_contribution_amount;
  j["importance"] = r.importance ? Json(*r.importance) : Json(nullptr);
}

void from_json(const Json& j, SubjectRoundRecord& r) {
  r.subject_id = j.at("subject_id").get<std::string>();
  r.round_id = j.at("round_id").get<std::string>();
  r.group_size = j.at("group_size").get<int>();
  r.rank = j.at("rank").is_null() ? std::nullopt : std::optional<int>(j.at("rank").get<int>());
  r.amount = j.at("amount").get<int>();
  r.funded = j.at("funded").get<bool>();
  r.first_contribution_amount = j.at("first_contribution_amount").get<int>();
  r.importance = j.at("importance").is_null()
                     ? std::nullopt
                     : std::optional<double>(j.at("importance").get<double>());
}

std::string to_jsonl(const GameEvent& event) { return Json(event).dump(); }

GameEvent parse_event_line(std::string_view line) {
  try {
    return Json::parse(line).get<GameEvent>();
  } catch (const nlohmann::json::exception& ex) {
    throw Error(ErrorCode::CorruptLog, std::string("unparseable event line: ") + ex.what());
  }
}

}  // namespace ctlab
