#pragma once

#include <optional>
#include <string>
#include <vector>

#include "ctlab/core.hpp"
#include "ctlab/simulation.hpp"

namespace ctlab {

struct HttpReply {
  int status = 0;
  std::string body;
};

/// Blocking HTTP/1.1 request against the admin API.
HttpReply http_call(const std::string& host, unsigned short port, const std::string& method,
                    const std::string& target, const std::string& body = {});

struct BotClientConfig {
  std::string host = "127.0.0.1";
  unsigned short port = 0;
  std::string token;
  /// The session's population; the bot looks itself up after Welcome.
  const std::vector<PopulationMember>* population = nullptr;
  std::uint64_t seed = 0;
};

struct BotClientReport {
  SubjectId subject_id;
  int rounds = 0;
  int contributions = 0;
  bool seq_in_order = true;
  /// SocialInfo counts never decreased within a round.
  bool social_info_monotone = true;
  std::vector<std::string> errors;
  std::optional<RoundId> selected_round;
  int payoff = 0;
};

/// Plays one remote subject of a lockstep session with the same agent and
/// random stream the simulator uses, answers the questionnaires from the
/// subject's profile, and returns after PaymentInfo.
BotClientReport run_bot_client(const BotClientConfig& config);

}  // namespace ctlab
