#include "ctlab/bot_client.hpp"

#include <boost/asio/connect.hpp>
#include <boost/asio/ip/tcp.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/http.hpp>
#include <boost/beast/websocket.hpp>

#include "ctlab/dynamics.hpp"
#include "ctlab/protocol.hpp"
#include "ctlab/questionnaires.hpp"

namespace ctlab {

namespace beast = boost::beast;
namespace http = beast::http;
namespace websocket = beast::websocket;
namespace net = boost::asio;
using tcp = net::ip::tcp;

HttpReply http_call(const std::string& host, unsigned short port, const std::string& method,
                    const std::string& target, const std::string& body) {
  net::io_context ioc;
  tcp::resolver resolver(ioc);
  beast::tcp_stream stream(ioc);
  stream.connect(resolver.resolve(host, std::to_string(port)));
  http::request<http::string_body> req{http::string_to_verb(method), target, 11};
  req.set(http::field::host, host);
  if (!body.empty()) {
    req.set(http::field::content_type, "application/json");
    req.body() = body;
  }
  req.prepare_payload();
  http::write(stream, req);
  beast::flat_buffer buffer;
  http::response<http::string_body> res;
  http::read(stream, buffer, res);
  beast::error_code ec;
  stream.socket().shutdown(tcp::socket::shutdown_both, ec);
  return {static_cast<int>(res.result_int()), res.body()};
}

BotClientReport run_bot_client(const BotClientConfig& config) {
  if (!config.population) throw Error(ErrorCode::ConfigError, "bot client needs the session population");
  net::io_context ioc;
  tcp::resolver resolver(ioc);
  websocket::stream<tcp::socket> ws(ioc);
  net::connect(ws.next_layer(), resolver.resolve(config.host, std::to_string(config.port)));
  ws.handshake(config.host, "/ws");
  ws.text(true);

  auto send = [&](const ClientMessage& m) { ws.write(net::buffer(to_json(m).dump())); };
  send(JoinMsg{config.token});

  BotClientReport report;
  const PopulationMember* me = nullptr;
  std::optional<AgentPolicy> policy;
  RoundId round;
  int last_count = -1;
  std::int64_t last_seq = 0;

  // In lockstep every view change needs exactly one answer from an undecided bot.
  auto respond = [&](int count, Millis at) {
    if (!policy || policy->committed()) return;
    if (const auto s = policy->observe(count, at)) {
      send(ContributeMsg{round, s->amount, s->at_ms});
      ++report.contributions;
    } else {
      send(ReadyMsg{round});
    }
  };

  beast::flat_buffer buffer;
  for (;;) {
    beast::error_code ec;
    ws.read(buffer, ec);
    if (ec) {
      report.errors.push_back("connection ended before payment: " + ec.message());
      return report;
    }
    const auto msg = Json::parse(beast::buffers_to_string(buffer.data()));
    buffer.consume(buffer.size());
    const auto seq = msg.value("seq", std::int64_t{0});
    if (seq != last_seq + 1) report.seq_in_order = false;
    last_seq = seq;
    const auto type = msg.at("type").get<std::string>();

    if (type == "Welcome") {
      report.subject_id = msg.at("subject_id").get<std::string>();
      if (msg.value("clock", "") != "lockstep") {
        report.errors.push_back("bot clients need a lockstep session");
        return report;
      }
      for (const auto& m : *config.population) {
        if (m.subject.subject_id == report.subject_id) me = &m;
      }
      if (!me) {
        report.errors.push_back("subject " + report.subject_id + " is not in the population");
        return report;
      }
    } else if (type == "RoundStart") {
      round = msg.at("round_id").get<std::string>();
      RoundConfig cfg;
      cfg.scenario_id = msg.at("scenario").get<std::string>();
      cfg.group_size = msg.at("group_size").get<int>();
      policy.emplace(agent_for_round(*me, cfg), agent_round_rng(config.seed, report.subject_id, round),
                     cfg.group_size - 1);
      last_count = -1;
      ++report.rounds;
      respond(0, 0);
    } else if (type == "SocialInfo") {
      if (msg.at("round_id").get<std::string>() != round) continue;
      const int count = msg.at("contributor_count").get<int>();
      if (count < last_count) report.social_info_monotone = false;
      last_count = count;
      respond(count, msg.at("at_ms").get<Millis>());
    } else if (type == "RoundEnd") {
      policy.reset();
    } else if (type == "QuestionnairePrompt") {
      const auto instrument = msg.at("instrument").get<std::string>();
      const auto profile = me->subject.profile.value_or(PersonalityProfile{});
      send(QuestionnaireAnswerMsg{instrument, synthetic_answer(instrument, profile)});
    } else if (type == "PaymentInfo") {
      const auto selected = msg.at("selected_round").get<std::string>();
      if (!selected.empty()) report.selected_round = selected;
      report.payoff = msg.at("payoff").get<int>();
      ws.close(websocket::close_code::normal, ec);
      return report;
    } else if (type == "Error") {
      report.errors.push_back(msg.value("code", "") + ": " + msg.value("detail", ""));
    }
  }
}

}  // namespace ctlab
