#include <gtest/gtest.h>

#include <chrono>
#include <filesystem>
#include <fstream>
#include <functional>
#include <thread>
#include <unistd.h>

#include "ctlab/bot_client.hpp"
#include "ctlab/replay.hpp"
#include "ctlab/server.hpp"
#include "ctlab/simulation.hpp"

using namespace ctlab;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag)
      : path(fs::temp_directory_path() / ("ctlab-" + tag + "-" + std::to_string(::getpid()))) {
    fs::remove_all(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

ServeOptions local(const fs::path& dir) {
  ServeOptions o;
  o.address = "127.0.0.1";
  o.port = 0;
  o.data_dir = dir.string();
  o.threads = 2;
  return o;
}

ExperimentPlan tiny_plan() {
  ExperimentPlan p;
  p.n_subjects = 8;
  p.n_rounds = 2;
  p.min_rounds_per_subject = p.max_rounds_per_subject = 2;
  p.seed = 31;
  return p;
}

Json get_json(unsigned short port, const std::string& target) {
  const auto r = http_call("127.0.0.1", port, "GET", target);
  EXPECT_EQ(r.status, 200) << target << ": " << r.body;
  return Json::parse(r.body);
}

bool wait_for(const std::function<bool()>& done, std::chrono::seconds limit) {
  const auto until = std::chrono::steady_clock::now() + limit;
  while (std::chrono::steady_clock::now() < until) {
    if (done()) return true;
    std::this_thread::sleep_for(std::chrono::milliseconds(50));
  }
  return done();
}

}  // namespace

TEST(Server, AdminRoutes) {
  TempDir dir("routes");
  Server server(local(dir.path));
  server.start();
  const auto port = server.port();

  EXPECT_EQ(get_json(port, "/health").at("ok"), true);
  EXPECT_TRUE(get_json(port, "/instruments").contains("tipi"));

  const auto created = http_call("127.0.0.1", port, "POST", "/sessions",
                                 Json{{"plan", tiny_plan()}, {"server_bots", 6}, {"session_id", "alpha"}}.dump());
  ASSERT_EQ(created.status, 201) << created.body;
  const auto body = Json::parse(created.body);
  EXPECT_EQ(body.at("session_id"), "alpha");
  EXPECT_EQ(body.at("tokens").size(), 2u);
  EXPECT_TRUE(body.at("tokens").contains("S001"));

  EXPECT_EQ(get_json(port, "/sessions").at("sessions"), Json::array({"alpha"}));
  const auto status = get_json(port, "/sessions/alpha");
  EXPECT_EQ(status.at("phase"), "Lobby");
  EXPECT_EQ(status.at("roster").size(), 8u);

  EXPECT_EQ(http_call("127.0.0.1", port, "POST", "/sessions", "{nope").status, 400);
  EXPECT_EQ(http_call("127.0.0.1", port, "POST", "/sessions", R"({"server_bots": 999})").status, 400);
  EXPECT_EQ(http_call("127.0.0.1", port, "POST", "/sessions", R"({"session_id": "alpha"})").status, 400);
  EXPECT_EQ(http_call("127.0.0.1", port, "GET", "/sessions/missing").status, 404);
  EXPECT_EQ(http_call("127.0.0.1", port, "GET", "/elsewhere").status, 404);

  const auto records = http_call("127.0.0.1", port, "GET", "/sessions/alpha/records");
  EXPECT_EQ(records.status, 200);
  EXPECT_EQ(records.body.substr(0, 10), "subject_id");
  EXPECT_TRUE(fs::exists(dir.path / "alpha" / "session.json"));
  server.stop();
}

TEST(Server, BadTokenIsRejected) {
  TempDir dir("token");
  Server server(local(dir.path));
  server.start();
  server.create_session(Json{{"plan", tiny_plan()}, {"server_bots", 6}});
  const auto population = generate_population(tiny_plan());
  BotClientConfig cfg;
  cfg.port = server.port();
  cfg.token = "not-a-token";
  cfg.population = &population;
  const auto report = run_bot_client(cfg);
  ASSERT_FALSE(report.errors.empty());
  EXPECT_NE(report.errors.front().find("ProtocolError"), std::string::npos) << report.errors.front();
  server.stop();
}

TEST(Server, RemoteBotsMatchSimulation) {
  TempDir dir("bots");
  Server server(local(dir.path));
  server.start();
  auto plan = tiny_plan();
  plan.n_subjects = 16;
  const auto created = server.create_session(Json{{"plan", plan}, {"server_bots", 8}, {"clock", "lockstep"}});
  const std::string id = created.at("session_id");
  const auto population = generate_population(plan);

  std::vector<BotClientReport> reports;
  std::vector<std::thread> threads;
  reports.resize(created.at("tokens").size());
  std::size_t i = 0;
  for (const auto& [subject, token] : created.at("tokens").items()) {
    BotClientConfig cfg;
    cfg.port = server.port();
    cfg.token = token.get<std::string>();
    cfg.population = &population;
    cfg.seed = plan.seed;
    threads.emplace_back([cfg, &out = reports[i++]] { out = run_bot_client(cfg); });
  }
  for (auto& t : threads) t.join();
  for (const auto& r : reports) {
    EXPECT_TRUE(r.errors.empty()) << r.subject_id << ": " << r.errors.front();
    EXPECT_TRUE(r.seq_in_order);
    EXPECT_TRUE(r.social_info_monotone);
    EXPECT_EQ(r.rounds, 2);
    EXPECT_TRUE(r.selected_round);
  }
  const auto sim = run_experiment(plan, population);
  EXPECT_EQ(http_call("127.0.0.1", server.port(), "GET", "/sessions/" + id + "/outcomes").body,
            outcomes_to_jsonl(sim.outcomes));
  EXPECT_EQ(http_call("127.0.0.1", server.port(), "GET", "/sessions/" + id + "/events").body,
            events_to_jsonl(sim.events));
  EXPECT_EQ(get_json(server.port(), "/sessions/" + id).at("phase"), "Done");
  server.stop();
}

TEST(Server, CrashMidRoundVoidsAndResumes) {
  TempDir dir("crash");
  const auto plan = tiny_plan();
  std::string id;
  {
    Server server(local(dir.path));
    server.start();
    id = server.create_session(Json{{"plan", plan}, {"server_bots", 8}, {"time_scale", 50.0}, {"inter_round_ms", 500}})
             .at("session_id");
    ASSERT_EQ(http_call("127.0.0.1", server.port(), "POST", "/sessions/" + id + "/start").status, 200);
    std::this_thread::sleep_for(std::chrono::milliseconds(300));
    const auto status = get_json(server.port(), "/sessions/" + id);
    ASSERT_EQ(status.at("phase"), "InRound");
    ASSERT_EQ(status.at("groups_settled"), 0);
    server.stop();
  }
  const auto partial = replay(parse_event_log([&] {
    std::ifstream in(dir.path / id / "events.jsonl");
    return std::string(std::istreambuf_iterator<char>(in), {});
  }()));
  EXPECT_TRUE(partial.outcomes.empty());
  EXPECT_EQ(partial.open.size(), 1u);

  Server server(local(dir.path));
  server.start();
  const auto port = server.port();
  const auto recovered = get_json(port, "/sessions/" + id);
  EXPECT_EQ(recovered.at("voided"), Json::array({"R01-G1"}));
  EXPECT_EQ(recovered.at("groups_settled"), 0);
  ASSERT_EQ(http_call("127.0.0.1", port, "POST", "/sessions/" + id + "/start").status, 200);
  ASSERT_TRUE(wait_for([&] { return get_json(port, "/sessions/" + id).at("phase") == "Done"; }, std::chrono::seconds(60)));

  const auto events = parse_event_log(http_call("127.0.0.1", port, "GET", "/sessions/" + id + "/events").body);
  const auto rep = replay(events);
  EXPECT_EQ(rep.outcomes.size(), 2u);
  EXPECT_EQ(outcomes_to_jsonl(rep.outcomes), http_call("127.0.0.1", port, "GET", "/sessions/" + id + "/outcomes").body);
  const auto records = parse_records_csv(http_call("127.0.0.1", port, "GET", "/sessions/" + id + "/records").body);
  EXPECT_EQ(records.size(), 16u);
  server.stop();
}
