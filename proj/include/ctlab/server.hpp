#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>

#include "ctlab/core.hpp"

namespace ctlab {

struct ServeOptions {
  std::string address = "0.0.0.0";
  unsigned short port = 8080;
  /// Default plan for sessions created without one.
  std::string plan_path;
  /// When set (or when a plan or seed is given), a session is created at
  /// start-up with this many server-side bots.
  std::optional<int> bots;
  std::optional<std::uint64_t> seed;
  std::string data_dir = "ctlab-data";
  std::string clock = "wall";
  /// Session milliseconds per wall millisecond.
  double time_scale = 1.0;
  int threads = 0;
};

/// WebSocket endpoint at /ws plus the admin HTTP API on the same port:
///
///   POST /sessions                 create (JSON: plan, seed, server_bots, clock,
///                                  time_scale, inter_round_ms, questionnaires)
///   GET  /sessions                 list
///   GET  /sessions/{id}            status
///   POST /sessions/{id}/start      leave the lobby now
///   GET  /sessions/{id}/records    records.csv (settled rounds only)
///   GET  /sessions/{id}/population population.csv
///   GET  /sessions/{id}/events     events.jsonl
///   GET  /sessions/{id}/outcomes   outcomes.jsonl
///   GET  /instruments              questionnaire items and keys
///
/// Sessions persist under data_dir/<id>/ and are recovered on start.
class Server {
 public:
  explicit Server(ServeOptions options);
  ~Server();
  Server(const Server&) = delete;
  Server& operator=(const Server&) = delete;

  /// Binds, recovers persisted sessions and starts the I/O threads.
  void start();
  void stop();
  unsigned short port() const;

  /// Same as POST /sessions; returns {session_id, tokens: {subject: token}}.
  Json create_session(const Json& request);

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

/// Runs until SIGINT or SIGTERM.
int run_server(const ServeOptions& options);

}  // namespace ctlab
