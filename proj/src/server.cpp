#include "ctlab/server.hpp"

#include <openssl/rand.h>

#include <boost/asio.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/http.hpp>
#include <boost/beast/websocket.hpp>
#include <chrono>
#include <deque>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <regex>
#include <thread>

#include "ctlab/csv.hpp"
#include "ctlab/questionnaires.hpp"
#include "ctlab/replay.hpp"
#include "ctlab/session.hpp"
#include "ctlab/simulation.hpp"

namespace ctlab {

namespace {

namespace beast = boost::beast;
namespace http = beast::http;
namespace websocket = beast::websocket;
namespace net = boost::asio;
namespace fs = std::filesystem;
using tcp = net::ip::tcp;
using Strand = net::strand<net::io_context::executor_type>;
using Response = http::response<http::string_body>;
using Responder = std::function<void(Response)>;

std::string random_hex(std::size_t bytes) {
  std::vector<unsigned char> buf(bytes);
  if (RAND_bytes(buf.data(), static_cast<int>(bytes)) != 1) throw std::runtime_error("RAND_bytes failed");
  static constexpr char digits[] = "0123456789abcdef";
  std::string out;
  for (auto b : buf) {
    out.push_back(digits[b >> 4]);
    out.push_back(digits[b & 15]);
  }
  return out;
}

/// Error sent before a connection is bound to a session.
std::string unbound_error(ErrorCode code, std::string_view detail) {
  auto j = error_msg(code, detail);
  j["session_id"] = "";
  j["seq"] = 0;
  return j.dump();
}

/// Drops a trailing partial line left by a crash mid-write.
std::string read_whole_lines(const fs::path& path) {
  if (!fs::exists(path)) return {};
  auto text = read_file(path.string());
  if (!text.empty() && text.back() != '\n') {
    const auto cut = text.rfind('\n');
    text.resize(cut == std::string::npos ? 0 : cut + 1);
    write_file(path.string(), text);
  }
  return text;
}

class WsConnection;

struct SessionHost : std::enable_shared_from_this<SessionHost> {
  SessionHost(net::io_context& ioc, Session s, double scale)
      : session(std::move(s)), strand(net::make_strand(ioc)), timer(strand), time_scale(scale) {}

  Session session;
  Strand strand;
  net::steady_timer timer;
  std::chrono::steady_clock::time_point epoch = std::chrono::steady_clock::now();
  double time_scale = 1.0;
  std::ofstream events_file;
  std::ofstream answers_file;
  std::map<SubjectId, std::weak_ptr<WsConnection>> connections;
  std::uint64_t generation = 0;

  Millis now() const {
    const std::chrono::duration<double, std::milli> elapsed = std::chrono::steady_clock::now() - epoch;
    return static_cast<Millis>(elapsed.count() * time_scale);
  }

  void deliver(const std::vector<Outbound>& out);
  void rearm();

  /// Runs `f` on the session queue, then delivers its output and re-arms the timer.
  template <typename F>
  void run(F f) {
    net::post(strand, [self = shared_from_this(), f = std::move(f)]() mutable {
      try {
        self->deliver(f(*self));
      } catch (const std::exception& e) {
        std::cerr << "session " << self->session.id() << ": " << e.what() << "\n";
      }
      self->rearm();
    });
  }
};

class ServerCore;

class WsConnection : public std::enable_shared_from_this<WsConnection> {
 public:
  WsConnection(tcp::socket&& socket, ServerCore& core) : ws_(std::move(socket)), core_(core) {}

  void run(http::request<http::string_body> req) {
    ws_.set_option(websocket::stream_base::timeout::suggested(beast::role_type::server));
    ws_.text(true);
    ws_.async_accept(req, [self = shared_from_this()](beast::error_code ec) {
      if (!ec) self->read();
    });
  }

  void send(std::string text, bool close) {
    net::post(ws_.get_executor(), [self = shared_from_this(), text = std::move(text), close]() mutable {
      if (self->closing_) return;
      self->queue_.emplace_back(std::move(text), close);
      if (!self->writing_) self->write_next();
    });
  }

 private:
  void read() {
    ws_.async_read(buffer_, [self = shared_from_this()](beast::error_code ec, std::size_t) { self->on_read(ec); });
  }

  void on_read(beast::error_code ec);
  void join(const std::string& text);
  void closed();

  void refuse(ErrorCode code, std::string_view detail) { send(unbound_error(code, detail), true); }

  void write_next() {
    writing_ = true;
    ws_.async_write(net::buffer(queue_.front().first),
                    [self = shared_from_this()](beast::error_code ec, std::size_t) { self->on_write(ec); });
  }

  void on_write(beast::error_code ec) {
    if (ec) {
      writing_ = false;
      queue_.clear();
      return;
    }
    const bool close = queue_.front().second;
    queue_.pop_front();
    if (close) {
      closing_ = true;
      writing_ = false;
      queue_.clear();
      ws_.async_close(websocket::close_code::policy_error, [self = shared_from_this()](beast::error_code) {});
      return;
    }
    if (queue_.empty()) {
      writing_ = false;
    } else {
      write_next();
    }
  }

  websocket::stream<beast::tcp_stream> ws_;
  ServerCore& core_;
  beast::flat_buffer buffer_;
  std::deque<std::pair<std::string, bool>> queue_;
  bool writing_ = false;
  bool closing_ = false;
  bool ended_ = false;
  std::shared_ptr<SessionHost> host_;
  SubjectId subject_;
};

void SessionHost::deliver(const std::vector<Outbound>& out) {
  for (const auto& o : out) {
    const auto it = connections.find(o.to);
    if (it == connections.end()) continue;
    if (auto conn = it->second.lock()) conn->send(o.message.dump(), o.close);
  }
}

void SessionHost::rearm() {
  ++generation;
  timer.cancel();
  const auto next = session.next_wakeup();
  if (!next) return;
  const Millis delta = *next - now();
  const double wall_ms = delta > 0 ? static_cast<double>(delta) / time_scale : 0.0;
  timer.expires_after(std::chrono::microseconds(static_cast<std::int64_t>(wall_ms * 1000.0) + 1));
  timer.async_wait(
      net::bind_executor(strand, [self = shared_from_this(), gen = generation](beast::error_code ec) {
        if (ec || gen != self->generation) return;
        try {
          self->deliver(self->session.advance(self->now()));
        } catch (const std::exception& e) {
          std::cerr << "session " << self->session.id() << ": " << e.what() << "\n";
        }
        self->rearm();
      }));
}

class ServerCore {
 public:
  explicit ServerCore(ServeOptions options) : options_(std::move(options)), acceptor_(ioc_) {
    if (!options_.plan_path.empty()) default_plan_ = load_plan(options_.plan_path);
    if (options_.seed) default_plan_.seed = *options_.seed;
    default_plan_.validate();
    (void)clock_mode_from_string(options_.clock);
    if (!(options_.time_scale > 0)) throw Error(ErrorCode::ConfigError, "time_scale must be positive");
  }

  ~ServerCore() { stop(); }

  void start() {
    fs::create_directories(options_.data_dir);
    recover();
    const tcp::endpoint endpoint(net::ip::make_address(options_.address), options_.port);
    acceptor_.open(endpoint.protocol());
    acceptor_.set_option(net::socket_base::reuse_address(true));
    acceptor_.bind(endpoint);
    acceptor_.listen(net::socket_base::max_listen_connections);
    accept();
    const int n = options_.threads > 0 ? options_.threads
                                       : static_cast<int>(std::max(2u, std::thread::hardware_concurrency()));
    for (int i = 0; i < n; ++i) threads_.emplace_back([this] { ioc_.run(); });
  }

  void stop() {
    if (threads_.empty()) return;
    ioc_.stop();
    for (auto& t : threads_) t.join();
    threads_.clear();
    beast::error_code ec;
    acceptor_.close(ec);
  }

  unsigned short port() const { return acceptor_.local_endpoint().port(); }

  std::shared_ptr<SessionHost> host_for_token(const std::string& token) {
    std::lock_guard lock(mutex_);
    const auto it = token_index_.find(token);
    if (it == token_index_.end()) return nullptr;
    return hosts_.at(it->second);
  }

  std::shared_ptr<SessionHost> host(const std::string& id) {
    std::lock_guard lock(mutex_);
    const auto it = hosts_.find(id);
    return it == hosts_.end() ? nullptr : it->second;
  }

  Json create(const Json& request);
  void route(http::request<http::string_body> req, Responder respond);

 private:
  void accept();
  void recover();
  void install(Session session, double time_scale, const fs::path& dir);

  ServeOptions options_;
  ExperimentPlan default_plan_;
  net::io_context ioc_;
  tcp::acceptor acceptor_;
  std::vector<std::thread> threads_;
  std::mutex mutex_;
  std::map<std::string, std::shared_ptr<SessionHost>> hosts_;
  std::map<std::string, std::string> token_index_;
};

void WsConnection::on_read(beast::error_code ec) {
  if (ec) {
    closed();
    return;
  }
  std::string text = beast::buffers_to_string(buffer_.data());
  buffer_.consume(buffer_.size());
  if (!host_) {
    join(text);
    return;
  }
  try {
    auto msg = parse_client_message(text);
    host_->run([s = subject_, msg = std::move(msg)](SessionHost& h) { return h.session.handle(s, msg, h.now()); });
  } catch (const Error& e) {
    host_->run([s = subject_, d = std::string(e.what())](SessionHost& h) { return h.session.reject(s, d); });
  }
  read();
}

void WsConnection::join(const std::string& text) {
  std::string token;
  try {
    const auto msg = parse_client_message(text);
    const auto* j = std::get_if<JoinMsg>(&msg);
    if (!j) throw Error(ErrorCode::ProtocolError, "first message must be Join");
    token = j->token;
  } catch (const Error& e) {
    refuse(e.code(), e.what());
    return;
  }
  auto host = core_.host_for_token(token);
  if (!host) {
    refuse(ErrorCode::ProtocolError, "unknown join token");
    return;
  }
  net::post(host->strand, [self = shared_from_this(), host, token] {
    Session::JoinResult r;
    try {
      r = host->session.join(token, host->now());
    } catch (const Error& e) {
      self->refuse(e.code(), e.what());
      return;
    }
    if (auto old = host->connections[r.subject_id].lock(); old && old != self) {
      old->send(unbound_error(ErrorCode::ProtocolError, "replaced by a newer connection"), true);
    }
    host->connections[r.subject_id] = self;
    net::post(self->ws_.get_executor(), [self, host, subject = r.subject_id] {
      self->host_ = host;
      self->subject_ = subject;
      self->read();
    });
    host->deliver(r.out);
    host->rearm();
  });
}

void WsConnection::closed() {
  if (ended_) return;
  ended_ = true;
  if (!host_) return;
  host_->run([self = shared_from_this(), s = subject_](SessionHost& h) -> std::vector<Outbound> {
    const auto it = h.connections.find(s);
    if (it == h.connections.end() || it->second.lock() != self) return {};
    h.connections.erase(it);
    return h.session.disconnect(s, h.now());
  });
}

class HttpConnection : public std::enable_shared_from_this<HttpConnection> {
 public:
  HttpConnection(tcp::socket&& socket, ServerCore& core) : stream_(std::move(socket)), core_(core) {}

  void run() {
    net::dispatch(stream_.get_executor(), [self = shared_from_this()] { self->read(); });
  }

 private:
  void read() {
    request_ = {};
    stream_.expires_after(std::chrono::seconds(30));
    http::async_read(stream_, buffer_, request_,
                     [self = shared_from_this()](beast::error_code ec, std::size_t) { self->on_read(ec); });
  }

  void on_read(beast::error_code ec) {
    if (ec == http::error::end_of_stream) {
      stream_.socket().shutdown(tcp::socket::shutdown_send, ec);
      return;
    }
    if (ec) return;
    if (websocket::is_upgrade(request_) && request_.target() == "/ws") {
      stream_.expires_never();
      std::make_shared<WsConnection>(stream_.release_socket(), core_)->run(std::move(request_));
      return;
    }
    core_.route(std::move(request_), [self = shared_from_this()](Response res) {
      net::post(self->stream_.get_executor(),
                [self, res = std::move(res)]() mutable { self->write(std::move(res)); });
    });
  }

  void write(Response res) {
    auto sp = std::make_shared<Response>(std::move(res));
    http::async_write(stream_, *sp, [self = shared_from_this(), sp](beast::error_code ec, std::size_t) {
      if (ec) return;
      if (sp->need_eof()) {
        self->stream_.socket().shutdown(tcp::socket::shutdown_send, ec);
        return;
      }
      self->read();
    });
  }

  beast::tcp_stream stream_;
  ServerCore& core_;
  beast::flat_buffer buffer_;
  http::request<http::string_body> request_;
};

void ServerCore::accept() {
  acceptor_.async_accept(net::make_strand(ioc_), [this](beast::error_code ec, tcp::socket socket) {
    if (!ec) std::make_shared<HttpConnection>(std::move(socket), *this)->run();
    if (acceptor_.is_open()) accept();
  });
}

Json ServerCore::create(const Json& request) {
  const Json req = request.is_null() ? Json::object() : request;
  if (!req.is_object()) throw Error(ErrorCode::ConfigError, "session request must be a JSON object");
  ExperimentPlan plan = default_plan_;
  SessionOptions options;
  double time_scale = options_.time_scale;
  std::string id;
  try {
    if (req.contains("plan")) plan = req.at("plan").get<ExperimentPlan>();
    if (req.contains("seed")) plan.seed = req.at("seed").get<std::uint64_t>();
    options = req.get<SessionOptions>();
    if (!req.contains("clock")) options.clock = clock_mode_from_string(options_.clock);
    time_scale = req.value("time_scale", time_scale);
    id = req.value("session_id", random_hex(6));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ConfigError, e.what());
  }
  if (!(time_scale > 0)) throw Error(ErrorCode::ConfigError, "time_scale must be positive");
  if (!std::regex_match(id, std::regex("[A-Za-z0-9_-]{1,64}"))) {
    throw Error(ErrorCode::ConfigError, "session_id may only use letters, digits, '_' and '-'");
  }
  plan.validate();
  if (options.server_bots < 0 || options.server_bots > plan.n_subjects) {
    throw Error(ErrorCode::ConfigError, "server_bots must lie in 0.." + std::to_string(plan.n_subjects));
  }
  const auto population = generate_population(plan);
  std::map<std::string, SubjectId> tokens;
  Json by_subject = Json::object();
  for (int i = 0; i < plan.n_subjects - options.server_bots; ++i) {
    const auto token = random_hex(16);
    const auto& subject = population[static_cast<std::size_t>(i)].subject.subject_id;
    tokens[token] = subject;
    by_subject[subject] = token;
  }

  const fs::path dir = fs::path(options_.data_dir) / id;
  {
    std::lock_guard lock(mutex_);
    if (hosts_.contains(id) || fs::exists(dir)) throw Error(ErrorCode::ConfigError, "session " + id + " exists");
  }
  Session session(id, plan, options, tokens);
  fs::create_directories(dir);
  const Json meta{{"session_id", id},
                  {"plan", plan},
                  {"options", options},
                  {"time_scale", time_scale},
                  {"tokens", tokens}};
  write_file((dir / "session.json").string(), meta.dump(2) + "\n");
  install(std::move(session), time_scale, dir);
  return Json{{"session_id", id}, {"clock", to_string(options.clock)}, {"ws_path", "/ws"}, {"tokens", by_subject}};
}

void ServerCore::install(Session session, double time_scale, const fs::path& dir) {
  const auto events_path = dir / "events.jsonl";
  const auto answers_path = dir / "questionnaires.csv";
  const bool fresh_answers = !fs::exists(answers_path) || fs::file_size(answers_path) == 0;
  auto host = std::make_shared<SessionHost>(ioc_, std::move(session), time_scale);
  host->events_file.open(events_path, std::ios::app | std::ios::binary);
  host->answers_file.open(answers_path, std::ios::app | std::ios::binary);
  if (!host->events_file || !host->answers_file) {
    throw Error(ErrorCode::ConfigError, "cannot write session files under " + dir.string());
  }
  if (fresh_answers) host->answers_file << csv_row({"subject_id", "instrument", "payload"}) << std::flush;
  SessionHost* raw = host.get();
  host->session.set_sinks(
      [raw](const GameEvent& e) { raw->events_file << to_jsonl(e) << '\n' << std::flush; },
      [raw](const QuestionnaireRow& r) {
        raw->answers_file << csv_row({r.subject_id, r.instrument, r.payload.dump()}) << std::flush;
      });
  {
    std::lock_guard lock(mutex_);
    hosts_[host->session.id()] = host;
    for (const auto& [token, subject] : host->session.tokens()) token_index_[token] = host->session.id();
  }
  host->run([](SessionHost&) { return std::vector<Outbound>{}; });
}

void ServerCore::recover() {
  for (const auto& entry : fs::directory_iterator(options_.data_dir)) {
    const auto meta_path = entry.path() / "session.json";
    if (!entry.is_directory() || !fs::exists(meta_path)) continue;
    try {
      const auto meta = Json::parse(read_file(meta_path.string()));
      Session session(meta.at("session_id").get<std::string>(), meta.at("plan").get<ExperimentPlan>(),
                      meta.at("options").get<SessionOptions>(),
                      meta.at("tokens").get<std::map<std::string, SubjectId>>());
      const auto events = parse_event_log(read_whole_lines(entry.path() / "events.jsonl"));
      std::vector<QuestionnaireRow> answers;
      const auto answers_text = read_whole_lines(entry.path() / "questionnaires.csv");
      if (!answers_text.empty()) {
        const auto table = parse_csv(answers_text);
        const auto s = table.column("subject_id"), i = table.column("instrument"), p = table.column("payload");
        for (const auto& row : table.rows) answers.push_back({row[s], row[i], Json::parse(row[p])});
      }
      session.restore(events, answers);
      const auto status = session.status();
      std::cerr << "recovered session " << session.id() << ": " << status["groups_settled"] << " rounds settled, "
                << status["voided"].size() << " voided\n";
      install(std::move(session), meta.value("time_scale", 1.0), entry.path());
    } catch (const std::exception& e) {
      std::cerr << "not recovering " << entry.path().string() << ": " << e.what() << "\n";
    }
  }
}

void ServerCore::route(http::request<http::string_body> req, Responder respond) {
  const unsigned version = req.version();
  const bool keep_alive = req.keep_alive();
  auto reply = [respond, version, keep_alive](http::status status, std::string body, const char* type) {
    Response res{status, version};
    res.set(http::field::server, "ctlab");
    res.set(http::field::content_type, type);
    res.keep_alive(keep_alive);
    res.body() = std::move(body);
    res.prepare_payload();
    respond(std::move(res));
  };
  auto reply_json = [reply](http::status status, const Json& j) {
    reply(status, j.dump(2) + "\n", "application/json");
  };
  auto fail = [reply_json](http::status status, std::string_view code, std::string_view detail) {
    reply_json(status, Json{{"error", code}, {"detail", detail}});
  };

  std::string target(req.target());
  if (const auto q = target.find('?'); q != std::string::npos) target.resize(q);
  std::vector<std::string> path;
  for (std::size_t pos = 0; pos < target.size();) {
    const auto next = target.find('/', pos);
    const auto part = target.substr(pos, next == std::string::npos ? std::string::npos : next - pos);
    if (!part.empty()) path.push_back(part);
    if (next == std::string::npos) break;
    pos = next + 1;
  }
  const auto method = req.method();

  try {
    if (path == std::vector<std::string>{"health"} && method == http::verb::get) {
      reply_json(http::status::ok, Json{{"ok", true}});
      return;
    }
    if (path == std::vector<std::string>{"instruments"} && method == http::verb::get) {
      reply_json(http::status::ok, instruments_to_json(default_instruments()));
      return;
    }
    if (path == std::vector<std::string>{"sessions"}) {
      if (method == http::verb::post) {
        Json body;
        if (!req.body().empty()) {
          try {
            body = Json::parse(req.body());
          } catch (const nlohmann::json::exception&) {
            fail(http::status::bad_request, "ConfigError", "request body is not valid JSON");
            return;
          }
        }
        reply_json(http::status::created, create(body));
        return;
      }
      if (method == http::verb::get) {
        Json ids = Json::array();
        std::lock_guard lock(mutex_);
        for (const auto& [id, h] : hosts_) ids.push_back(id);
        reply_json(http::status::ok, Json{{"sessions", ids}});
        return;
      }
    }
    if (path.size() >= 2 && path.size() <= 3 && path[0] == "sessions") {
      const auto h = host(path[1]);
      if (!h) {
        fail(http::status::not_found, "NotFound", "no session " + path[1]);
        return;
      }
      const std::string sub = path.size() == 3 ? path[2] : "";
      if (method == http::verb::post && sub == "start") {
        net::post(h->strand, [h, reply_json] {
          h->deliver(h->session.start(h->now()));
          h->rearm();
          reply_json(http::status::ok, h->session.status());
        });
        return;
      }
      if (method == http::verb::get) {
        if (sub.empty()) {
          net::post(h->strand, [h, reply_json] { reply_json(http::status::ok, h->session.status()); });
          return;
        }
        std::function<std::string(const Session&)> body;
        const char* type = "text/csv";
        if (sub == "records") body = [](const Session& s) { return s.records_csv(); };
        if (sub == "population") body = [](const Session& s) { return s.population_csv(); };
        if (sub == "events") {
          body = [](const Session& s) { return events_to_jsonl(s.events()); };
          type = "application/x-ndjson";
        }
        if (sub == "outcomes") {
          body = [](const Session& s) { return outcomes_to_jsonl(s.outcomes()); };
          type = "application/x-ndjson";
        }
        if (body) {
          net::post(h->strand, [h, reply, body, type] { reply(http::status::ok, body(h->session), type); });
          return;
        }
      }
    }
    fail(http::status::not_found, "NotFound", "no route for " + std::string(req.method_string()) + " " + target);
  } catch (const Error& e) {
    const bool client = e.code() == ErrorCode::ConfigError || e.code() == ErrorCode::PlanError;
    fail(client ? http::status::bad_request : http::status::internal_server_error, to_string(e.code()), e.what());
  } catch (const std::exception& e) {
    fail(http::status::internal_server_error, "Internal", e.what());
  }
}

}  // namespace

struct Server::Impl {
  explicit Impl(ServeOptions options) : core(std::move(options)) {}
  ServerCore core;
};

Server::Server(ServeOptions options) : impl_(std::make_unique<Impl>(std::move(options))) {}
Server::~Server() = default;
void Server::start() { impl_->core.start(); }
void Server::stop() { impl_->core.stop(); }
unsigned short Server::port() const { return impl_->core.port(); }
Json Server::create_session(const Json& request) { return impl_->core.create(request); }

int run_server(const ServeOptions& options) {
  Server server(options);
  server.start();
  std::cout << "listening on " << options.address << ":" << server.port() << std::endl;
  if (options.bots || options.seed || !options.plan_path.empty()) {
    Json req{{"server_bots", options.bots.value_or(0)}};
    const auto created = server.create_session(req);
    std::cout << "session " << created["session_id"].get<std::string>() << "\n";
    for (const auto& [subject, token] : created["tokens"].items()) {
      std::cout << "  " << subject << " " << token.get<std::string>() << "\n";
    }
    std::cout << std::flush;
  }
  net::io_context signals_ioc;
  net::signal_set signals(signals_ioc, SIGINT, SIGTERM);
  signals.async_wait([](beast::error_code, int) {});
  signals_ioc.run();
  server.stop();
  return 0;
}

}  // namespace ctlab
