#include <arpa/inet.h>
#include <csignal>
#include <fcntl.h>
#include <netdb.h>
#include <netinet/in.h>
#include <poll.h>
#include <sys/socket.h>
#include <sys/types.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <condition_variable>
#include <cstring>
#include <deque>
#include <map>
#include <mutex>
#include <thread>

#include "flightfix/errors.hpp"
#include "flightfix/wire.hpp"

namespace flightfix {

using namespace std::chrono_literals;
using ojson = nlohmann::ordered_json;

// ---------------------------------------------------------------------------
// LineChannel

LineChannel::LineChannel(int read_fd, int write_fd)
    : read_fd_(read_fd), write_fd_(write_fd), same_fd_(read_fd == write_fd) {}

LineChannel::~LineChannel() {
  if (read_fd_ >= 0) ::close(read_fd_);
  if (!same_fd_ && write_fd_ >= 0) ::close(write_fd_);
}

bool LineChannel::poll_readable(std::chrono::milliseconds timeout) {
  if (buffer_.find('\n') != std::string::npos || eof_) return true;
  pollfd pfd{read_fd_, POLLIN, 0};
  int rc;
  do {
    rc = ::poll(&pfd, 1, static_cast<int>(timeout.count()));
  } while (rc < 0 && errno == EINTR);
  return rc > 0;
}

bool LineChannel::read_line(std::string& line, std::chrono::milliseconds timeout) {
  timed_out_ = false;
  const auto deadline = std::chrono::steady_clock::now() + timeout;
  for (;;) {
    if (auto nl = buffer_.find('\n'); nl != std::string::npos) {
      line.assign(buffer_, 0, nl);
      if (!line.empty() && line.back() == '\r') line.pop_back();
      buffer_.erase(0, nl + 1);
      return true;
    }
    if (eof_) return false;
    if (timeout.count() >= 0) {
      const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - std::chrono::steady_clock::now());
      if (left.count() <= 0 || !poll_readable(left)) {
        timed_out_ = true;
        return false;
      }
    }
    char chunk[4096];
    const ssize_t n = ::read(read_fd_, chunk, sizeof(chunk));
    if (n < 0 && errno == EINTR) continue;
    if (n <= 0) {
      eof_ = true;
      continue;
    }
    buffer_.append(chunk, static_cast<std::size_t>(n));
  }
}

void LineChannel::write_line(std::string_view line) {
  std::string out(line);
  out.push_back('\n');
  std::size_t off = 0;
  while (off < out.size()) {
    const ssize_t n = same_fd_ ? ::send(write_fd_, out.data() + off, out.size() - off, MSG_NOSIGNAL)
                               : ::write(write_fd_, out.data() + off, out.size() - off);
    if (n < 0 && errno == EINTR) continue;
    if (n <= 0) throw ConnectionError(std::string("write failed: ") + std::strerror(errno));
    off += static_cast<std::size_t>(n);
  }
}

void LineChannel::shutdown_write() {
  if (same_fd_) {
    ::shutdown(write_fd_, SHUT_WR);
  } else if (write_fd_ >= 0) {
    ::close(write_fd_);
    write_fd_ = -1;
  }
}

void LineChannel::shutdown_read() {
  if (same_fd_) ::shutdown(read_fd_, SHUT_RD);
}

// ---------------------------------------------------------------------------
// Connectors

namespace {

class TcpConnector : public Connector {
 public:
  TcpConnector(std::string host, int port, std::chrono::milliseconds timeout)
      : host_(std::move(host)), port_(port), timeout_(timeout) {}

  std::unique_ptr<LineChannel> connect() override {
    addrinfo hints{};
    hints.ai_family = AF_UNSPEC;
    hints.ai_socktype = SOCK_STREAM;
    addrinfo* res = nullptr;
    const std::string port = std::to_string(port_);
    if (int rc = ::getaddrinfo(host_.c_str(), port.c_str(), &hints, &res); rc != 0)
      throw ConnectionError("cannot resolve " + host_ + ": " + ::gai_strerror(rc));
    std::unique_ptr<addrinfo, decltype(&::freeaddrinfo)> guard(res, &::freeaddrinfo);

    std::string last_error = "no address";
    for (addrinfo* ai = res; ai; ai = ai->ai_next) {
      int fd = ::socket(ai->ai_family, ai->ai_socktype | SOCK_CLOEXEC, ai->ai_protocol);
      if (fd < 0) continue;
      const int flags = ::fcntl(fd, F_GETFL, 0);
      ::fcntl(fd, F_SETFL, flags | O_NONBLOCK);
      int rc = ::connect(fd, ai->ai_addr, ai->ai_addrlen);
      if (rc < 0 && errno == EINPROGRESS) {
        pollfd pfd{fd, POLLOUT, 0};
        rc = ::poll(&pfd, 1, static_cast<int>(timeout_.count()));
        if (rc == 0) {
          ::close(fd);
          last_error = "connect timed out";
          continue;
        }
        int err = 0;
        socklen_t len = sizeof(err);
        ::getsockopt(fd, SOL_SOCKET, SO_ERROR, &err, &len);
        rc = err == 0 ? 0 : -1;
        errno = err;
      }
      if (rc == 0) {
        ::fcntl(fd, F_SETFL, flags);
        return std::make_unique<LineChannel>(fd, fd);
      }
      last_error = std::strerror(errno);
      ::close(fd);
    }
    throw ConnectionError("cannot connect to " + host_ + ":" + port + ": " + last_error);
  }

 private:
  std::string host_;
  int port_;
  std::chrono::milliseconds timeout_;
};

/// Channel that also owns the child process it talks to.
class ProcessChannel : public LineChannel {
 public:
  ProcessChannel(int read_fd, int write_fd, pid_t pid) : LineChannel(read_fd, write_fd), pid_(pid) {}
  ~ProcessChannel() {
    shutdown_write();
    int status = 0;
    for (int i = 0; i < 200; ++i) {
      if (::waitpid(pid_, &status, WNOHANG) == pid_) return;
      std::this_thread::sleep_for(10ms);
    }
    ::kill(pid_, SIGKILL);
    ::waitpid(pid_, &status, 0);
  }

 private:
  pid_t pid_;
};

class SubprocessConnector : public Connector {
 public:
  explicit SubprocessConnector(std::vector<std::string> argv) : argv_(std::move(argv)) {}

  std::unique_ptr<LineChannel> connect() override {
    if (argv_.empty()) throw ConnectionError("empty subprocess command");
    static const bool sigpipe_ignored = [] {
      ::signal(SIGPIPE, SIG_IGN);
      return true;
    }();
    (void)sigpipe_ignored;
    int to_child[2], from_child[2];
    if (::pipe2(to_child, O_CLOEXEC) != 0) throw ConnectionError("pipe failed");
    if (::pipe2(from_child, O_CLOEXEC) != 0) {
      ::close(to_child[0]);
      ::close(to_child[1]);
      throw ConnectionError("pipe failed");
    }
    std::vector<char*> args;
    for (auto& a : argv_) args.push_back(a.data());
    args.push_back(nullptr);

    const pid_t pid = ::fork();
    if (pid < 0) throw ConnectionError("fork failed");
    if (pid == 0) {
      ::dup2(to_child[0], STDIN_FILENO);
      ::dup2(from_child[1], STDOUT_FILENO);
      ::execvp(args[0], args.data());
      ::_exit(127);
    }
    ::close(to_child[0]);
    ::close(from_child[1]);
    return std::make_unique<ProcessChannel>(from_child[0], to_child[1], pid);
  }

 private:
  std::vector<std::string> argv_;
};

}  // namespace

std::unique_ptr<Connector> tcp_connector(std::string host, int port, std::chrono::milliseconds connect_timeout) {
  return std::make_unique<TcpConnector>(std::move(host), port, connect_timeout);
}

std::unique_ptr<Connector> subprocess_connector(std::vector<std::string> argv) {
  return std::make_unique<SubprocessConnector>(std::move(argv));
}

// ---------------------------------------------------------------------------
// Harness side

namespace {

FinalStatus final_status_from(const nlohmann::json& doc) {
  const std::string status = doc.value("status", std::string("aborted"));
  if (status == "landed") return FinalStatus::landed();
  if (status == "crashed") return FinalStatus::crashed();
  return FinalStatus::aborted(doc.value("reason", std::string("unknown")));
}

nlohmann::json final_status_json(const FinalStatus& s) {
  nlohmann::json out{{"type", "final_status"}};
  switch (s.kind) {
    case FinalStatus::Kind::LandedAtDestination:
      out["status"] = "landed";
      break;
    case FinalStatus::Kind::Crashed:
      out["status"] = "crashed";
      break;
    case FinalStatus::Kind::Aborted:
      out["status"] = "aborted";
      out["reason"] = s.reason;
      break;
  }
  return out;
}

class WireMission : public MissionHandle {
 public:
  WireMission(std::unique_ptr<LineChannel> channel, const ParamRegistry& registry, WireLinkOptions options)
      : channel_(std::move(channel)), registry_(registry), options_(options) {}

  ~WireMission() override {
    if (!final_) {
      try {
        stop();
      } catch (...) {
      }
    }
    channel_->shutdown_read();
    channel_->shutdown_write();
    if (reader_.joinable()) reader_.join();
  }

  /// Sends start_mission and waits for the vehicle to accept it.
  void start(const ParamSet& params, const MissionPlan& plan) {
    channel_->write_line(nlohmann::json{{"type", "start_mission"}, {"params", to_json(params)},
                                        {"plan", to_json(plan)}, {"lockstep", options_.lockstep}}
                             .dump());
    std::string line;
    if (!channel_->read_line(line, options_.reply_timeout))
      throw ConnectionError(channel_->timed_out() ? "vehicle did not answer start_mission"
                                                  : "vehicle closed the connection");
    const auto doc = parse_reply(line);
    if (doc.value("type", "") == "error") raise(doc);
    if (doc.value("type", "") != "started") throw ProtocolError("expected 'started', got: " + line);
    lockstep_ = options_.lockstep && doc.value("lockstep", false);
    reader_ = std::thread([this] { read_loop(); });
  }

  std::optional<TelemetryEvent> next_event() override {
    std::unique_lock lock(mu_);
    if (lockstep_ && events_.empty() && !stream_closed_ && !stream_done_ && !tick_pending_) {
      tick_pending_ = true;
      lock.unlock();
      try {
        channel_->write_line(R"({"type":"tick"})");
      } catch (const ConnectionError&) {
      }
      lock.lock();
    }
    cv_.wait(lock, [&] { return !events_.empty() || stream_closed_ || stream_done_; });
    if (events_.empty()) {
      if (reader_error_) {
        auto err = reader_error_;
        reader_error_ = nullptr;
        std::rethrow_exception(err);
      }
      return std::nullopt;
    }
    TelemetryEvent ev = std::move(events_.front());
    events_.pop_front();
    if (std::holds_alternative<Landed>(ev) || std::holds_alternative<MissionTimeout>(ev)) consumer_ended_ = true;
    return ev;
  }

  UploadAck upload_params(const ParamSet& fix) override {
    if (ended()) throw StaleHandle("mission already ended");
    require_valid(registry_, fix);
    std::unique_lock lock(mu_);
    const int seq = ++next_seq_;
    lock.unlock();
    channel_->write_line(nlohmann::json{{"type", "upload_params"}, {"seq", seq}, {"params", to_json(fix)}}.dump());
    lock.lock();
    if (!cv_.wait_for(lock, options_.reply_timeout, [&] { return replies_.count(seq) || stream_closed_; }))
      throw ConnectionError("vehicle did not acknowledge upload_params");
    auto it = replies_.find(seq);
    if (it == replies_.end()) throw StaleHandle("connection closed before acknowledgment");
    const auto doc = it->second;
    replies_.erase(it);
    lock.unlock();
    if (doc.value("type", "") == "error") raise(doc);
    return UploadAck{doc.value("t", 0.0)};
  }

  FinalStatus stop() override {
    {
      std::lock_guard lock(mu_);
      if (stopped_) return *final_;
      stopped_ = true;
      if (!reader_.joinable()) {
        final_ = FinalStatus::aborted("not started");
        return *final_;
      }
    }
    try {
      channel_->write_line(R"({"type":"stop"})");
    } catch (const ConnectionError&) {
      final_ = FinalStatus::aborted("connection lost");
      return *final_;
    }
    std::unique_lock lock(mu_);
    cv_.wait_for(lock, options_.reply_timeout, [&] { return remote_final_.has_value() || stream_closed_; });
    final_ = remote_final_.value_or(FinalStatus::aborted("connection lost"));
    return *final_;
  }

  bool ended() const override {
    std::lock_guard lock(mu_);
    return stopped_ || consumer_ended_ || remote_final_.has_value();
  }

 private:
  static nlohmann::json parse_reply(const std::string& line) {
    try {
      auto doc = nlohmann::json::parse(line);
      if (!doc.is_object()) throw ProtocolError("reply is not an object");
      return doc;
    } catch (const nlohmann::json::parse_error& ex) {
      throw ProtocolError(std::string("malformed reply: ") + ex.what());
    }
  }

  [[noreturn]] static void raise(const nlohmann::json& doc) {
    const std::string kind = doc.value("kind", "");
    const std::string msg = doc.value("message", "vehicle error");
    if (kind == "validation") throw ValidationError(msg);
    if (kind == "stale") throw StaleHandle(msg);
    throw ProtocolError(msg);
  }

  void read_loop() {
    std::string line;
    try {
      while (channel_->read_line(line)) {
        if (line.empty()) continue;
        auto doc = parse_reply(line);
        const std::string type = doc.value("type", "");
        std::lock_guard lock(mu_);
        if (wire::is_telemetry_type(type)) {
          if (type == "sample") tick_pending_ = false;
          events_.push_back(wire::decode(line));
        } else if (type == "stream_end") {
          stream_done_ = true;
          tick_pending_ = false;
        } else if (type == "ack" || type == "error") {
          const int seq = doc.value("seq", 0);
          replies_[seq] = std::move(doc);
        } else if (type == "final_status") {
          remote_final_ = final_status_from(doc);
        }
        cv_.notify_all();
      }
    } catch (...) {
      std::lock_guard lock(mu_);
      reader_error_ = std::current_exception();
    }
    std::lock_guard lock(mu_);
    stream_closed_ = true;
    cv_.notify_all();
  }

  std::unique_ptr<LineChannel> channel_;
  const ParamRegistry& registry_;
  WireLinkOptions options_;
  std::thread reader_;

  mutable std::mutex mu_;
  std::condition_variable cv_;
  std::deque<TelemetryEvent> events_;
  std::map<int, nlohmann::json> replies_;
  std::optional<FinalStatus> remote_final_;
  std::exception_ptr reader_error_;
  bool stream_closed_ = false;
  bool consumer_ended_ = false;
  bool stream_done_ = false;
  bool lockstep_ = false;
  bool tick_pending_ = false;
  int next_seq_ = 0;

  bool stopped_ = false;
  std::optional<FinalStatus> final_;
};

}  // namespace

WireLink::WireLink(std::unique_ptr<Connector> connector, const ParamRegistry& registry, WireLinkOptions options)
    : connector_(std::move(connector)), registry_(registry), options_(options) {}

std::unique_ptr<MissionHandle> WireLink::start_mission(const ParamSet& params, const MissionPlan& plan) {
  require_valid(registry_, params);
  plan.check();
  auto mission = std::make_unique<WireMission>(connector_->connect(), registry_, options_);
  mission->start(params, plan);
  return mission;
}

// ---------------------------------------------------------------------------
// Vehicle side

namespace {

nlohmann::json error_reply(int seq, const char* kind, const std::string& message) {
  return {{"type", "error"}, {"seq", seq}, {"kind", kind}, {"message", message}};
}

/// Handles one command while a mission is live. Returns false on stop.
bool handle_command(const nlohmann::json& cmd, MissionHandle* mission, LineChannel& channel, int* credit = nullptr) {
  const std::string type = cmd.value("type", "");
  const int seq = cmd.value("seq", 0);
  if (type == "tick") {
    if (credit) ++*credit;
    return true;
  }
  if (type == "upload_params") {
    if (!mission) {
      channel.write_line(error_reply(seq, "stale", "no active mission").dump());
      return true;
    }
    try {
      const auto ack = mission->upload_params(param_set_from_json(cmd.at("params")));
      channel.write_line(nlohmann::json{{"type", "ack"}, {"seq", seq}, {"t", ack.effective_t}}.dump());
    } catch (const StaleHandle& ex) {
      channel.write_line(error_reply(seq, "stale", ex.what()).dump());
    } catch (const ValidationError& ex) {
      channel.write_line(error_reply(seq, "validation", ex.what()).dump());
    }
    return true;
  }
  if (type == "stop") {
    const FinalStatus status = mission ? mission->stop() : FinalStatus::aborted("no mission");
    channel.write_line(final_status_json(status).dump());
    return false;
  }
  channel.write_line(error_reply(seq, "protocol", "unexpected command '" + type + "'").dump());
  return true;
}

}  // namespace

void serve_wire(VehicleLink& link, LineChannel& channel, const ServeOptions& options) {
  std::string line;
  do {
    // Wait for start_mission.
    std::unique_ptr<MissionHandle> mission;
    bool lockstep = false;
    while (!mission) {
      if (!channel.read_line(line)) return;
      if (line.empty()) continue;
      nlohmann::json cmd;
      try {
        cmd = nlohmann::json::parse(line);
      } catch (const nlohmann::json::parse_error& ex) {
        channel.write_line(error_reply(0, "protocol", ex.what()).dump());
        continue;
      }
      if (cmd.value("type", "") != "start_mission") {
        if (!handle_command(cmd, nullptr, channel)) continue;
        continue;
      }
      try {
        const auto params = param_set_from_json(cmd.at("params"));
        const auto plan = plan_from_json(cmd.at("plan"));
        mission = link.start_mission(params, plan);
        lockstep = cmd.value("lockstep", false);
        channel.write_line(nlohmann::json{{"type", "started"}, {"lockstep", lockstep}}.dump());
      } catch (const ValidationError& ex) {
        channel.write_line(error_reply(0, "validation", ex.what()).dump());
      } catch (const nlohmann::json::exception& ex) {
        channel.write_line(error_reply(0, "validation", ex.what()).dump());
      }
    }

    const auto wall_start = std::chrono::steady_clock::now();
    bool streaming = true;
    bool running = true;
    int credit = 0;
    while (running) {
      // Drain pending commands without blocking the stream.
      std::chrono::milliseconds wait{0};
      if (!streaming || (lockstep && credit == 0)) wait = std::chrono::milliseconds(-1);
      while (channel.poll_readable(wait)) {
        if (!channel.read_line(line)) {
          mission->stop();
          return;
        }
        wait = std::chrono::milliseconds(0);
        if (line.empty()) continue;
        nlohmann::json cmd;
        try {
          cmd = nlohmann::json::parse(line);
        } catch (const nlohmann::json::parse_error& ex) {
          channel.write_line(error_reply(0, "protocol", ex.what()).dump());
          continue;
        }
        if (!handle_command(cmd, mission.get(), channel, &credit)) {
          running = false;
          break;
        }
      }
      if (!running || !streaming || (lockstep && credit == 0)) continue;

      auto ev = mission->next_event();
      if (!ev) {
        streaming = false;
        channel.write_line(R"({"type":"stream_end"})");
        continue;
      }
      if (lockstep && std::holds_alternative<FlightSample>(*ev)) --credit;
      if (options.realtime_factor > 0.0 && std::holds_alternative<FlightSample>(*ev)) {
        const auto due = wall_start + std::chrono::duration_cast<std::chrono::steady_clock::duration>(
                                          std::chrono::duration<double>(event_time(*ev) / options.realtime_factor));
        std::this_thread::sleep_until(due);
      }
      channel.write_line(wire::encode(*ev));
    }
  } while (options.keep_serving);
}

void serve_wire_tcp(VehicleLink& link, int port, const ServeOptions& options,
                    const std::function<void(int)>& on_listening) {
  const int listener = ::socket(AF_INET, SOCK_STREAM | SOCK_CLOEXEC, 0);
  if (listener < 0) throw ConnectionError("socket failed");
  const int one = 1;
  ::setsockopt(listener, SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
  addr.sin_port = htons(static_cast<uint16_t>(port));
  if (::bind(listener, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0 || ::listen(listener, 1) != 0) {
    ::close(listener);
    throw ConnectionError(std::string("cannot listen: ") + std::strerror(errno));
  }
  socklen_t len = sizeof(addr);
  ::getsockname(listener, reinterpret_cast<sockaddr*>(&addr), &len);
  if (on_listening) on_listening(ntohs(addr.sin_port));
  const int fd = ::accept4(listener, nullptr, nullptr, SOCK_CLOEXEC);
  ::close(listener);
  if (fd < 0) throw ConnectionError("accept failed");
  LineChannel channel(fd, fd);
  serve_wire(link, channel, options);
}

}  // namespace flightfix
