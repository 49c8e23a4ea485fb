#pragma once

// Newline-delimited JSON telemetry protocol.
//
// Vehicle -> harness frames carry a "type" discriminator:
//   sample, status, waypoint_reached, landed, mission_timeout   (telemetry)
//   started, ack, error, final_status, stream_end              (replies)
// Harness -> vehicle frames:
//   start_mission, upload_params, tick, stop
//
// When start_mission asks for lockstep and the vehicle's "started" reply
// confirms it, the vehicle streams only up to the next sample per tick.
//
// One UTF-8 JSON object per '\n'-terminated line; numbers are doubles.

#include <chrono>
#include <filesystem>
#include <functional>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "flightfix/telemetry.hpp"

namespace flightfix {

namespace wire {

/// Canonical single-line encoding (no trailing newline).
std::string encode(const TelemetryEvent& event);

/// Parses one telemetry frame. Throws ProtocolError on malformed input,
/// unknown types, or broken FlightSample/StatusText invariants. When
/// `origin` is given, samples may carry "geo":[lat,lon,alt] instead of
/// "pos" and are converted to the local frame.
TelemetryEvent decode(std::string_view line, const Geodetic* origin = nullptr);

bool is_telemetry_type(std::string_view type);

}  // namespace wire

/// Bidirectional line channel over a pair of file descriptors. Owns both.
class LineChannel {
 public:
  LineChannel(int read_fd, int write_fd);
  ~LineChannel();
  LineChannel(const LineChannel&) = delete;
  LineChannel& operator=(const LineChannel&) = delete;

  /// Blocks until a full line arrives; false on EOF. A negative timeout waits
  /// forever; on timeout returns false with timed_out() set.
  bool read_line(std::string& line, std::chrono::milliseconds timeout = std::chrono::milliseconds(-1));
  bool timed_out() const { return timed_out_; }
  /// True if a complete line is already buffered or the fd is readable now.
  bool poll_readable(std::chrono::milliseconds timeout);

  /// Throws ConnectionError when the peer is gone.
  void write_line(std::string_view line);

  /// Closes the write side so the peer sees EOF.
  void shutdown_write();
  /// Unblocks a reader stuck in read_line.
  void shutdown_read();

 private:
  int read_fd_;
  int write_fd_;
  bool same_fd_;
  std::string buffer_;
  bool eof_ = false;
  bool timed_out_ = false;
};

/// Opens a fresh channel per mission.
class Connector {
 public:
  virtual ~Connector() = default;
  virtual std::unique_ptr<LineChannel> connect() = 0;
};

/// TCP client; ConnectionError when nothing listens or the timeout expires.
std::unique_ptr<Connector> tcp_connector(std::string host, int port,
                                         std::chrono::milliseconds connect_timeout = std::chrono::seconds(5));

/// Spawns `argv` and talks to it over its stdin/stdout.
std::unique_ptr<Connector> subprocess_connector(std::vector<std::string> argv);

struct WireLinkOptions {
  std::chrono::milliseconds reply_timeout{10000};
  /// Request lockstep streaming so the vehicle never runs ahead of the consumer.
  bool lockstep = true;
};

/// VehicleLink speaking the wire protocol to an external vehicle process.
class WireLink : public VehicleLink {
 public:
  WireLink(std::unique_ptr<Connector> connector, const ParamRegistry& registry, WireLinkOptions options = {});

  std::unique_ptr<MissionHandle> start_mission(const ParamSet& params, const MissionPlan& plan) override;

 private:
  std::unique_ptr<Connector> connector_;
  const ParamRegistry& registry_;
  WireLinkOptions options_;
};

struct ServeOptions {
  /// Virtual seconds simulated per wall-clock second; <= 0 runs unpaced.
  double realtime_factor = 0.0;
  /// Seconds of virtual time between samples (pacing granularity).
  double sample_period = 0.1;
  /// Serve missions until EOF instead of exiting after the first one.
  bool keep_serving = false;
};

/// Vehicle side of the protocol: exposes `link` over `channel`.
void serve_wire(VehicleLink& link, LineChannel& channel, const ServeOptions& options);

/// Accepts one TCP client on `port` (0 picks a free port) and serves it.
/// `on_listening` receives the bound port before accept() blocks.
void serve_wire_tcp(VehicleLink& link, int port, const ServeOptions& options,
                    const std::function<void(int)>& on_listening = {});

}  // namespace flightfix
