#pragma once

#include <memory>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "flightfix/geometry.hpp"
#include "flightfix/paramdb.hpp"

namespace flightfix {

/// One timestamped telemetry reading.
struct FlightSample {
  double t = 0.0;  // seconds since mission start
  Vec3 pos;        // m, local east/north/up
  Vec3 vel;        // m/s
  double alt = 0.0;  // m above ground, == pos.z
  /// Roll/pitch/yaw, carried opaquely and never read by the detectors.
  std::optional<Vec3> attitude;

  double speed() const { return vel.norm(); }
  bool operator==(const FlightSample&) const = default;
};

/// Free-form message from the flight stack.
struct StatusText {
  double t = 0.0;
  std::string text;
  bool operator==(const StatusText&) const = default;
};

struct WaypointReached {
  double t = 0.0;
  int index = 0;
  bool operator==(const WaypointReached&) const = default;
};

struct Landed {
  double t = 0.0;
  bool operator==(const Landed&) const = default;
};

struct MissionTimeout {
  double t = 0.0;
  bool operator==(const MissionTimeout&) const = default;
};

using TelemetryEvent = std::variant<FlightSample, StatusText, WaypointReached, Landed, MissionTimeout>;

double event_time(const TelemetryEvent& event);

struct MissionPlan {
  std::vector<Vec3> waypoints;
  double cruise_speed = 5.0;  // m/s

  /// Throws ValidationError if there are fewer than two waypoints, two
  /// consecutive waypoints coincide, or the cruise speed is not positive.
  void check() const;
};

nlohmann::json to_json(const MissionPlan& plan);
MissionPlan plan_from_json(const nlohmann::json& doc);

struct FinalStatus {
  enum class Kind { LandedAtDestination, Crashed, Aborted };
  Kind kind = Kind::Aborted;
  std::string reason;  // set for Aborted

  static FinalStatus landed() { return {Kind::LandedAtDestination, {}}; }
  static FinalStatus crashed() { return {Kind::Crashed, {}}; }
  static FinalStatus aborted(std::string why) { return {Kind::Aborted, std::move(why)}; }

  std::string to_string() const;
  bool operator==(const FinalStatus&) const = default;
};

struct UploadAck {
  double effective_t = 0.0;  // new values govern every step with t > effective_t
};

/// Live mission on some vehicle. Single consumer: use from one logical
/// thread at a time.
class MissionHandle {
 public:
  virtual ~MissionHandle() = default;

  /// Next event in t order; std::nullopt once the stream is closed.
  virtual std::optional<TelemetryEvent> next_event() = 0;

  /// Atomically apply `fix` on top of the live configuration. Throws
  /// StaleHandle after the mission ended and ValidationError for unknown
  /// names or out-of-range values.
  virtual UploadAck upload_params(const ParamSet& fix) = 0;

  /// Close the stream. Idempotent: later calls return the first result.
  virtual FinalStatus stop() = 0;

  /// True once the vehicle landed, crashed, timed out, or stop() was called.
  virtual bool ended() const = 0;

  /// True when the link runs on virtual time that does not advance while the
  /// consumer is busy (in-process simulation).
  virtual bool virtual_time() const { return false; }
};

/// Source of missions: the in-process simulator or a wire-protocol vehicle.
class VehicleLink {
 public:
  virtual ~VehicleLink() = default;

  /// Throws ValidationError (mission never starts) for parameters that fail
  /// registry validation or an invalid plan; ConnectionError when the
  /// vehicle cannot be reached.
  virtual std::unique_ptr<MissionHandle> start_mission(const ParamSet& params, const MissionPlan& plan) = 0;
};

inline std::unique_ptr<MissionHandle> start_mission(VehicleLink& link, const ParamSet& params,
                                                    const MissionPlan& plan) {
  return link.start_mission(params, plan);
}
inline UploadAck upload_params(MissionHandle& handle, const ParamSet& fix) { return handle.upload_params(fix); }
inline FinalStatus stop_mission(MissionHandle& handle) { return handle.stop(); }

/// WGS84 geodetic coordinates, degrees and meters above the ellipsoid.
struct Geodetic {
  double lat_deg = 0.0;
  double lon_deg = 0.0;
  double alt_m = 0.0;
};

/// Converts a geodetic fix to east/north/up meters relative to `origin`.
/// Used to ingest external logs into the local frame.
Vec3 geodetic_to_enu(const Geodetic& origin, const Geodetic& point);

}  // namespace flightfix
