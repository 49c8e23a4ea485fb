#pragma once

#include <array>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "flightfix/telemetry.hpp"

namespace flightfix {

enum class AnomalyType { Deviation, ThrustLoss, Timeout, Crash };

inline constexpr std::array kAllAnomalyTypes{AnomalyType::Deviation, AnomalyType::ThrustLoss, AnomalyType::Timeout,
                                             AnomalyType::Crash};

/// Display name used in prompts and reports ("Thrust Loss").
std::string_view display_name(AnomalyType type);
/// Identifier used in files ("thrust_loss").
std::string_view to_id(AnomalyType type);
/// Accepts either form.
std::optional<AnomalyType> anomaly_from_string(std::string_view text);

struct DetectorConfig {
  double deviation_threshold_m = 10.0;
  int deviation_consecutive = 10;
  double timeout_speed_mps = 1.0;
  double timeout_alt_delta_m = 0.2;
  int timeout_consecutive = 6;
  double crash_impact_speed_mps = 3.0;
  std::string thrust_loss_keyword = "Potential Thrust Loss";
  std::vector<std::string> crash_keywords = {"SIM Hit ground", "Crash"};
  /// Refractory period before the same detector may fire again.
  double cooldown_s = 5.0;
  /// Timeout is not evaluated before this mission time (takeoff).
  double takeoff_grace_s = 5.0;

  /// Throws ConfigError on non-positive thresholds or counts below one.
  void check() const;
};

nlohmann::json to_json(const DetectorConfig& config);
/// Missing keys keep their defaults.
DetectorConfig detector_config_from_json(const nlohmann::json& doc);

struct AnomalyEvent {
  double t = 0.0;
  AnomalyType kind = AnomalyType::Deviation;
  std::string detail;
};

/// Incremental state for one mission's detectors.
struct DetectorState {
  explicit DetectorState(const MissionPlan& plan);

  int deviation_run = 0;
  int stationary_run = 0;
  std::optional<double> last_alt;
  std::optional<double> last_speed;
  std::optional<Vec3> last_pos;
  /// Indices of the waypoints bounding the leg currently flown.
  int leg_from = 0;
  int leg_to = 1;
  int waypoint_count = 0;
  /// Set once the final waypoint is reached; deviation is then measured
  /// against the vertical descent line below it.
  bool landing = false;
  bool landed = false;
  std::array<double, 4> cooldown_until{-1.0, -1.0, -1.0, -1.0};
  /// Fired events are withheld (counters still advance) while true.
  bool suppressed = false;
};

/// Marks `reached` as passed and moves to the next leg. Throws ProtocolError
/// unless `reached` is the current target.
void advance_leg(DetectorState& state, int reached);

/// Cross-track distance of `pos` from the leg (or descent line) currently active.
double cross_track_distance(const DetectorState& state, const MissionPlan& plan, const Vec3& pos);

/// Feeds one event through the four detectors. At most one anomaly per call.
std::optional<AnomalyEvent> update(DetectorState& state, const DetectorConfig& config, const TelemetryEvent& event,
                                   const MissionPlan& plan);

/// Offline scan of a full event sequence.
std::vector<AnomalyEvent> detect_all(const std::vector<TelemetryEvent>& events, const DetectorConfig& config,
                                     const MissionPlan& plan);

}  // namespace flightfix
