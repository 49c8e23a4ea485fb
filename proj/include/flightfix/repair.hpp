#pragma once

#include <optional>
#include <string>
#include <vector>

#include "flightfix/advisor.hpp"
#include "flightfix/anomaly.hpp"
#include "flightfix/paramdb.hpp"
#include "flightfix/telemetry.hpp"

namespace flightfix {

struct OrchestratorConfig {
  int repair_limit = 5;
  /// Mission time budget in seconds of stream time.
  double mission_timeout_s = 600.0;

  void check() const;
};

nlohmann::json to_json(const OrchestratorConfig& config);
OrchestratorConfig orchestrator_config_from_json(const nlohmann::json& doc);

enum class FailReason { None, RepairLimit, Timeout, Crash, Aborted, Infra };

std::string_view to_string(FailReason reason);

struct MissionResult {
  bool passed = false;
  FailReason reason = FailReason::None;

  static MissionResult pass() { return {true, FailReason::None}; }
  static MissionResult fail(FailReason r) { return {false, r}; }
  /// "passed" or "failed(<reason>)".
  std::string to_string() const;
  static MissionResult from_string(std::string_view text);
  bool operator==(const MissionResult&) const = default;
};

/// One serviced detection: when it fired and, if the fix reached the
/// vehicle, when it took effect.
struct RepairMarker {
  double t_anomaly = 0.0;
  std::optional<double> t_upload;
  AnomalyType kind = AnomalyType::Deviation;
  std::string detail;
};

struct RepairRecord {
  ParamSet p_initial;
  MissionResult result;
  std::vector<AnomalyType> anomaly_record;
  int repair_count = 0;
  /// Failed advisor attempts leave an entry with empty updates.
  std::vector<RepairAdvice> advice_log;
  ParamSet final_params;

  std::vector<RepairMarker> markers;
  /// Crash observed after ground impact; ends the mission without a repair.
  std::optional<AnomalyType> terminal_anomaly;
  std::optional<FinalStatus> final_status;
  std::string detail;
  /// Event times were non-decreasing throughout.
  bool time_ordered = true;
  long events_consumed = 0;
  /// Full event stream, kept only when requested.
  std::vector<TelemetryEvent> trace;
};

nlohmann::json to_json(const RepairRecord& record);

struct MissionOptions {
  AuditLog* audit = nullptr;
  bool keep_trace = false;
};

/// Runs one mission under the monitor-and-repair loop. Link errors raised
/// before the mission starts propagate; everything afterwards is reported in
/// the record.
RepairRecord run_mission(VehicleLink& link, const ParamSet& p_initial, const MissionPlan& plan, Advisor& advisor,
                         const DetectorConfig& detectors, const OrchestratorConfig& config,
                         const ParamRegistry& registry, const MissionOptions& options = {});

}  // namespace flightfix
