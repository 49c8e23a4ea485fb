#pragma once

// Deterministic kinematic flight simulator with parameter-driven faults.
//
// The vehicle tracks the mission polyline at cruise speed. Each fault-table
// parameter belongs to one anomaly class; the class severity is the largest
// member severity, |value - optimal| / (0.25 * (max - min)). Fault effects:
//
//   Deviation   lateral oscillation, amplitude 12 m per unit severity
//   ThrustLoss  severity >= 1: "Potential Thrust Loss" every 2 s, climb capped
//   Timeout     severity >= 1: track speed collapses to 0.4 m/s
//   Crash       porpoising with sink-rate amplitude 4 m/s per unit severity;
//               "Crash risk" warning whenever sink exceeds 3.8 m/s
//
// Oscillation amplitudes follow their target with a 2 s time constant, so a
// corrected parameter decays smoothly instead of jumping. A class whose
// severity reaches 2 latches (controller wind-up): it keeps at least
// severity 1.2 until every member is back within 0.1 of optimal. A latched
// crash class also sags 0.15 m/s and loses control below 4 m.

#include <array>
#include <cstdint>
#include <deque>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "flightfix/anomaly.hpp"
#include "flightfix/paramdb.hpp"
#include "flightfix/telemetry.hpp"

namespace flightfix {

struct FaultEntry {
  std::string param;
  double optimal = 0.0;
  AnomalyType anomaly = AnomalyType::Deviation;
};

/// Which parameters drive which anomaly class, and their known-good values.
class FaultTable {
 public:
  FaultTable() = default;
  explicit FaultTable(std::vector<FaultEntry> entries);

  /// Two or more parameters per class, matching data/registry.json.
  static FaultTable builtin();
  static FaultTable from_json(const nlohmann::json& doc);
  nlohmann::json to_json() const;

  const std::vector<FaultEntry>& entries() const { return entries_; }
  const FaultEntry* find(std::string_view param) const;
  std::vector<const FaultEntry*> linked(AnomalyType type) const;

  /// Throws ConfigError if a parameter is missing from the registry or its
  /// optimal value is out of range.
  void check(const ParamRegistry& registry) const;

 private:
  std::vector<FaultEntry> entries_;
};

/// |value - optimal| / (0.25 * (max - min)); 0 for a zero-width range.
double severity(double value, const ParamSpec& spec, double optimal);

/// Per-class severity (max over members) for a full parameter set; absent
/// parameters count at their registry default.
std::array<double, 4> class_severities(const ParamSet& params, const ParamRegistry& registry,
                                       const FaultTable& table);

/// Registry defaults with every fault-table parameter at its optimal value.
ParamSet optimal_params(const ParamRegistry& registry, const FaultTable& table);

struct SimDynamics {
  double fault_time_constant_s = 2.0;
  double lateral_gain_m = 12.0;
  double lateral_period_s = 12.0;
  double porpoise_gain_mps = 4.0;
  double porpoise_period_s = 6.0;
  double sink_warning_mps = 3.8;
  double latch_onset = 2.0;
  double latch_release = 0.1;
  double latched_floor = 1.2;
  double latched_sag_mps = 0.15;
  double sag_recovery_mps = 1.0;
  double loss_of_control_alt_m = 4.0;
  double plummet_mps = 6.0;
  double thrust_climb_limit_mps = 2.0;
  double thrust_warning_period_s = 2.0;
  double timeout_crawl_mps = 0.4;
  double offset_slew_limit_mps = 20.0;
  double landing_min_descent_mps = 0.4;
  double landing_max_descent_mps = 2.5;
  double touchdown_max_sink_mps = 1.0;
};

struct SimConfig {
  std::uint64_t seed = 0;
  double sample_rate_hz = 10.0;
  double dt = 0.1;
  double mission_timeout_s = 600.0;
  FaultTable fault_table = FaultTable::builtin();
  SimDynamics dynamics;

  /// dt * sample_rate_hz == 1 and fault table consistent with the registry.
  void check(const ParamRegistry& registry) const;
};

nlohmann::json to_json(const SimConfig& config);
/// Missing keys keep their defaults; setting only one of dt/sample_rate_hz
/// derives the other.
SimConfig sim_config_from_json(const nlohmann::json& doc);

struct SimState {
  long steps = 0;
  double t = 0.0;
  Vec3 pos;
  Vec3 vel;
  /// Point on the planned path the controller is tracking.
  Vec3 track;
  /// Displacement of the vehicle from `track` caused by fault effects.
  Vec3 offset;
  int target_wp = 1;
  bool landing = false;
  bool landed = false;
  bool crashed = false;
  bool timed_out = false;
  ParamSet params;
  double osc_phase = 0.0;  // lateral oscillation, radians
  double porpoise_phase = 0.0;
  std::array<double, 4> intensity{};  // per-class fault amplitude state
  std::array<bool, 4> latched{};
  double sag_m = 0.0;
  bool plummeting = false;
  double last_thrust_warning_t = -1e9;
  bool sink_warned = false;
  Vec3 lateral_axis{1.0, 0.0, 0.0};
};

/// One mission's simulator. Pure function of (seed, params schedule, plan).
class Simulator {
 public:
  Simulator(const ParamRegistry& registry, SimConfig config, ParamSet params, MissionPlan plan);

  /// Events for the initial t = 0 sample.
  std::vector<TelemetryEvent> initial_events() const;

  /// Advances one dt. No-op (empty) once landed, crashed or timed out.
  std::vector<TelemetryEvent> step();

  /// Queues `params` to replace the live snapshot at the next step boundary.
  void apply_params(ParamSet params);

  bool finished() const { return state_.landed || state_.crashed || state_.timed_out; }
  const SimState& state() const { return state_; }
  const MissionPlan& plan() const { return plan_; }
  const SimConfig& config() const { return config_; }
  std::array<double, 4> current_severities() const;

  /// Called after every step with the post-step state (test introspection).
  void set_step_observer(std::function<void(const SimState&)> observer) { observer_ = std::move(observer); }

 private:
  const ParamRegistry& registry_;
  SimConfig config_;
  MissionPlan plan_;
  SimState state_;
  std::optional<ParamSet> pending_;
  std::function<void(const SimState&)> observer_;
};

/// In-process simulated mission.
class SimMission : public MissionHandle {
 public:
  SimMission(const ParamRegistry& registry, SimConfig config, ParamSet params, MissionPlan plan);

  std::optional<TelemetryEvent> next_event() override;
  UploadAck upload_params(const ParamSet& fix) override;
  FinalStatus stop() override;
  bool ended() const override;
  bool virtual_time() const override { return true; }

  Simulator& simulator() { return sim_; }
  const Simulator& simulator() const { return sim_; }

 private:
  const ParamRegistry& registry_;
  Simulator sim_;
  std::deque<TelemetryEvent> queue_;
  bool started_ = false;
  bool consumer_ended_ = false;
  bool stopped_ = false;
  std::optional<FinalStatus> final_;
  ParamSet live_;
};

/// VehicleLink backed by Simulator; validates params against the registry.
class SimLink : public VehicleLink {
 public:
  SimLink(const ParamRegistry& registry, SimConfig config);

  std::unique_ptr<MissionHandle> start_mission(const ParamSet& params, const MissionPlan& plan) override;
  std::unique_ptr<SimMission> start_sim(const ParamSet& params, const MissionPlan& plan);

  const SimConfig& config() const { return config_; }

 private:
  const ParamRegistry& registry_;
  SimConfig config_;
};

}  // namespace flightfix
