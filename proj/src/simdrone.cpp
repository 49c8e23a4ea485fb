#include "flightfix/simdrone.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <random>

#include "flightfix/errors.hpp"

namespace flightfix {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

std::size_t slot(AnomalyType t) { return static_cast<std::size_t>(t); }

Vec3 lateral_axis_for(const Vec3& from, const Vec3& to) {
  const double hx = to.x - from.x;
  const double hy = to.y - from.y;
  const double h = std::hypot(hx, hy);
  if (h < 1e-6) return {1.0, 0.0, 0.0};
  return {-hy / h, hx / h, 0.0};
}

std::string one_decimal(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.1f", v);
  return buf;
}

}  // namespace

// ---------------------------------------------------------------------------
// FaultTable

FaultTable::FaultTable(std::vector<FaultEntry> entries) : entries_(std::move(entries)) {}

FaultTable FaultTable::builtin() {
  return FaultTable({
      {"ATC_RAT_RLL_P", 0.135, AnomalyType::Deviation},
      {"ATC_RAT_PIT_P", 0.135, AnomalyType::Deviation},
      {"MOT_THST_EXPO", 0.65, AnomalyType::ThrustLoss},
      {"MOT_SPIN_MIN", 0.15, AnomalyType::ThrustLoss},
      {"PSC_VELXY_P", 2.0, AnomalyType::Timeout},
      {"WPNAV_ACCEL", 250.0, AnomalyType::Timeout},
      {"PSC_ACCZ_P", 0.5, AnomalyType::Crash},
      {"PSC_VELZ_P", 5.0, AnomalyType::Crash},
  });
}

FaultTable FaultTable::from_json(const nlohmann::json& doc) {
  if (!doc.is_array()) throw ConfigError("fault table must be an array");
  std::vector<FaultEntry> entries;
  for (const auto& e : doc) {
    try {
      FaultEntry f;
      f.param = e.at("param").get<std::string>();
      f.optimal = e.at("optimal").get<double>();
      const auto cls = anomaly_from_string(e.at("anomaly").get<std::string>());
      if (!cls) throw ConfigError("fault table entry '" + f.param + "' has unknown anomaly class");
      f.anomaly = *cls;
      entries.push_back(std::move(f));
    } catch (const nlohmann::json::exception& ex) {
      throw ConfigError(std::string("fault table: ") + ex.what());
    }
  }
  return FaultTable(std::move(entries));
}

nlohmann::json FaultTable::to_json() const {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& e : entries_)
    out.push_back({{"param", e.param}, {"optimal", e.optimal}, {"anomaly", std::string(to_id(e.anomaly))}});
  return out;
}

const FaultEntry* FaultTable::find(std::string_view param) const {
  for (const auto& e : entries_)
    if (e.param == param) return &e;
  return nullptr;
}

std::vector<const FaultEntry*> FaultTable::linked(AnomalyType type) const {
  std::vector<const FaultEntry*> out;
  for (const auto& e : entries_)
    if (e.anomaly == type) out.push_back(&e);
  return out;
}

void FaultTable::check(const ParamRegistry& registry) const {
  for (const auto& e : entries_) {
    const auto* spec = registry.find(e.param);
    if (!spec) throw ConfigError("fault table parameter '" + e.param + "' is not in the registry");
    if (e.optimal < spec->min || e.optimal > spec->max)
      throw ConfigError("fault table optimal for '" + e.param + "' is out of range");
  }
}

double severity(double value, const ParamSpec& spec, double optimal) {
  const double quarter = 0.25 * (spec.max - spec.min);
  if (quarter <= 0.0) return 0.0;
  return std::abs(value - optimal) / quarter;
}

std::array<double, 4> class_severities(const ParamSet& params, const ParamRegistry& registry,
                                       const FaultTable& table) {
  std::array<double, 4> out{};
  for (const auto& e : table.entries()) {
    const auto* spec = registry.find(e.param);
    if (!spec) continue;
    auto it = params.find(e.param);
    const double value = it != params.end() ? it->second : spec->default_value;
    out[slot(e.anomaly)] = std::max(out[slot(e.anomaly)], severity(value, *spec, e.optimal));
  }
  return out;
}

ParamSet optimal_params(const ParamRegistry& registry, const FaultTable& table) {
  ParamSet out = registry.defaults();
  for (const auto& e : table.entries()) out.insert_or_assign(e.param, e.optimal);
  return out;
}

// ---------------------------------------------------------------------------
// SimConfig

void SimConfig::check(const ParamRegistry& registry) const {
  if (!(sample_rate_hz > 0) || !(dt > 0)) throw ConfigError("sim rate and dt must be positive");
  if (std::abs(dt * sample_rate_hz - 1.0) > 1e-12) throw ConfigError("sim dt must equal 1 / sample_rate_hz");
  if (!(mission_timeout_s > 0)) throw ConfigError("sim mission timeout must be positive");
  fault_table.check(registry);
}

nlohmann::json to_json(const SimConfig& c) {
  return {{"seed", c.seed},
          {"sample_rate_hz", c.sample_rate_hz},
          {"dt", c.dt},
          {"mission_timeout_s", c.mission_timeout_s},
          {"fault_table", c.fault_table.to_json()}};
}

SimConfig sim_config_from_json(const nlohmann::json& doc) {
  SimConfig c;
  try {
    c.seed = doc.value("seed", c.seed);
    const bool has_rate = doc.contains("sample_rate_hz");
    const bool has_dt = doc.contains("dt");
    if (has_rate) c.sample_rate_hz = doc["sample_rate_hz"].get<double>();
    if (has_dt) c.dt = doc["dt"].get<double>();
    if (has_rate && !has_dt) c.dt = 1.0 / c.sample_rate_hz;
    if (has_dt && !has_rate) c.sample_rate_hz = 1.0 / c.dt;
    c.mission_timeout_s = doc.value("mission_timeout_s", c.mission_timeout_s);
    if (doc.contains("fault_table")) c.fault_table = FaultTable::from_json(doc["fault_table"]);
  } catch (const nlohmann::json::exception& ex) {
    throw ConfigError(std::string("sim config: ") + ex.what());
  }
  return c;
}

// ---------------------------------------------------------------------------
// Simulator

Simulator::Simulator(const ParamRegistry& registry, SimConfig config, ParamSet params, MissionPlan plan)
    : registry_(registry), config_(std::move(config)), plan_(std::move(plan)) {
  plan_.check();
  state_.params = merge(registry_.defaults(), params);
  state_.pos = plan_.waypoints.front();
  state_.track = state_.pos;
  state_.target_wp = 1;
  state_.lateral_axis = lateral_axis_for(plan_.waypoints[0], plan_.waypoints[1]);

  // mt19937_64 output is fully specified, so the phase is portable.
  std::mt19937_64 gen(config_.seed);
  state_.osc_phase = static_cast<double>(gen() >> 11) * 0x1.0p-53 * kTwoPi;
}

std::array<double, 4> Simulator::current_severities() const {
  return class_severities(state_.params, registry_, config_.fault_table);
}

void Simulator::apply_params(ParamSet params) { pending_ = std::move(params); }

std::vector<TelemetryEvent> Simulator::initial_events() const {
  FlightSample s;
  s.t = 0.0;
  s.pos = state_.pos;
  s.alt = state_.pos.z;
  return {s};
}

std::vector<TelemetryEvent> Simulator::step() {
  if (finished()) return {};
  if (pending_) {
    state_.params = merge(state_.params, *pending_);
    pending_.reset();
  }

  const SimDynamics& dyn = config_.dynamics;
  const double dt = config_.dt;
  SimState& s = state_;
  const Vec3 prev_pos = s.pos;

  // Fault intensities.
  const auto sev = current_severities();
  std::array<double, 4> effective{};
  const double alpha = 1.0 - std::exp(-dt / dyn.fault_time_constant_s);
  for (std::size_t c = 0; c < 4; ++c) {
    if (sev[c] >= dyn.latch_onset) s.latched[c] = true;
    else if (sev[c] < dyn.latch_release) s.latched[c] = false;
    effective[c] = s.latched[c] ? std::max(sev[c], dyn.latched_floor) : sev[c];
    s.intensity[c] += (effective[c] - s.intensity[c]) * alpha;
  }
  const bool thrust_fault = effective[slot(AnomalyType::ThrustLoss)] >= 1.0;
  const bool crawl_fault = effective[slot(AnomalyType::Timeout)] >= 1.0;
  const bool crash_latched = s.latched[slot(AnomalyType::Crash)];

  s.t = static_cast<double>(++s.steps) / config_.sample_rate_hz;
  const bool cruising = !s.landing && s.target_wp >= 2;

  // Track point along the plan.
  std::optional<int> reached;
  if (!s.landing) {
    const Vec3& from = plan_.waypoints[s.target_wp - 1];
    const Vec3& to = plan_.waypoints[s.target_wp];
    const Vec3 leg = to - from;
    const Vec3 dir = leg * (1.0 / leg.norm());
    double speed = plan_.cruise_speed;
    if (thrust_fault && dir.z > 1e-9) speed = std::min(speed, dyn.thrust_climb_limit_mps / dir.z);
    if (crawl_fault) speed = std::min(speed, dyn.timeout_crawl_mps);
    const Vec3 remaining = to - s.track;
    const double rem = remaining.norm();
    if (rem <= speed * dt || rem <= 1e-9) {
      s.track = to;
      reached = s.target_wp;
    } else {
      s.track += remaining * (speed * dt / rem);
    }
  } else {
    double descent = std::clamp(0.5 * s.track.z, dyn.landing_min_descent_mps, dyn.landing_max_descent_mps);
    if (crawl_fault) descent = std::min(descent, dyn.timeout_crawl_mps);
    s.track.z = std::max(0.0, s.track.z - descent * dt);
  }

  // Fault displacement.
  s.osc_phase += kTwoPi / dyn.lateral_period_s * dt;
  const double lateral_amp = dyn.lateral_gain_m * s.intensity[slot(AnomalyType::Deviation)];
  Vec3 target = s.lateral_axis * (lateral_amp * std::sin(s.osc_phase));

  if (cruising) {
    const double omega = kTwoPi / dyn.porpoise_period_s;
    s.porpoise_phase += omega * dt;
    const double heave = dyn.porpoise_gain_mps * s.intensity[slot(AnomalyType::Crash)] / omega;
    target.z = -heave * std::sin(s.porpoise_phase);
    if (crash_latched) s.sag_m += dyn.latched_sag_mps * dt;
  }
  if (!(cruising && crash_latched)) s.sag_m = std::max(0.0, s.sag_m - dyn.sag_recovery_mps * dt);
  target.z -= s.sag_m;

  const double old_offset_z = s.offset.z;
  Vec3 delta = target - s.offset;
  const double limit = dyn.offset_slew_limit_mps * dt;
  if (const double d = delta.norm(); d > limit) delta = delta * (limit / d);
  s.offset += delta;
  if (s.plummeting) s.offset.z = old_offset_z - dyn.plummet_mps * dt;

  s.pos = s.track + s.offset;
  s.vel = (s.pos - prev_pos) * (1.0 / dt);
  if (!s.plummeting && cruising && crash_latched && s.pos.z < dyn.loss_of_control_alt_m) s.plummeting = true;

  // Waypoint bookkeeping after the position update.
  if (reached) {
    if (*reached == static_cast<int>(plan_.waypoints.size()) - 1) {
      s.landing = true;
      // Hand the vertical displacement to the descent so position stays continuous.
      s.track.z += s.offset.z;
      s.offset.z = 0.0;
      s.sag_m = 0.0;
    } else {
      s.target_wp = *reached + 1;
      s.lateral_axis = lateral_axis_for(plan_.waypoints[*reached], plan_.waypoints[s.target_wp]);
      if (*reached == 1) s.porpoise_phase = 0.0;
    }
  }

  // Ground contact.
  bool touched_down = false;
  if (s.pos.z <= 0.0 && s.t > 0.0) {
    if (s.landing && !s.plummeting && -s.vel.z < dyn.touchdown_max_sink_mps) {
      s.landed = true;
      touched_down = true;
    } else {
      s.crashed = true;
    }
    s.pos.z = 0.0;
    s.track.z = std::max(0.0, s.track.z);
  }

  std::vector<TelemetryEvent> events;
  FlightSample sample;
  sample.t = s.t;
  sample.pos = s.pos;
  sample.vel = s.vel;
  sample.alt = s.pos.z;
  sample.attitude = Vec3{0.0, 0.0, std::atan2(-s.lateral_axis.x, s.lateral_axis.y)};  // yaw along the leg
  events.emplace_back(sample);

  if (s.crashed) {
    events.emplace_back(StatusText{s.t, "SIM Hit ground at " + one_decimal(s.vel.norm()) + " m/s"});
  } else if (!s.landed) {
    if (thrust_fault && s.t - s.last_thrust_warning_t >= dyn.thrust_warning_period_s - 1e-9) {
      events.emplace_back(StatusText{s.t, "Potential Thrust Loss (3)"});
      s.last_thrust_warning_t = s.t;
    }
    const double sink = -s.vel.z;
    if (sink > dyn.sink_warning_mps && !s.sink_warned) {
      events.emplace_back(StatusText{s.t, "Crash risk: sink rate " + one_decimal(sink) + " m/s"});
      s.sink_warned = true;
    } else if (sink < 0.5 * dyn.sink_warning_mps) {
      s.sink_warned = false;
    }
  }
  if (reached) events.emplace_back(WaypointReached{s.t, *reached});
  if (touched_down) events.emplace_back(Landed{s.t});
  if (!finished() && s.t >= config_.mission_timeout_s - 1e-9) {
    s.timed_out = true;
    events.emplace_back(MissionTimeout{s.t});
  }

  if (observer_) observer_(s);
  return events;
}

}  // namespace flightfix
