#include "flightfix/anomaly.hpp"

#include <cmath>

#include "flightfix/errors.hpp"

namespace flightfix {

std::string_view display_name(AnomalyType type) {
  switch (type) {
    case AnomalyType::Deviation:
      return "Deviation";
    case AnomalyType::ThrustLoss:
      return "Thrust Loss";
    case AnomalyType::Timeout:
      return "Timeout";
    case AnomalyType::Crash:
      return "Crash";
  }
  return "Unknown";
}

std::string_view to_id(AnomalyType type) {
  switch (type) {
    case AnomalyType::Deviation:
      return "deviation";
    case AnomalyType::ThrustLoss:
      return "thrust_loss";
    case AnomalyType::Timeout:
      return "timeout";
    case AnomalyType::Crash:
      return "crash";
  }
  return "unknown";
}

std::optional<AnomalyType> anomaly_from_string(std::string_view text) {
  for (auto t : kAllAnomalyTypes)
    if (text == display_name(t) || text == to_id(t)) return t;
  return std::nullopt;
}

void DetectorConfig::check() const {
  if (!(deviation_threshold_m > 0) || !(timeout_speed_mps > 0) || !(timeout_alt_delta_m > 0) ||
      !(crash_impact_speed_mps > 0) || !(cooldown_s >= 0) || !(takeoff_grace_s >= 0))
    throw ConfigError("detector thresholds must be strictly positive");
  if (deviation_consecutive < 1 || timeout_consecutive < 1)
    throw ConfigError("detector consecutive counts must be at least 1");
  if (thrust_loss_keyword.empty()) throw ConfigError("thrust loss keyword must not be empty");
  for (const auto& k : crash_keywords)
    if (k.empty()) throw ConfigError("crash keywords must not be empty");
}

nlohmann::json to_json(const DetectorConfig& c) {
  return {{"deviation_threshold_m", c.deviation_threshold_m},
          {"deviation_consecutive", c.deviation_consecutive},
          {"timeout_speed_mps", c.timeout_speed_mps},
          {"timeout_alt_delta_m", c.timeout_alt_delta_m},
          {"timeout_consecutive", c.timeout_consecutive},
          {"crash_impact_speed_mps", c.crash_impact_speed_mps},
          {"thrust_loss_keyword", c.thrust_loss_keyword},
          {"crash_keywords", c.crash_keywords},
          {"cooldown_s", c.cooldown_s},
          {"takeoff_grace_s", c.takeoff_grace_s}};
}

DetectorConfig detector_config_from_json(const nlohmann::json& doc) {
  DetectorConfig c;
  try {
    c.deviation_threshold_m = doc.value("deviation_threshold_m", c.deviation_threshold_m);
    c.deviation_consecutive = doc.value("deviation_consecutive", c.deviation_consecutive);
    c.timeout_speed_mps = doc.value("timeout_speed_mps", c.timeout_speed_mps);
    c.timeout_alt_delta_m = doc.value("timeout_alt_delta_m", c.timeout_alt_delta_m);
    c.timeout_consecutive = doc.value("timeout_consecutive", c.timeout_consecutive);
    c.crash_impact_speed_mps = doc.value("crash_impact_speed_mps", c.crash_impact_speed_mps);
    c.thrust_loss_keyword = doc.value("thrust_loss_keyword", c.thrust_loss_keyword);
    c.crash_keywords = doc.value("crash_keywords", c.crash_keywords);
    c.cooldown_s = doc.value("cooldown_s", c.cooldown_s);
    c.takeoff_grace_s = doc.value("takeoff_grace_s", c.takeoff_grace_s);
  } catch (const nlohmann::json::exception& ex) {
    throw ConfigError(std::string("detector config: ") + ex.what());
  }
  c.check();
  return c;
}

DetectorState::DetectorState(const MissionPlan& plan)
    : waypoint_count(static_cast<int>(plan.waypoints.size())) {}

void advance_leg(DetectorState& state, int reached) {
  if (state.landing || reached != state.leg_to)
    throw ProtocolError("waypoint " + std::to_string(reached) + " reached while flying toward " +
                        std::to_string(state.leg_to));
  state.deviation_run = 0;
  if (reached >= state.waypoint_count - 1) {
    state.landing = true;
    return;
  }
  state.leg_from = reached;
  state.leg_to = reached + 1;
}

double cross_track_distance(const DetectorState& state, const MissionPlan& plan, const Vec3& pos) {
  if (state.landing) {
    const Vec3& top = plan.waypoints.back();
    return point_to_leg_distance(pos, top, Vec3{top.x, top.y, 0.0});
  }
  return point_to_leg_distance(pos, plan.waypoints[state.leg_from], plan.waypoints[state.leg_to]);
}

namespace {

std::size_t slot(AnomalyType t) { return static_cast<std::size_t>(t); }

bool cooling(const DetectorState& s, AnomalyType t, double now) { return now < s.cooldown_until[slot(t)]; }

std::optional<AnomalyEvent> fire(DetectorState& s, const DetectorConfig& c, AnomalyType kind, double t,
                                 std::string detail) {
  if (s.suppressed) return std::nullopt;
  s.deviation_run = 0;
  s.stationary_run = 0;
  s.cooldown_until[slot(kind)] = t + c.cooldown_s;
  return AnomalyEvent{t, kind, std::move(detail)};
}

std::optional<AnomalyEvent> on_sample(DetectorState& s, const DetectorConfig& c, const FlightSample& sample,
                                      const MissionPlan& plan) {
  const double speed = sample.speed();
  double cross_track = 0.0;
  if (plan.waypoints.size() >= 2) {
    cross_track = cross_track_distance(s, plan, sample.pos);
    s.deviation_run = cross_track > c.deviation_threshold_m ? s.deviation_run + 1 : 0;
  }

  const bool stationary = s.last_alt && speed < c.timeout_speed_mps &&
                          std::abs(sample.alt - *s.last_alt) < c.timeout_alt_delta_m;
  s.stationary_run = stationary ? s.stationary_run + 1 : 0;

  s.last_alt = sample.alt;
  s.last_speed = speed;
  s.last_pos = sample.pos;

  if (s.deviation_run > c.deviation_consecutive && !cooling(s, AnomalyType::Deviation, sample.t)) {
    return fire(s, c, AnomalyType::Deviation, sample.t,
                "cross-track " + format_number(std::round(cross_track * 100.0) / 100.0) + " m for " +
                    std::to_string(s.deviation_run) + " samples");
  }
  if (s.stationary_run > c.timeout_consecutive && !s.landing && sample.t >= c.takeoff_grace_s &&
      !cooling(s, AnomalyType::Timeout, sample.t)) {
    return fire(s, c, AnomalyType::Timeout, sample.t,
                "stationary for " + std::to_string(s.stationary_run) + " samples");
  }
  return std::nullopt;
}

std::optional<AnomalyEvent> on_status(DetectorState& s, const DetectorConfig& c, const StatusText& st) {
  for (const auto& keyword : c.crash_keywords) {
    if (st.text.find(keyword) == std::string::npos) continue;
    if (s.last_speed && *s.last_speed > c.crash_impact_speed_mps && !cooling(s, AnomalyType::Crash, st.t))
      return fire(s, c, AnomalyType::Crash, st.t,
                  "'" + keyword + "' at " + format_number(std::round(*s.last_speed * 100.0) / 100.0) + " m/s");
    break;
  }
  if (st.text.find(c.thrust_loss_keyword) != std::string::npos && !cooling(s, AnomalyType::ThrustLoss, st.t))
    return fire(s, c, AnomalyType::ThrustLoss, st.t, "'" + c.thrust_loss_keyword + "'");
  return std::nullopt;
}

}  // namespace

std::optional<AnomalyEvent> update(DetectorState& state, const DetectorConfig& config, const TelemetryEvent& event,
                                   const MissionPlan& plan) {
  return std::visit(
      [&](const auto& e) -> std::optional<AnomalyEvent> {
        using T = std::decay_t<decltype(e)>;
        if constexpr (std::is_same_v<T, FlightSample>) {
          return on_sample(state, config, e, plan);
        } else if constexpr (std::is_same_v<T, StatusText>) {
          return on_status(state, config, e);
        } else if constexpr (std::is_same_v<T, WaypointReached>) {
          if (plan.waypoints.size() >= 2) advance_leg(state, e.index);
          return std::nullopt;
        } else if constexpr (std::is_same_v<T, Landed>) {
          state.landed = true;
          return std::nullopt;
        } else {
          return std::nullopt;
        }
      },
      event);
}

std::vector<AnomalyEvent> detect_all(const std::vector<TelemetryEvent>& events, const DetectorConfig& config,
                                     const MissionPlan& plan) {
  DetectorState state(plan);
  std::vector<AnomalyEvent> out;
  for (const auto& ev : events)
    if (auto a = update(state, config, ev, plan)) out.push_back(std::move(*a));
  return out;
}

}  // namespace flightfix
