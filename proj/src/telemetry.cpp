#include "flightfix/telemetry.hpp"

#include <cmath>
#include <numbers>

#include "flightfix/errors.hpp"

namespace flightfix {

double event_time(const TelemetryEvent& event) {
  return std::visit([](const auto& e) { return e.t; }, event);
}

void MissionPlan::check() const {
  if (waypoints.size() < 2) throw ValidationError("mission plan needs at least two waypoints");
  if (!(cruise_speed > 0.0) || !std::isfinite(cruise_speed))
    throw ValidationError("mission plan cruise_speed must be positive");
  for (std::size_t i = 1; i < waypoints.size(); ++i) {
    if (distance(waypoints[i - 1], waypoints[i]) <= 1e-6)
      throw ValidationError("mission plan waypoints " + std::to_string(i - 1) + " and " + std::to_string(i) +
                            " coincide");
  }
}

nlohmann::json to_json(const MissionPlan& plan) {
  nlohmann::json wps = nlohmann::json::array();
  for (const auto& w : plan.waypoints) wps.push_back({w.x, w.y, w.z});
  return {{"waypoints", wps}, {"cruise_speed", plan.cruise_speed}};
}

MissionPlan plan_from_json(const nlohmann::json& doc) {
  MissionPlan plan;
  try {
    for (const auto& w : doc.at("waypoints")) {
      if (!w.is_array() || w.size() != 3) throw ValidationError("waypoint must be a [x, y, z] array");
      plan.waypoints.push_back({w[0].get<double>(), w[1].get<double>(), w[2].get<double>()});
    }
    plan.cruise_speed = doc.value("cruise_speed", plan.cruise_speed);
  } catch (const nlohmann::json::exception& ex) {
    throw ValidationError(std::string("mission plan: ") + ex.what());
  }
  plan.check();
  return plan;
}

std::string FinalStatus::to_string() const {
  switch (kind) {
    case Kind::LandedAtDestination:
      return "landed";
    case Kind::Crashed:
      return "crashed";
    case Kind::Aborted:
      return "aborted(" + reason + ")";
  }
  return "aborted";
}

Vec3 geodetic_to_enu(const Geodetic& origin, const Geodetic& point) {
  constexpr double a = 6378137.0;
  constexpr double f = 1.0 / 298.257223563;
  constexpr double e2 = f * (2.0 - f);
  constexpr double deg = std::numbers::pi / 180.0;

  auto to_ecef = [&](const Geodetic& g) {
    const double lat = g.lat_deg * deg;
    const double lon = g.lon_deg * deg;
    const double n = a / std::sqrt(1.0 - e2 * std::sin(lat) * std::sin(lat));
    return Vec3{(n + g.alt_m) * std::cos(lat) * std::cos(lon), (n + g.alt_m) * std::cos(lat) * std::sin(lon),
                (n * (1.0 - e2) + g.alt_m) * std::sin(lat)};
  };

  const Vec3 d = to_ecef(point) - to_ecef(origin);
  const double lat = origin.lat_deg * deg;
  const double lon = origin.lon_deg * deg;
  const double sl = std::sin(lat), cl = std::cos(lat), so = std::sin(lon), co = std::cos(lon);
  return {-so * d.x + co * d.y, -sl * co * d.x - sl * so * d.y + cl * d.z,
          cl * co * d.x + cl * so * d.y + sl * d.z};
}

}  // namespace flightfix
