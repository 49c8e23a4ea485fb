#include "flightfix/wire.hpp"

#include <cmath>

#include "flightfix/errors.hpp"

namespace flightfix::wire {

namespace {

using ojson = nlohmann::ordered_json;

ojson vec_json(const Vec3& v) { return ojson::array({v.x, v.y, v.z}); }

Vec3 vec_from(const nlohmann::json& j, const char* field) {
  if (!j.is_array() || j.size() != 3 || !j[0].is_number() || !j[1].is_number() || !j[2].is_number())
    throw ProtocolError(std::string("field '") + field + "' must be a 3-number array");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

double time_from(const nlohmann::json& doc) {
  if (!doc.contains("t") || !doc["t"].is_number()) throw ProtocolError("frame missing numeric 't'");
  const double t = doc["t"].get<double>();
  if (!std::isfinite(t) || t < 0.0) throw ProtocolError("frame time must be finite and non-negative");
  return t;
}

}  // namespace

bool is_telemetry_type(std::string_view type) {
  return type == "sample" || type == "status" || type == "waypoint_reached" || type == "landed" ||
         type == "mission_timeout";
}

std::string encode(const TelemetryEvent& event) {
  ojson out;
  std::visit(
      [&](const auto& e) {
        using T = std::decay_t<decltype(e)>;
        if constexpr (std::is_same_v<T, FlightSample>) {
          out["type"] = "sample";
          out["t"] = e.t;
          out["pos"] = vec_json(e.pos);
          out["vel"] = vec_json(e.vel);
          out["alt"] = e.alt;
          if (e.attitude) out["attitude"] = vec_json(*e.attitude);
        } else if constexpr (std::is_same_v<T, StatusText>) {
          out["type"] = "status";
          out["t"] = e.t;
          out["text"] = e.text;
        } else if constexpr (std::is_same_v<T, WaypointReached>) {
          out["type"] = "waypoint_reached";
          out["t"] = e.t;
          out["index"] = e.index;
        } else if constexpr (std::is_same_v<T, Landed>) {
          out["type"] = "landed";
          out["t"] = e.t;
        } else {
          out["type"] = "mission_timeout";
          out["t"] = e.t;
        }
      },
      event);
  return out.dump();
}

TelemetryEvent decode(std::string_view line, const Geodetic* origin) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(line);
  } catch (const nlohmann::json::parse_error& ex) {
    throw ProtocolError(std::string("malformed frame: ") + ex.what());
  }
  if (!doc.is_object() || !doc.contains("type") || !doc["type"].is_string())
    throw ProtocolError("frame is not an object with a string 'type'");
  const std::string type = doc["type"].get<std::string>();
  const double t = time_from(doc);

  if (type == "sample") {
    FlightSample s;
    s.t = t;
    if (doc.contains("pos")) {
      s.pos = vec_from(doc["pos"], "pos");
    } else if (origin && doc.contains("geo")) {
      const Vec3 g = vec_from(doc["geo"], "geo");
      s.pos = geodetic_to_enu(*origin, Geodetic{g.x, g.y, g.z});
    } else {
      throw ProtocolError("sample missing 'pos'");
    }
    s.vel = doc.contains("vel") ? vec_from(doc["vel"], "vel") : throw ProtocolError("sample missing 'vel'");
    if (doc.contains("alt")) {
      if (!doc["alt"].is_number()) throw ProtocolError("sample 'alt' must be a number");
      s.alt = doc["alt"].get<double>();
      if (std::abs(s.alt - s.pos.z) > 1e-9) throw ProtocolError("sample 'alt' disagrees with pos.z");
    } else {
      s.alt = s.pos.z;
    }
    if (doc.contains("attitude")) s.attitude = vec_from(doc["attitude"], "attitude");
    return s;
  }
  if (type == "status") {
    if (!doc.contains("text") || !doc["text"].is_string()) throw ProtocolError("status missing 'text'");
    StatusText st{t, doc["text"].get<std::string>()};
    if (st.text.empty()) throw ProtocolError("status text is empty");
    return st;
  }
  if (type == "waypoint_reached") {
    if (!doc.contains("index") || !doc["index"].is_number_integer())
      throw ProtocolError("waypoint_reached missing integer 'index'");
    return WaypointReached{t, doc["index"].get<int>()};
  }
  if (type == "landed") return Landed{t};
  if (type == "mission_timeout") return MissionTimeout{t};
  throw ProtocolError("unknown frame type '" + type + "'");
}

}  // namespace flightfix::wire
