#include "flightfix/repair.hpp"

#include <chrono>
#include <cmath>
#include <ctime>
#include <limits>

#include "flightfix/errors.hpp"

namespace flightfix {

void OrchestratorConfig::check() const {
  if (repair_limit < 1) throw ConfigError("repair_limit must be at least 1");
  if (!(mission_timeout_s > 0)) throw ConfigError("mission_timeout must be positive");
}

nlohmann::json to_json(const OrchestratorConfig& c) {
  return {{"repair_limit", c.repair_limit}, {"mission_timeout_s", c.mission_timeout_s}};
}

OrchestratorConfig orchestrator_config_from_json(const nlohmann::json& doc) {
  OrchestratorConfig c;
  try {
    c.repair_limit = doc.value("repair_limit", c.repair_limit);
    c.mission_timeout_s = doc.value("mission_timeout_s", c.mission_timeout_s);
  } catch (const nlohmann::json::exception& ex) {
    throw ConfigError(std::string("orchestrator config: ") + ex.what());
  }
  c.check();
  return c;
}

std::string_view to_string(FailReason reason) {
  switch (reason) {
    case FailReason::None:
      return "";
    case FailReason::RepairLimit:
      return "repair-limit";
    case FailReason::Timeout:
      return "timeout";
    case FailReason::Crash:
      return "crash";
    case FailReason::Aborted:
      return "aborted";
    case FailReason::Infra:
      return "infra";
  }
  return "";
}

std::string MissionResult::to_string() const {
  if (passed) return "passed";
  return "failed(" + std::string(flightfix::to_string(reason)) + ")";
}

MissionResult MissionResult::from_string(std::string_view text) {
  if (text == "passed") return pass();
  for (auto r : {FailReason::RepairLimit, FailReason::Timeout, FailReason::Crash, FailReason::Aborted,
                 FailReason::Infra})
    if (text == "failed(" + std::string(flightfix::to_string(r)) + ")") return fail(r);
  throw SchemaError("unknown mission result '" + std::string(text) + "'");
}

nlohmann::json to_json(const RepairRecord& r) {
  nlohmann::json anomalies = nlohmann::json::array();
  for (auto a : r.anomaly_record) anomalies.push_back(std::string(to_id(a)));
  nlohmann::json advice = nlohmann::json::array();
  for (const auto& a : r.advice_log) advice.push_back(to_json(a));
  nlohmann::json markers = nlohmann::json::array();
  for (const auto& m : r.markers) {
    nlohmann::json j = {{"t_anomaly", m.t_anomaly}, {"kind", std::string(to_id(m.kind))}};
    j["t_upload"] = m.t_upload ? nlohmann::json(*m.t_upload) : nlohmann::json();
    j["detail"] = m.detail;
    markers.push_back(std::move(j));
  }
  nlohmann::json doc;
  doc["p_initial"] = to_json(r.p_initial);
  doc["result"] = r.result.to_string();
  doc["anomaly_record"] = std::move(anomalies);
  doc["repair_count"] = r.repair_count;
  doc["advice_log"] = std::move(advice);
  doc["final_params"] = to_json(r.final_params);
  doc["markers"] = std::move(markers);
  doc["terminal_anomaly"] =
      r.terminal_anomaly ? nlohmann::json(std::string(to_id(*r.terminal_anomaly))) : nlohmann::json();
  doc["final_status"] = r.final_status ? nlohmann::json(r.final_status->to_string()) : nlohmann::json();
  doc["detail"] = r.detail;
  doc["time_ordered"] = r.time_ordered;
  doc["events_consumed"] = r.events_consumed;
  return doc;
}

namespace {

std::string wall_clock_iso() {
  const auto now = std::chrono::system_clock::now();
  const auto secs = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&secs, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

bool landed_kind(const FinalStatus& s) { return s.kind == FinalStatus::Kind::LandedAtDestination; }

}  // namespace

RepairRecord run_mission(VehicleLink& link, const ParamSet& p_initial, const MissionPlan& plan, Advisor& advisor,
                         const DetectorConfig& detectors, const OrchestratorConfig& config,
                         const ParamRegistry& registry, const MissionOptions& options) {
  config.check();
  RepairRecord rec;
  rec.p_initial = p_initial;
  rec.final_params = p_initial;

  auto handle = link.start_mission(p_initial, plan);

  DetectorState state(plan);
  ParamSet p_current = p_initial;
  std::optional<MissionResult> result;
  bool landed = false;
  double last_t = -std::numeric_limits<double>::infinity();
  double defer_until = -std::numeric_limits<double>::infinity();

  try {
    while (!landed && rec.repair_count < config.repair_limit) {
      auto ev = handle->next_event();
      if (!ev) break;
      ++rec.events_consumed;
      const double t = event_time(*ev);
      if (t < last_t) rec.time_ordered = false;
      last_t = std::max(last_t, t);
      if (options.keep_trace) rec.trace.push_back(*ev);

      if (std::holds_alternative<MissionTimeout>(*ev) || t > config.mission_timeout_s) {
        result = MissionResult::fail(FailReason::Timeout);
        break;
      }
      if (std::holds_alternative<Landed>(*ev)) {
        landed = true;
        break;
      }

      state.suppressed = t <= defer_until;
      auto anomaly = update(state, detectors, *ev, plan);
      if (!anomaly) continue;

      const bool on_ground = handle->ended() || (state.last_alt && *state.last_alt <= 0.05);
      if (anomaly->kind == AnomalyType::Crash && on_ground) {
        rec.terminal_anomaly = AnomalyType::Crash;
        result = MissionResult::fail(FailReason::Crash);
        break;
      }

      ++rec.repair_count;
      rec.anomaly_record.push_back(anomaly->kind);
      RepairMarker marker{anomaly->t, std::nullopt, anomaly->kind, anomaly->detail};

      const auto prompt = build_prompt(anomaly->kind, p_current, registry);
      nlohmann::json audit = {{"attempt", rec.repair_count},
                              {"t", anomaly->t},
                              {"anomaly", std::string(to_id(anomaly->kind))},
                              {"detail", anomaly->detail},
                              {"prompt", prompt.text},
                              {"requested_at", wall_clock_iso()}};
      RepairAdvice advice;
      try {
        const std::string raw = advisor.query(prompt);
        audit["raw_response"] = raw;
        advice = parse_response(raw, registry, advisor.strict_advice());
        audit["advice"] = to_json(advice);
        require_valid(registry, advice.updates);
        const auto ack = handle->upload_params(advice.updates);
        p_current = merge(p_current, advice.updates);
        marker.t_upload = ack.effective_t;
        defer_until = ack.effective_t;
        audit["uploaded_at_t"] = ack.effective_t;
      } catch (const ParseError& ex) {
        advice = RepairAdvice{{}, std::string("parse error: ") + ex.what(), {}};
      } catch (const AdviceRejected& ex) {
        advice = RepairAdvice{{}, std::string("advice rejected: ") + ex.what(), {}};
      } catch (const AdvisorUnavailable& ex) {
        advice = RepairAdvice{{}, std::string("advisor unavailable: ") + ex.what(), {}};
      } catch (const ValidationError& ex) {
        advice = RepairAdvice{{}, std::string("upload refused: ") + ex.what(), {}};
      } catch (const StaleHandle& ex) {
        advice.rationale += std::string(" [not applied: ") + ex.what() + "]";
        advice.updates.clear();
      }
      if (advice.updates.empty()) audit["error"] = advice.rationale;
      audit["responded_at"] = wall_clock_iso();
      if (options.audit) options.audit->write(audit);
      rec.advice_log.push_back(std::move(advice));
      rec.markers.push_back(std::move(marker));
    }
  } catch (const std::exception& ex) {
    result = MissionResult::fail(FailReason::Infra);
    rec.detail = ex.what();
  }

  if (!result && !landed && rec.repair_count >= config.repair_limit)
    result = MissionResult::fail(FailReason::RepairLimit);

  try {
    rec.final_status = handle->stop();
  } catch (const std::exception& ex) {
    if (!result) result = MissionResult::fail(FailReason::Infra);
    if (rec.detail.empty()) rec.detail = ex.what();
  }

  if (!result) {
    if (landed || (rec.final_status && landed_kind(*rec.final_status))) {
      result = rec.final_status && landed_kind(*rec.final_status) ? MissionResult::pass()
                                                                   : MissionResult::fail(FailReason::Infra);
    } else if (rec.final_status && rec.final_status->kind == FinalStatus::Kind::Crashed) {
      result = MissionResult::fail(FailReason::Crash);
      rec.terminal_anomaly = AnomalyType::Crash;
    } else if (rec.final_status && rec.final_status->reason == "timeout") {
      result = MissionResult::fail(FailReason::Timeout);
    } else {
      result = MissionResult::fail(FailReason::Aborted);
    }
  }
  rec.result = *result;
  rec.final_params = p_current;
  return rec;
}

}  // namespace flightfix
