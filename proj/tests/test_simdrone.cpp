#include <gtest/gtest.h>

#include <cmath>

#include "flightfix/errors.hpp"
#include "flightfix/simdrone.hpp"
#include "testing.hpp"

using namespace flightfix;

namespace {

struct Run {
  std::vector<TelemetryEvent> events;
  std::vector<FlightSample> samples;
};

/// Runs to completion, applying `fix` once the clock passes `fix_at`.
Run fly(const ParamSet& params, const MissionPlan& plan, std::uint64_t seed = 1,
        std::optional<double> fix_at = std::nullopt, ParamSet fix = {}) {
  SimConfig cfg;
  cfg.seed = seed;
  Simulator sim(fft::registry(), cfg, params, plan);
  Run r;
  r.events = sim.initial_events();
  bool applied = false;
  while (!sim.finished()) {
    if (fix_at && !applied && sim.state().t >= *fix_at - 1e-9) {
      sim.apply_params(fix);
      applied = true;
    }
    for (auto& e : sim.step()) r.events.push_back(std::move(e));
  }
  for (const auto& e : r.events)
    if (const auto* s = std::get_if<FlightSample>(&e)) r.samples.push_back(*s);
  return r;
}

double segment_distance(const Vec3& p, const Vec3& a, const Vec3& b) {
  const Vec3 ab = b - a;
  const double len2 = dot(ab, ab);
  const double u = std::clamp(dot(p - a, ab) / len2, 0.0, 1.0);
  return distance(p, a + ab * u);
}

/// Distance to the flown path: plan legs plus the descent below the last waypoint.
double path_distance(const Vec3& p, const MissionPlan& plan) {
  double best = INFINITY;
  for (std::size_t i = 1; i < plan.waypoints.size(); ++i)
    best = std::min(best, segment_distance(p, plan.waypoints[i - 1], plan.waypoints[i]));
  const Vec3 top = plan.waypoints.back();
  return std::min(best, segment_distance(p, top, {top.x, top.y, 0.0}));
}

bool has_status(const Run& r, const std::string& needle) {
  for (const auto& e : r.events)
    if (const auto* s = std::get_if<StatusText>(&e); s && s->text.find(needle) != std::string::npos) return true;
  return false;
}

}  // namespace

TEST(Severity, Definition) {
  const auto& spec = fft::registry().at("ATC_RAT_RLL_P");
  EXPECT_EQ(severity(0.135, spec, 0.135), 0.0);
  EXPECT_NEAR(severity(0.135 + 0.25 * (0.5 - 0.01), spec, 0.135), 1.0, 1e-12);
  EXPECT_NEAR(severity(0.135 - 0.25 * (0.5 - 0.01), spec, 0.135), 1.0, 1e-12);
  const ParamSpec flat{"F", 1.0, 1.0, 0.1, 1.0, ""};
  EXPECT_EQ(severity(1.0, flat, 1.0), 0.0);
}

TEST(Severity, ClassTakesMaxOfMembers) {
  const auto& reg = fft::registry();
  const auto& rll = reg.at("ATC_RAT_RLL_P");
  const auto& pit = reg.at("ATC_RAT_PIT_P");
  const double q = 0.25 * (rll.max - rll.min);
  const ParamSet p{{"ATC_RAT_RLL_P", 0.135 + 0.3 * q}, {"ATC_RAT_PIT_P", 0.135 + 1.4 * (0.25 * (pit.max - pit.min))}};
  const auto sev = class_severities(p, reg, FaultTable::builtin());
  EXPECT_NEAR(sev[static_cast<int>(AnomalyType::Deviation)], 1.4, 1e-12);
  EXPECT_EQ(sev[static_cast<int>(AnomalyType::Crash)], 0.0);
}

TEST(FaultTable, BuiltinMatchesShippedFileAndRegistry) {
  const auto file = FaultTable::from_json(nlohmann::json::parse(fft::read_file(fft::data_path("fault_table.json"))));
  EXPECT_EQ(file.to_json(), FaultTable::builtin().to_json());
  EXPECT_NO_THROW(FaultTable::builtin().check(fft::registry()));
  for (auto type : kAllAnomalyTypes) EXPECT_GE(FaultTable::builtin().linked(type).size(), 2u);
  EXPECT_THROW(FaultTable({{"NOPE", 1.0, AnomalyType::Crash}}).check(fft::registry()), ConfigError);
  EXPECT_THROW(FaultTable({{"PSC_ACCZ_P", 9.0, AnomalyType::Crash}}).check(fft::registry()), ConfigError);
}

TEST(SimConfig, RateAndStepMustAgree) {
  SimConfig c;
  EXPECT_NO_THROW(c.check(fft::registry()));
  c.dt = 0.05;
  EXPECT_THROW(c.check(fft::registry()), ConfigError);
  const auto derived = sim_config_from_json({{"sample_rate_hz", 20.0}});
  EXPECT_DOUBLE_EQ(derived.dt, 0.05);
  EXPECT_NO_THROW(derived.check(fft::registry()));
}

TEST(Simulator, OptimalSquareStaysOnPathAndLands) {
  const auto plan = fft::load_plan("square");
  const auto run = fly(optimal_params(fft::registry(), FaultTable::builtin()), plan);
  ASSERT_TRUE(std::holds_alternative<Landed>(run.events.back()));
  for (const auto& s : run.samples) EXPECT_LE(path_distance(s.pos, plan), 0.5) << "t=" << s.t;
  EXPECT_TRUE(detect_all(run.events, DetectorConfig{}, plan).empty());
  int reached = 0;
  for (const auto& e : run.events)
    if (const auto* w = std::get_if<WaypointReached>(&e)) EXPECT_EQ(w->index, ++reached);
  EXPECT_EQ(reached, 4);
}

TEST(Simulator, DeviationCorrectedMidFlight) {
  const auto plan = fft::load_plan("square");
  const double fix_t = 40.0;
  const auto run = fly(fft::fault_at("ATC_RAT_RLL_P", 1.5, 1), plan, 1, fix_t, {{"ATC_RAT_RLL_P", 0.135}});
  double before = 0.0;
  for (const auto& s : run.samples) {
    if (s.t <= fix_t) before = std::max(before, path_distance(s.pos, plan));
    if (s.t >= fix_t + 3.0) EXPECT_LT(path_distance(s.pos, plan), 10.0) << "t=" << s.t;
  }
  EXPECT_GT(before, 10.0);
  EXPECT_TRUE(std::holds_alternative<Landed>(run.events.back()));
}

TEST(Simulator, ExtremeCrashParamHitsGroundFast) {
  const auto run = fly(fft::fault_at("PSC_ACCZ_P", 2.5, 1), fft::load_plan("square"));
  ASSERT_TRUE(has_status(run, "SIM Hit ground"));
  const auto& last = run.samples.back();
  EXPECT_GT(last.speed(), 3.0);
  EXPECT_EQ(last.pos.z, 0.0);
}

TEST(Simulator, ThrustFaultWarnsAndCapsClimb) {
  const auto run = fly(fft::fault_at("MOT_SPIN_MIN", 1.5, 1), fft::load_plan("square"));
  EXPECT_TRUE(has_status(run, "Potential Thrust Loss"));
  for (const auto& s : run.samples) EXPECT_LE(s.vel.z, 2.0 + 1e-9);
}

TEST(Simulator, TimeoutFaultCrawls) {
  SimConfig cfg;
  cfg.mission_timeout_s = 60.0;
  Simulator sim(fft::registry(), cfg, fft::fault_at("WPNAV_ACCEL", 1.5, -1), fft::load_plan("square"));
  std::vector<TelemetryEvent> events;
  while (!sim.finished())
    for (auto& e : sim.step()) events.push_back(std::move(e));
  EXPECT_TRUE(sim.state().timed_out);
  EXPECT_TRUE(std::holds_alternative<MissionTimeout>(events.back()));
  EXPECT_LT(std::get<FlightSample>(events[events.size() - 2]).speed(), 1.0);
}

TEST(Simulator, Deterministic) {
  const auto plan = fft::load_plan("survey");
  const auto params = fft::fault_at("PSC_VELZ_P", 1.6, -1);
  const auto a = fly(params, plan, 17);
  const auto b = fly(params, plan, 17);
  ASSERT_EQ(a.events.size(), b.events.size());
  for (std::size_t i = 0; i < a.events.size(); ++i) ASSERT_EQ(a.events[i], b.events[i]) << i;
  const auto c = fly(fft::fault_at("ATC_RAT_PIT_P", 1.6, 1), plan, 18);
  const auto d = fly(fft::fault_at("ATC_RAT_PIT_P", 1.6, 1), plan, 19);
  EXPECT_NE(c.samples[200].pos, d.samples[200].pos);
}

TEST(Simulator, ContinuityAcrossUploads) {
  const auto plan = fft::load_plan("square");
  const double bound = (plan.cruise_speed + SimDynamics{}.offset_slew_limit_mps) * SimConfig{}.dt;
  for (const auto& [param, dir] : std::vector<std::pair<std::string, int>>{
           {"ATC_RAT_RLL_P", 1}, {"PSC_ACCZ_P", 1}, {"MOT_THST_EXPO", -1}, {"PSC_VELXY_P", 1}, {"PSC_VELZ_P", -1}}) {
    for (double sev : {1.2, 2.5}) {
      auto params = fft::fault_at(param, sev, dir);
      const auto run = fly(params, plan, 3, 33.0, optimal_params(fft::registry(), FaultTable::builtin()));
      for (std::size_t i = 1; i < run.samples.size(); ++i)
        ASSERT_LE(distance(run.samples[i].pos, run.samples[i - 1].pos), bound + 1e-9)
            << param << "@" << sev << " t=" << run.samples[i].t;
    }
  }
}

TEST(Simulator, IdenticalUploadIsIdempotent) {
  const auto plan = fft::load_plan("square");
  const auto params = fft::fault_at("ATC_RAT_RLL_P", 1.2, 1);
  const auto a = fly(params, plan, 4);
  const auto b = fly(params, plan, 4, 20.0, params);
  ASSERT_EQ(a.events.size(), b.events.size());
  for (std::size_t i = 0; i < a.events.size(); ++i) ASSERT_EQ(a.events[i], b.events[i]);
}

TEST(Simulator, UploadAfterLandingHasNoEffect) {
  Simulator sim(fft::registry(), SimConfig{}, {}, fft::load_plan("survey"));
  while (!sim.finished()) sim.step();
  ASSERT_TRUE(sim.state().landed);
  const auto before = sim.state().pos;
  sim.apply_params({{"PSC_ACCZ_P", 1.5}});
  EXPECT_TRUE(sim.step().empty());
  EXPECT_EQ(sim.state().pos, before);
}

TEST(Simulator, StateInvariantsEveryStep) {
  for (const auto& [param, sev] : std::vector<std::pair<std::string, double>>{
           {"PSC_ACCZ_P", 2.5}, {"PSC_ACCZ_P", 1.5}, {"ATC_RAT_RLL_P", 2.5}, {"WPNAV_ACCEL", 1.2}}) {
    Simulator sim(fft::registry(), SimConfig{}, fft::fault_at(param, sev, 1), fft::load_plan("square"));
    sim.set_step_observer([&](const SimState& s) {
      ASSERT_FALSE(s.landed && s.crashed);
      if (!s.crashed) ASSERT_GE(s.pos.z, 0.0);
    });
    while (!sim.finished()) sim.step();
  }
}

// Every fault-table parameter, pushed to severity 1.5 on each reachable side,
// trips its own detector and no other.
TEST(Simulator, ClassIsolation) {
  const auto plan = fft::load_plan("square");
  const auto table = FaultTable::builtin();
  for (const auto& entry : table.entries()) {
    const auto& spec = fft::registry().at(entry.param);
    for (int dir : {1, -1}) {
      const double v = entry.optimal + dir * 1.5 * 0.25 * (spec.max - spec.min);
      if (v < spec.min || v > spec.max) continue;
      const auto run = fly(fft::fault_at(entry.param, 1.5, dir), plan);
      const auto anomalies = detect_all(run.events, DetectorConfig{}, plan);
      ASSERT_FALSE(anomalies.empty()) << entry.param << " dir " << dir;
      for (const auto& a : anomalies) EXPECT_EQ(a.kind, entry.anomaly) << entry.param << " dir " << dir;
    }
  }
}

// Applying the optimal values ten seconds after the first detection still
// leads to a landed mission for every single fault in [1, 2).
TEST(Simulator, RepairableWithinTenSeconds) {
  const auto optimal = optimal_params(fft::registry(), FaultTable::builtin());
  for (const auto& plan_id : {"square", "survey"}) {
    const auto plan = fft::load_plan(plan_id);
    const auto table = FaultTable::builtin();
  for (const auto& entry : table.entries()) {
      const auto& spec = fft::registry().at(entry.param);
      for (double sev : {1.0, 1.3, 1.6, 1.95}) {
        for (int dir : {1, -1}) {
          const double v = entry.optimal + dir * sev * 0.25 * (spec.max - spec.min);
          if (v < spec.min || v > spec.max) continue;
          Simulator sim(fft::registry(), SimConfig{}, {{entry.param, v}}, plan);
          DetectorState det(plan);
          std::optional<double> onset;
          bool applied = false;
          std::vector<TelemetryEvent> events = sim.initial_events();
          for (const auto& e : events) update(det, DetectorConfig{}, e, plan);
          while (!sim.finished()) {
            if (onset && !applied && sim.state().t >= *onset + 10.0) {
              sim.apply_params(optimal);
              applied = true;
            }
            for (const auto& e : sim.step()) {
              if (auto a = update(det, DetectorConfig{}, e, plan); a && !onset) onset = a->t;
            }
          }
          EXPECT_TRUE(sim.state().landed) << plan_id << " " << entry.param << "@" << sev * dir;
        }
      }
    }
  }
}

TEST(SimMission, StreamsThenReportsFinalStatus) {
  SimLink link(fft::registry(), SimConfig{});
  auto m = link.start_sim({}, fft::load_plan("survey"));
  long n = 0;
  double last = -1.0;
  while (auto e = m->next_event()) {
    ASSERT_GE(event_time(*e), last);
    last = event_time(*e);
    ++n;
  }
  EXPECT_GT(n, 0);
  EXPECT_TRUE(m->ended());
  EXPECT_EQ(m->stop(), FinalStatus::landed());
  EXPECT_THROW(m->upload_params({}), StaleHandle);
}

TEST(SimLink, RejectsInvalidStart) {
  SimLink link(fft::registry(), SimConfig{});
  EXPECT_THROW(link.start_mission({{"ATC_RAT_RLL_P", 2.0}}, fft::load_plan("square")), ValidationError);
  EXPECT_THROW(link.start_mission({}, MissionPlan{{{0, 0, 0}}, 5.0}), ValidationError);
  auto m = link.start_mission({}, fft::load_plan("square"));
  EXPECT_THROW(m->upload_params({{"NOPE", 1.0}}), ValidationError);
  EXPECT_EQ(m->stop(), FinalStatus::aborted("stopped"));
}
