#include <chrono>
#include <cstdio>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "flightfix/bench.hpp"
#include "flightfix/errors.hpp"
#include "flightfix/geometry.hpp"
#include "testing.hpp"

using namespace flightfix;

namespace {

using Problems = std::vector<std::string>;

template <typename T, typename U>
void expect_eq(Problems& p, const T& got, const U& want, const std::string& what) {
  if (!(got == want)) {
    std::ostringstream os;
    os << what << ": got " << got << ", want " << want;
    p.push_back(os.str());
  }
}

void expect(Problems& p, bool ok, const std::string& what) {
  if (!ok) p.push_back(what);
}

struct SuiteRuns {
  std::vector<BenchReport> reports;
};

SuiteRuns& all_runs() {
  static SuiteRuns runs;
  return runs;
}

BenchReport run_shipped(MockMode mode, int parallelism) {
  BenchOptions o;
  o.parallelism = parallelism;
  o.keep_records = true;
  o.advisor_label = "mock-" + std::string(to_string(mode));
  auto r = run_suite(fft::shipped_suite(), fft::registry(), fft::mock_factory(mode), fft::default_bench_config(), o);
  all_runs().reports.push_back(r);
  return r;
}

bool label_is(const CaseSummary& c, const std::string& prefix) { return c.label.rfind(prefix, 0) == 0; }

Problems metric_arithmetic() {
  Problems p;
  BenchTally breakdown_a;
  breakdown_a.add_bucket(0, 39, 2);
  breakdown_a.add_bucket(1, 1148, 0);
  breakdown_a.add_bucket(2, 231, 0);
  breakdown_a.add_bucket(3, 1, 0);
  BenchReport d;
  d.tally = breakdown_a;
  finalize_metrics(d);
  expect_eq(p, d.tally.ttc, 1421L, "Breakdown A TTC");
  expect_eq(p, d.rsr.rounded, 97L, "Breakdown A RSR %");
  expect_eq(p, d.anr.display(), std::string("1.17"), "Breakdown A ANR");

  BenchTally breakdown_b;
  breakdown_b.add_bucket(0, 39, 2);
  breakdown_b.add_bucket(1, 309, 0);
  breakdown_b.add_bucket(2, 172, 0);
  breakdown_b.add_bucket(3, 237, 0);
  breakdown_b.add_bucket(4, 214, 0);
  breakdown_b.add_bucket(5, 239, 209);
  BenchReport q;
  q.tally = breakdown_b;
  finalize_metrics(q);
  expect_eq(p, q.tally.ttc, 1421L, "Breakdown B TTC");
  expect_eq(p, q.rsr.rounded, 82L, "Breakdown B RSR %");
  expect_eq(p, q.anr.display(), std::string("2.91"), "Breakdown B ANR (3415/1171 to 2 decimals)");
  return p;
}

Problems heron_oracle() {
  Problems p;
  std::mt19937_64 gen(2024);
  std::uniform_real_distribution<double> coord(-200.0, 200.0);
  int checked = 0;
  double worst = 0.0;
  while (checked < 2000) {
    const Vec3 a{coord(gen), coord(gen), coord(gen)};
    const Vec3 b{coord(gen), coord(gen), coord(gen)};
    const Vec3 q{coord(gen), coord(gen), coord(gen)};
    if (distance(a, b) < 1e-3) continue;
    worst = std::max(worst, std::abs(point_to_leg_distance(q, a, b) - fft::cross_product_distance(q, a, b)));
    ++checked;
  }
  expect(p, worst <= 1e-9, "max oracle disagreement " + std::to_string(worst));
  const Vec3 a{1.5, -2.0, 9.0};
  const Vec3 q{-4.0, 3.25, 0.0};
  expect(p, point_to_leg_distance(q, a, a) == distance(q, a), "degenerate leg is not |pa|");
  return p;
}

FlightSample sample(double t, Vec3 pos, Vec3 vel) { return FlightSample{t, pos, vel, pos.z, std::nullopt}; }

Problems detector_boundaries() {
  Problems p;
  const MissionPlan line{{{0, 0, 10}, {1000, 0, 10}}, 5.0};
  for (int n = 1; n <= 20; ++n) {
    DetectorConfig c;
    c.deviation_consecutive = n;
    DetectorState s(line);
    int fired = 0;
    for (int i = 0; i < n; ++i) fired += update(s, c, sample(10.0 + 0.1 * i, {50.0 + i, 10.5, 10}, {5, 0, 0}), line).has_value();
    expect_eq(p, fired, 0, "deviation N=" + std::to_string(n) + " after N samples");
    auto a = update(s, c, sample(10.0 + 0.1 * n, {50.0 + n, 10.5, 10}, {5, 0, 0}), line);
    expect(p, a && a->kind == AnomalyType::Deviation, "deviation N=" + std::to_string(n) + " after N+1 samples");
  }
  auto timeout_fires = [&](int n, double speed, double climb) {
    DetectorConfig c;
    c.timeout_consecutive = n;
    DetectorState s(line);
    int fired = 0;
    // The first sample only seeds the altitude reference.
    for (int i = 0; i <= n + 1; ++i) {
      auto a = update(s, c, sample(10.0 + 0.1 * i, {50, 0, 10.0 + climb * i}, {speed, 0, 0}), line);
      if (a && a->kind == AnomalyType::Timeout) ++fired;
      if (i == n) expect_eq(p, fired, 0, "timeout N=" + std::to_string(n) + " fired after N stationary samples");
    }
    return fired;
  };
  for (int n = 1; n <= 20; ++n) {
    expect_eq(p, timeout_fires(n, 0.99, 0.19), 1, "timeout N=" + std::to_string(n) + " at 0.99 m/s, 0.19 m");
    expect_eq(p, timeout_fires(n, 1.01, 0.0), 0, "timeout N=" + std::to_string(n) + " at 1.01 m/s");
    expect_eq(p, timeout_fires(n, 0.0, 0.21), 0, "timeout N=" + std::to_string(n) + " at 0.21 m");
  }
  return p;
}

Problems optimal_end_to_end() {
  Problems p;
  const auto r = run_shipped(MockMode::Optimal, 8);
  expect(p, r.triggered_rsr.defined && r.tally.nrc == r.tally.triggered,
         "triggered RSR " + std::to_string(r.tally.nrc) + "/" + std::to_string(r.tally.triggered));
  for (const auto& c : r.per_case) {
    if (label_is(c, "single") || label_is(c, "extreme"))
      expect(p, c.result.passed && c.repair_count == 1, c.case_id + " " + c.result.to_string() + " rc=" + std::to_string(c.repair_count));
    if (label_is(c, "benign"))
      expect(p, c.result.passed && c.repair_count == 0, c.case_id + " " + c.result.to_string() + " rc=" + std::to_string(c.repair_count));
  }
  std::printf("  optimal: ttc=%ld passed=%ld triggered=%ld rsr=%ld%% triggered_rsr=%ld%% anr=%s\n", r.tally.ttc,
              r.tally.passed, r.tally.triggered, r.rsr.rounded, r.triggered_rsr.rounded, r.anr.display().c_str());
  return p;
}

Problems noop_end_to_end() {
  Problems p;
  const auto r = run_shipped(MockMode::Noop, 8);
  for (std::size_t i = 0; i < r.per_case.size(); ++i) {
    const auto& c = r.per_case[i];
    if (c.repair_count == 0) continue;
    expect(p, c.result == MissionResult::fail(FailReason::RepairLimit) && c.repair_count == 5 &&
                  r.records[i].anomaly_record.size() == 5,
           c.case_id + " " + c.result.to_string() + " rc=" + std::to_string(c.repair_count));
  }
  expect(p, r.rsr.defined && r.rsr.exact == 0.0, "RSR " + std::to_string(r.rsr.exact));
  expect(p, r.tally.triggered > 0, "no case triggered");
  std::printf("  noop: ttc=%ld triggered=%ld rsr=%ld%%\n", r.tally.ttc, r.tally.triggered, r.rsr.rounded);
  return p;
}

Problems partial_end_to_end() {
  Problems p;
  const auto r = run_shipped(MockMode::Partial, 8);
  expect(p, r.anr.defined && r.anr.exact > 1.0, "ANR " + r.anr.display());
  expect(p, r.rsr.defined && r.rsr.exact >= 90.0, "RSR " + std::to_string(r.rsr.exact));
  long failed = 0;
  for (const auto& [k, v] : r.tally.histogram) failed += v.second;
  expect(p, failed > 0, "no failed bucket");
  std::printf("  partial: rsr=%ld%% (%.2f) anr=%s failed=%ld\n", r.rsr.rounded, r.rsr.exact, r.anr.display().c_str(),
              failed);
  return p;
}

Problems repair_reverses_deviation() {
  Problems p;
  auto fly = [] {
    SimLink link(fft::registry(), SimConfig{});
    auto advisor = fft::mock_factory(MockMode::Optimal)();
    MissionOptions mo;
    mo.keep_trace = true;
    return run_mission(link, fft::fault_at("ATC_RAT_RLL_P", 1.5, 1), fft::load_plan("square"), *advisor,
                       DetectorConfig{}, OrchestratorConfig{}, fft::registry(), mo);
  };
  const auto rec = fly();
  const auto again = fly();
  expect(p, to_json(rec) == to_json(again) && rec.trace == again.trace, "demo case not deterministic");
  expect(p, rec.result.passed && rec.repair_count == 1, "demo case " + rec.result.to_string());
  if (rec.markers.empty() || !rec.markers[0].t_upload) {
    p.push_back("no upload marker");
    return p;
  }
  const double t_anomaly = rec.markers[0].t_anomaly;
  const double t_upload = *rec.markers[0].t_upload;
  const auto plan = fft::load_plan("square");
  DetectorState legs(plan);
  double before = 0.0;
  double after = 0.0;
  for (const auto& ev : rec.trace) {
    update(legs, DetectorConfig{}, ev, plan);
    const auto* s = std::get_if<FlightSample>(&ev);
    if (!s) continue;
    const double d = cross_track_distance(legs, plan, s->pos);
    if (s->t <= t_upload) before = std::max(before, d);
    if (s->t >= t_upload + 3.0) after = std::max(after, d);
  }
  expect(p, before > 10.0, "max cross-track before upload " + std::to_string(before));
  expect(p, after < 10.0, "max cross-track from upload+3 s " + std::to_string(after));

  fft::TempDir dir;
  export_trace(rec, dir.path() / "trace.csv");
  const auto csv = fft::read_file(dir.path() / "trace.csv");
  std::ostringstream anomaly_row, upload_row;
  anomaly_row << format_number(t_anomaly) << ",,,,anomaly:deviation";
  upload_row << format_number(t_upload) << ",,,,upload:deviation";
  const auto a = csv.find(anomaly_row.str());
  const auto u = csv.find(upload_row.str());
  expect(p, a != std::string::npos && u != std::string::npos && a < u, "trace markers missing or out of order");
  std::printf("  demo: anomaly t=%.1f upload t=%.1f max before=%.2f m, max after+3s=%.2f m\n", t_anomaly, t_upload,
              before, after);
  return p;
}

Problems determinism() {
  Problems p;
  for (auto mode : {MockMode::Optimal, MockMode::Partial, MockMode::Noop}) {
    const auto one = report_to_json(run_shipped(mode, 1)).dump();
    const auto eight = report_to_json(run_shipped(mode, 8)).dump();
    const auto eight_again = report_to_json(run_shipped(mode, 8)).dump();
    expect(p, one == eight && eight == eight_again, std::string("reports differ for ") + std::string(to_string(mode)));
  }
  return p;
}

Problems advisor_corpus() {
  Problems p;
  const auto& corpus = fft::advice_wrapper_corpus();
  expect_eq(p, corpus.size(), std::size_t{20}, "corpus size");
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    try {
      const auto a = parse_response(corpus[i], fft::registry());
      expect(p, a.updates == ParamSet{{"ATC_RAT_RLL_P", 0.135}}, "corpus entry " + std::to_string(i));
    } catch (const Error& ex) {
      p.push_back("corpus entry " + std::to_string(i) + ": " + ex.what());
    }
  }
  const std::string unknown = R"({"parameters":[{"name":"NOPE","value":1},{"name":"PSC_VELZ_P","value":5}]})";
  const auto dropped = parse_response(unknown, fft::registry());
  expect(p, dropped.updates == ParamSet{{"PSC_VELZ_P", 5.0}} && dropped.warnings.size() == 1, "unknown not dropped");
  const std::string out_of_range = R"({"parameters":[{"name":"ATC_RAT_RLL_P","value":0.9}]})";
  const auto clamped = parse_response(out_of_range, fft::registry(), false);
  expect(p, clamped.updates == ParamSet{{"ATC_RAT_RLL_P", 0.5}}, "out-of-range not clamped");
  bool rejected = false;
  try {
    parse_response(out_of_range, fft::registry(), true);
  } catch (const AdviceRejected&) {
    rejected = true;
  }
  expect(p, rejected, "strict mode did not reject out-of-range advice");
  return p;
}

Problems invariant_sweep() {
  Problems p;
  long records = 0;
  for (const auto& r : all_runs().reports) {
    for (std::size_t i = 0; i < r.records.size(); ++i) {
      ++records;
      const auto& rec = r.records[i];
      for (const auto& v : fft::record_violations(rec, fft::registry(), 5))
        p.push_back(r.advisor + "/" + r.per_case[i].case_id + ": " + v);
      if (!rec.time_ordered) p.push_back(r.advisor + "/" + r.per_case[i].case_id + ": telemetry time went backwards");
    }
  }
  expect(p, records >= 1000, "only " + std::to_string(records) + " records swept");
  std::printf("  swept %ld mission records\n", records);
  return p;
}

struct Criterion {
  int id;
  const char* title;
  double budget_s;
  std::function<Problems()> run;
};

}  // namespace

int main() {
  const std::vector<Criterion> criteria = {
      {1, "metric arithmetic vs published breakdowns", 1.0, metric_arithmetic},
      {2, "Heron distance agrees with cross-product oracle", 1.0, heron_oracle},
      {3, "detector boundary exactness", 5.0, detector_boundaries},
      {4, "end-to-end repair, optimal oracle", 60.0, optimal_end_to_end},
      {5, "end-to-end repair, noop oracle", 60.0, noop_end_to_end},
      {6, "multi-iteration repair, partial oracle", 90.0, partial_end_to_end},
      {7, "repair reverses deviation", 5.0, repair_reverses_deviation},
      {8, "determinism and order independence", 300.0, determinism},
      {9, "advisor robustness corpus", 1.0, advisor_corpus},
      {10, "invariant sweep", 60.0, invariant_sweep},
  };
  int failed = 0;
  for (const auto& c : criteria) {
    const auto start = std::chrono::steady_clock::now();
    Problems problems;
    try {
      problems = c.run();
    } catch (const std::exception& ex) {
      problems.push_back(std::string("exception: ") + ex.what());
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (secs > c.budget_s) problems.push_back("took " + std::to_string(secs) + " s, budget " + std::to_string(c.budget_s) + " s");
    std::printf("%s %d: %s (%.3f s)\n", problems.empty() ? "PASS" : "FAIL", c.id, c.title, secs);
    const std::size_t shown = std::min<std::size_t>(problems.size(), 10);
    for (std::size_t i = 0; i < shown; ++i) std::printf("    - %s\n", problems[i].c_str());
    if (problems.size() > shown) std::printf("    ... %zu more\n", problems.size() - shown);
    if (!problems.empty()) ++failed;
  }
  std::printf("%d of %zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
  return failed == 0 ? 0 : 1;
}
