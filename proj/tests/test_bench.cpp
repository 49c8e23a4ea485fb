#include <gtest/gtest.h>

#include <fstream>
#include <numeric>
#include <sstream>

#include "flightfix/bench.hpp"
#include "flightfix/errors.hpp"
#include "testing.hpp"

using namespace flightfix;

namespace {

const std::string kHeader =
    R"({"suite":"t","plans":{"p":{"waypoints":[[0,0,0],[0,0,20],[100,0,20]],"cruise_speed":5}}})";

Suite parse(const std::string& text) {
  std::istringstream in(text);
  return parse_suite(in, fft::registry());
}

Suite small_suite() {
  return parse(kHeader + "\n" +
               R"({"case_id":"a","plan_id":"p","overrides":{}})"
               "\n"
               R"({"case_id":"b","plan_id":"p","overrides":{"ATC_RAT_RLL_P":0.3}})"
               "\n"
               R"({"case_id":"c","plan_id":"p","overrides":{"MOT_THST_EXPO":0.2,"PSC_VELXY_P":0.5}})"
               "\n"
               R"({"case_id":"d","plan_id":"p","overrides":{"PSC_ACCZ_P":1.3}})"
               "\n");
}

BenchTally breakdown_a() {
  BenchTally t;
  t.add_bucket(0, 39, 2);
  t.add_bucket(1, 1148, 0);
  t.add_bucket(2, 231, 0);
  t.add_bucket(3, 1, 0);
  return t;
}

BenchTally breakdown_b() {
  BenchTally t;
  t.add_bucket(0, 39, 2);
  t.add_bucket(1, 309, 0);
  t.add_bucket(2, 172, 0);
  t.add_bucket(3, 237, 0);
  t.add_bucket(4, 214, 0);
  t.add_bucket(5, 239, 209);
  return t;
}

BenchReport report_of(const BenchTally& t) {
  BenchReport r;
  r.tally = t;
  finalize_metrics(r);
  return r;
}

}  // namespace

TEST(Suite, ShippedSuiteLoads) {
  const auto& s = fft::shipped_suite();
  EXPECT_EQ(s.name, "synthetic-200");
  EXPECT_EQ(s.cases.size(), 200u);
  EXPECT_EQ(s.plans.size(), 2u);
  for (const auto& c : s.cases) EXPECT_TRUE(validate(fft::registry(), c.overrides).empty()) << c.case_id;
}

TEST(Suite, SchemaErrorsNameTheOffender) {
  auto expect_error = [](const std::string& text, const std::string& needle) {
    try {
      parse(text);
      ADD_FAILURE() << "no error for: " << text;
    } catch (const SchemaError& ex) {
      EXPECT_NE(std::string(ex.what()).find(needle), std::string::npos) << ex.what();
    }
  };
  expect_error(kHeader + "\n{\"case_id\":\"x\",\"plan_id\":\"nonexistent\"}\n", "nonexistent");
  expect_error(kHeader + "\n{\"case_id\":\"x\",\"plan_id\":\"p\"}\n{\"case_id\":\"x\",\"plan_id\":\"p\"}\n", "'x'");
  expect_error(kHeader + "\n{\"case_id\":\"y\",\"plan_id\":\"p\",\"overrides\":{\"BOGUS\":1}}\n", "BOGUS");
  expect_error(kHeader + "\n{\"case_id\":\"z\",\"plan_id\":\"p\",\"overrides\":{\"ATC_RAT_RLL_P\":3}}\n", "ATC_RAT_RLL_P");
  expect_error(kHeader + "\nnot json\n", "line 2");
  expect_error("{\"suite\":\"no plans\"}\n", "plans");
  expect_error("", "empty");
  EXPECT_THROW(load_suite("/nonexistent/suite.jsonl", fft::registry()), IoError);
}

TEST(Suite, EmptyCaseListIsValid) {
  const auto s = parse(kHeader + "\n");
  EXPECT_TRUE(s.cases.empty());
  const auto r = run_suite(s, fft::registry(), fft::mock_factory(MockMode::Optimal), fft::default_bench_config(), {});
  EXPECT_EQ(r.tally.ttc, 0);
  EXPECT_FALSE(r.rsr.defined);
  EXPECT_FALSE(r.anr.defined);
  EXPECT_EQ(r.anr.display(), "undefined");
  EXPECT_EQ(report_to_csv(r), "case_id,result,repair_count,anomalies\n");
}

TEST(Metrics, RsrExamples) {
  EXPECT_EQ(compute_rsr(1380, 1421).rounded, 97);
  EXPECT_EQ(compute_rsr(1171, 1421).rounded, 82);
  EXPECT_EQ(compute_rsr(0, 10).rounded, 0);
  EXPECT_TRUE(compute_rsr(0, 10).defined);
  EXPECT_DOUBLE_EQ(compute_rsr(1380, 1421).exact, 100.0 * 1380 / 1421);
  EXPECT_FALSE(compute_rsr(0, 0).defined);
}

TEST(Metrics, AnrExamples) {
  EXPECT_EQ(compute_anr(1613, 1380).display(), "1.17");
  EXPECT_EQ(compute_anr(5, 5).display(), "1.00");
  EXPECT_DOUBLE_EQ(compute_anr(3415, 1171).exact, 3415.0 / 1171.0);
  EXPECT_FALSE(compute_anr(0, 0).defined);
}

TEST(Metrics, TableBreakdownsReproduceCounts) {
  const auto d = report_of(breakdown_a());
  EXPECT_EQ(d.tally.ttc, 1421);
  EXPECT_EQ(d.tally.nrc, 1380);
  EXPECT_EQ(d.tally.tra, 1613);
  EXPECT_EQ(d.rsr.rounded, 97);
  EXPECT_EQ(d.anr.display(), "1.17");
  const auto q = report_of(breakdown_b());
  EXPECT_EQ(q.tally.ttc, 1421);
  EXPECT_EQ(q.tally.nrc, 1171);
  EXPECT_EQ(q.tally.tra, 3415);
  EXPECT_EQ(q.rsr.rounded, 82);
}

TEST(Metrics, TallyIsCommutativeAndAssociative) {
  const auto a = breakdown_a();
  const auto b = breakdown_b();
  BenchTally c;
  c.add(MissionResult::fail(FailReason::Crash), 2);
  auto ab_c = a;
  ab_c.merge(b);
  ab_c.merge(c);
  auto c_ba = c;
  auto ba = b;
  ba.merge(a);
  c_ba.merge(ba);
  EXPECT_EQ(ab_c, c_ba);
  EXPECT_EQ(ab_c.failures.at("crash"), 1);
}

TEST(Metrics, CombinedAnr) {
  const auto both = combine_anr({breakdown_a(), breakdown_b()});
  EXPECT_DOUBLE_EQ(both.model_weighted.exact, (1613.0 / 1380.0 + 3415.0 / 1171.0) / 2.0);
  EXPECT_DOUBLE_EQ(both.case_weighted.exact, (1613.0 + 3415.0) / (1380.0 + 1171.0));
  const auto none = combine_anr({BenchTally{}});
  EXPECT_FALSE(none.model_weighted.defined);
  EXPECT_FALSE(none.case_weighted.defined);
}

TEST(RunSuite, AccountingIdentities) {
  const auto s = small_suite();
  BenchOptions o;
  o.keep_records = true;
  const auto r = run_suite(s, fft::registry(), fft::mock_factory(MockMode::Partial), fft::default_bench_config(), o);
  ASSERT_EQ(r.per_case.size(), s.cases.size());
  long hist_total = 0;
  for (const auto& [k, v] : r.tally.histogram) hist_total += v.first + v.second;
  EXPECT_EQ(hist_total, r.tally.ttc);
  EXPECT_LE(r.tally.nrc, r.tally.passed);
  EXPECT_LE(r.tally.passed, r.tally.ttc);
  long tra = 0;
  long nrc = 0;
  for (const auto& c : r.per_case)
    if (c.result.passed && c.repair_count >= 1) {
      tra += c.repair_count;
      ++nrc;
    }
  EXPECT_EQ(tra, r.tally.tra);
  EXPECT_EQ(nrc, r.tally.nrc);
  EXPECT_EQ(r.per_case[0].repair_count, 0);
  EXPECT_TRUE(r.per_case[0].result.passed);
  for (std::size_t i = 0; i < r.records.size(); ++i)
    for (const auto& v : fft::record_violations(r.records[i], fft::registry(), 5)) ADD_FAILURE() << i << ": " << v;
}

TEST(RunSuite, ParallelMatchesSerial) {
  const auto& s = fft::shipped_suite();
  for (auto mode : {MockMode::Optimal, MockMode::Partial}) {
    BenchOptions serial_opts;
    const auto serial =
        run_suite_serial(s, fft::registry(), fft::mock_factory(mode), fft::default_bench_config(), serial_opts);
    for (int p : {1, 3, 8}) {
      BenchOptions o;
      o.parallelism = p;
      const auto par = run_suite(s, fft::registry(), fft::mock_factory(mode), fft::default_bench_config(), o);
      EXPECT_EQ(report_to_json(par).dump(), report_to_json(serial).dump()) << p;
    }
  }
  EXPECT_THROW(run_suite(s, fft::registry(), fft::mock_factory(MockMode::Optimal), fft::default_bench_config(),
                         BenchOptions{0}),
               ConfigError);
}

TEST(RunSuite, CaseSeedIgnoresScheduling) {
  EXPECT_EQ(case_seed(1, "abc"), case_seed(1, "abc"));
  EXPECT_NE(case_seed(1, "abc"), case_seed(1, "abd"));
  EXPECT_NE(case_seed(1, "abc"), case_seed(2, "abc"));
}

TEST(RunSuite, InfraFaultsStayPerCase) {
  const auto s = small_suite();
  int calls = 0;
  AdvisorFactory flaky = [&]() -> std::unique_ptr<Advisor> {
    if (++calls == 2) throw std::runtime_error("advisor pool exhausted");
    return fft::mock_factory(MockMode::Optimal)();
  };
  const auto r = run_suite_serial(s, fft::registry(), flaky, fft::default_bench_config(), {});
  EXPECT_EQ(r.per_case[1].result, MissionResult::fail(FailReason::Infra));
  EXPECT_EQ(r.per_case[1].detail, "advisor pool exhausted");
  EXPECT_TRUE(r.per_case[2].result.passed);
  EXPECT_EQ(r.tally.failures.at("infra"), 1);
}

TEST(Export, CsvMatchesGolden) {
  const auto r = run_suite(small_suite(), fft::registry(), fft::mock_factory(MockMode::Partial),
                           fft::default_bench_config(), {});
  EXPECT_EQ(report_to_csv(r), fft::read_file(fft::golden_path("report_small.csv")));
}

TEST(Export, JsonFieldsAndFiles) {
  fft::TempDir dir;
  auto r = run_suite(small_suite(), fft::registry(), fft::mock_factory(MockMode::Optimal),
                     fft::default_bench_config(), {});
  r.advisor = "mock-optimal";
  export_json(r, dir.path() / "r.json");
  export_csv(r, dir.path() / "r.csv");
  const auto doc = nlohmann::json::parse(fft::read_file(dir.path() / "r.json"));
  EXPECT_EQ(doc["ttc"], 4);
  EXPECT_EQ(doc["advisor"], "mock-optimal");
  EXPECT_EQ(doc["cases"].size(), 4u);
  EXPECT_EQ(doc["rsr"]["percent"], 75);
  EXPECT_EQ(fft::read_file(dir.path() / "r.csv"), report_to_csv(r));
  EXPECT_THROW(export_json(r, dir.path() / "missing" / "r.json"), IoError);
  EXPECT_THROW(export_csv(r, dir.path() / "missing" / "r.csv"), IoError);
}

TEST(Export, TraceMarkersBracketTheRepair) {
  fft::TempDir dir;
  SimLink link(fft::registry(), SimConfig{});
  auto advisor = fft::mock_factory(MockMode::Optimal)();
  MissionOptions mo;
  mo.keep_trace = true;
  const auto rec = run_mission(link, fft::fault_at("ATC_RAT_RLL_P", 1.5, 1), fft::load_plan("square"), *advisor,
                               DetectorConfig{}, OrchestratorConfig{}, fft::registry(), mo);
  ASSERT_EQ(rec.markers.size(), 1u);
  export_trace(rec, dir.path() / "trace.csv");
  export_telemetry(rec, dir.path() / "telemetry.jsonl");

  std::ifstream in(dir.path() / "trace.csv");
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "t,x,y,z,event");
  double last_t = -1.0;
  int samples = 0;
  std::vector<std::pair<double, std::string>> markers;
  while (std::getline(in, line)) {
    const auto comma = line.find(',');
    const double t = std::stod(line.substr(0, comma));
    EXPECT_GE(t, last_t);
    last_t = t;
    const auto event = line.substr(line.rfind(',') + 1);
    if (event.empty()) ++samples;
    else markers.emplace_back(t, event);
  }
  ASSERT_EQ(markers.size(), 2u);
  EXPECT_EQ(markers[0].second, "anomaly:deviation");
  EXPECT_EQ(markers[1].second, "upload:deviation");
  EXPECT_LE(markers[0].first, markers[1].first);
  long sample_events = 0;
  for (const auto& e : rec.trace) sample_events += std::holds_alternative<FlightSample>(e);
  EXPECT_EQ(samples, sample_events);

  std::ifstream tel(dir.path() / "telemetry.jsonl");
  long lines = 0;
  while (std::getline(tel, line)) ++lines;
  EXPECT_EQ(lines, static_cast<long>(rec.trace.size()));
}
