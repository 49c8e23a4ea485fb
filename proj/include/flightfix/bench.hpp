#pragma once

#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "flightfix/advisor.hpp"
#include "flightfix/repair.hpp"
#include "flightfix/simdrone.hpp"

namespace flightfix {

struct BenchCase {
  std::string case_id;
  ParamSet overrides;
  std::string plan_id;
  /// Free-form description carried through to reports.
  std::string label;
};

struct Suite {
  std::string name;
  std::map<std::string, MissionPlan> plans;
  std::vector<BenchCase> cases;
};

/// Header line {"suite", "plans"} followed by one case object per line.
/// Throws SchemaError naming the offending case or line.
Suite parse_suite(std::istream& in, const ParamRegistry& registry);
Suite load_suite(const std::filesystem::path& path, const ParamRegistry& registry);

/// Streaming fold of mission outcomes. Commutative and associative.
struct BenchTally {
  long ttc = 0;
  long nrc = 0;
  long tra = 0;
  long passed = 0;
  long triggered = 0;
  /// repair_count -> (passed, failed)
  std::map<int, std::pair<long, long>> histogram;
  std::map<std::string, long> failures;

  void add(const MissionResult& result, int repair_count);
  /// Adds `passed` + `failed` outcomes at one repair count.
  void add_bucket(int repair_count, long passed, long failed, FailReason failure = FailReason::RepairLimit);
  void merge(const BenchTally& other);
  bool operator==(const BenchTally&) const = default;
};

struct RsrValue {
  bool defined = false;
  double exact = 0.0;  // percent
  long rounded = 0;    // nearest integer percent
};

struct AnrValue {
  bool defined = false;
  double exact = 0.0;
  std::string display() const;  // two decimals, or "undefined"
};

RsrValue compute_rsr(long nrc, long ttc);
AnrValue compute_anr(long tra, long nrc);

/// Averages over several tallies (one per model): the plain mean of the
/// per-tally ANRs and the pooled TRA / NRC.
struct CombinedAnr {
  AnrValue model_weighted;
  AnrValue case_weighted;
};
CombinedAnr combine_anr(const std::vector<BenchTally>& tallies);

struct CaseSummary {
  std::string case_id;
  std::string plan_id;
  std::string label;
  MissionResult result;
  int repair_count = 0;
  std::vector<AnomalyType> anomalies;
  std::optional<AnomalyType> terminal_anomaly;
  std::string detail;
};

struct BenchReport {
  std::string suite_name;
  std::string advisor;
  BenchTally tally;
  RsrValue rsr;
  /// NRC over triggered cases only.
  RsrValue triggered_rsr;
  AnrValue anr;
  std::vector<CaseSummary> per_case;
  /// Full records in case order, present when BenchOptions::keep_records.
  std::vector<RepairRecord> records;
};

/// Recomputes every metric from a tally.
void finalize_metrics(BenchReport& report);

struct BenchConfig {
  SimConfig sim;
  DetectorConfig detector;
  OrchestratorConfig orchestrator;
};

struct BenchOptions {
  int parallelism = 1;
  bool keep_records = false;
  bool keep_traces = false;
  /// Per-case advisor audit logs are written here when set.
  std::optional<std::filesystem::path> audit_dir;
  std::string advisor_label;
};

/// Simulator seed for one case: independent of scheduling.
std::uint64_t case_seed(std::uint64_t base, const std::string& case_id);

/// Runs one case to completion; infrastructure faults become Failed(infra).
RepairRecord run_case(const BenchCase& bench_case, const Suite& suite, const ParamRegistry& registry,
                      const AdvisorFactory& advisors, const BenchConfig& config, const BenchOptions& options);

/// OpenMP fan-out over cases with an in-order reduction.
BenchReport run_suite(const Suite& suite, const ParamRegistry& registry, const AdvisorFactory& advisors,
                      const BenchConfig& config, const BenchOptions& options);

/// Single-threaded reference implementation of run_suite.
BenchReport run_suite_serial(const Suite& suite, const ParamRegistry& registry, const AdvisorFactory& advisors,
                             const BenchConfig& config, const BenchOptions& options);

/// Canonical report document; contains no wall-clock data.
nlohmann::ordered_json report_to_json(const BenchReport& report);

void export_json(const BenchReport& report, const std::filesystem::path& path);
/// Header `case_id,result,repair_count,anomalies`; aggregate footer lines
/// start with '#' and are omitted for an empty report.
void export_csv(const BenchReport& report, const std::filesystem::path& path);
std::string report_to_csv(const BenchReport& report);

/// Trajectory CSV `t,x,y,z,event`: one row per sample plus marker rows for
/// anomalies and uploads.
void export_trace(const RepairRecord& record, const std::filesystem::path& path);
/// The raw event stream as wire-format lines.
void export_telemetry(const RepairRecord& record, const std::filesystem::path& path);

}  // namespace flightfix
