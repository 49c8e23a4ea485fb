#include "flightfix/bench.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

#include "flightfix/errors.hpp"
#include "flightfix/wire.hpp"

namespace flightfix {

Suite parse_suite(std::istream& in, const ParamRegistry& registry) {
  Suite suite;
  std::string line;
  long line_no = 0;
  bool have_header = false;
  std::set<std::string> ids;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = "suite line " + std::to_string(line_no);
    auto doc = nlohmann::json::parse(line, nullptr, false);
    if (doc.is_discarded() || !doc.is_object()) throw SchemaError(where + ": not a JSON object");

    if (!have_header) {
      have_header = true;
      if (!doc.contains("plans") || !doc["plans"].is_object()) throw SchemaError(where + ": header lacks 'plans'");
      suite.name = doc.value("suite", std::string());
      for (const auto& [id, plan] : doc["plans"].items()) {
        try {
          suite.plans.emplace(id, plan_from_json(plan));
        } catch (const ValidationError& ex) {
          throw SchemaError(where + ": plan '" + id + "': " + ex.what());
        }
      }
      continue;
    }

    BenchCase c;
    try {
      c.case_id = doc.at("case_id").get<std::string>();
      c.plan_id = doc.at("plan_id").get<std::string>();
      c.label = doc.value("label", std::string());
      c.overrides = param_set_from_json(doc.value("overrides", nlohmann::json::object()));
    } catch (const nlohmann::json::exception& ex) {
      throw SchemaError(where + ": " + ex.what());
    } catch (const ValidationError& ex) {
      throw SchemaError(where + ": " + ex.what());
    }
    if (c.case_id.empty()) throw SchemaError(where + ": empty case_id");
    if (!ids.insert(c.case_id).second) throw SchemaError("duplicate case_id '" + c.case_id + "'");
    if (!suite.plans.count(c.plan_id))
      throw SchemaError("case '" + c.case_id + "' references unknown plan '" + c.plan_id + "'");
    for (const auto& v : validate(registry, c.overrides)) {
      const char* what = v.kind == Violation::Kind::Unknown ? "unknown parameter" : "invalid value for";
      throw SchemaError("case '" + c.case_id + "': " + what + " '" + v.name + "'");
    }
    suite.cases.push_back(std::move(c));
  }
  if (!have_header) throw SchemaError("suite file is empty");
  return suite;
}

Suite load_suite(const std::filesystem::path& path, const ParamRegistry& registry) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open suite " + path.string());
  return parse_suite(in, registry);
}

void BenchTally::add(const MissionResult& result, int repair_count) {
  ++ttc;
  auto& bucket = histogram[repair_count];
  if (repair_count >= 1) ++triggered;
  if (result.passed) {
    ++bucket.first;
    ++passed;
    if (repair_count >= 1) {
      ++nrc;
      tra += repair_count;
    }
  } else {
    ++bucket.second;
    ++failures[std::string(to_string(result.reason))];
  }
}

void BenchTally::add_bucket(int repair_count, long n_passed, long n_failed, FailReason failure) {
  for (long i = 0; i < n_passed; ++i) add(MissionResult::pass(), repair_count);
  for (long i = 0; i < n_failed; ++i) add(MissionResult::fail(failure), repair_count);
}

void BenchTally::merge(const BenchTally& o) {
  ttc += o.ttc;
  nrc += o.nrc;
  tra += o.tra;
  passed += o.passed;
  triggered += o.triggered;
  for (const auto& [k, v] : o.histogram) {
    histogram[k].first += v.first;
    histogram[k].second += v.second;
  }
  for (const auto& [k, v] : o.failures) failures[k] += v;
}

std::string AnrValue::display() const {
  if (!defined) return "undefined";
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", exact);
  return buf;
}

RsrValue compute_rsr(long nrc, long ttc) {
  if (ttc <= 0) return {};
  const double pct = 100.0 * static_cast<double>(nrc) / static_cast<double>(ttc);
  return {true, pct, std::lround(pct)};
}

AnrValue compute_anr(long tra, long nrc) {
  if (nrc <= 0) return {};
  return {true, static_cast<double>(tra) / static_cast<double>(nrc)};
}

CombinedAnr combine_anr(const std::vector<BenchTally>& tallies) {
  CombinedAnr out;
  double sum = 0.0;
  long n = 0;
  long tra = 0;
  long nrc = 0;
  for (const auto& t : tallies) {
    tra += t.tra;
    nrc += t.nrc;
    auto a = compute_anr(t.tra, t.nrc);
    if (!a.defined) continue;
    sum += a.exact;
    ++n;
  }
  if (n > 0) out.model_weighted = {true, sum / static_cast<double>(n)};
  out.case_weighted = compute_anr(tra, nrc);
  return out;
}

void finalize_metrics(BenchReport& r) {
  r.rsr = compute_rsr(r.tally.nrc, r.tally.ttc);
  r.triggered_rsr = compute_rsr(r.tally.nrc, r.tally.triggered);
  r.anr = compute_anr(r.tally.tra, r.tally.nrc);
}

std::uint64_t case_seed(std::uint64_t base, const std::string& case_id) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : case_id) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return base ^ h;
}

RepairRecord run_case(const BenchCase& bench_case, const Suite& suite, const ParamRegistry& registry,
                      const AdvisorFactory& advisors, const BenchConfig& config, const BenchOptions& options) {
  try {
    SimConfig sim = config.sim;
    sim.seed = case_seed(config.sim.seed, bench_case.case_id);
    SimLink link(registry, sim);
    auto advisor = advisors();
    std::unique_ptr<AuditLog> audit;
    if (options.audit_dir) audit = std::make_unique<AuditLog>(*options.audit_dir / (bench_case.case_id + ".jsonl"));
    MissionOptions mo{audit.get(), options.keep_traces};
    return run_mission(link, bench_case.overrides, suite.plans.at(bench_case.plan_id), *advisor, config.detector,
                       config.orchestrator, registry, mo);
  } catch (const std::exception& ex) {
    RepairRecord rec;
    rec.p_initial = bench_case.overrides;
    rec.final_params = bench_case.overrides;
    rec.result = MissionResult::fail(FailReason::Infra);
    rec.detail = ex.what();
    return rec;
  }
}

namespace {

CaseSummary summarize(const BenchCase& c, const RepairRecord& r) {
  return {c.case_id, c.plan_id, c.label, r.result, r.repair_count, r.anomaly_record, r.terminal_anomaly, r.detail};
}

BenchReport reduce(const Suite& suite, std::vector<RepairRecord> records, const BenchOptions& options) {
  BenchReport report;
  report.suite_name = suite.name;
  report.advisor = options.advisor_label;
  report.per_case.reserve(records.size());
  for (std::size_t i = 0; i < records.size(); ++i) {
    report.tally.add(records[i].result, records[i].repair_count);
    report.per_case.push_back(summarize(suite.cases[i], records[i]));
  }
  finalize_metrics(report);
  if (options.keep_records) report.records = std::move(records);
  return report;
}

}  // namespace

BenchReport run_suite(const Suite& suite, const ParamRegistry& registry, const AdvisorFactory& advisors,
                      const BenchConfig& config, const BenchOptions& options) {
  if (options.parallelism < 1) throw ConfigError("parallelism must be at least 1");
  const auto n = static_cast<long>(suite.cases.size());
  std::vector<RepairRecord> records(suite.cases.size());
#pragma omp parallel for schedule(dynamic, 1) num_threads(options.parallelism)
  for (long i = 0; i < n; ++i)
    records[static_cast<std::size_t>(i)] =
        run_case(suite.cases[static_cast<std::size_t>(i)], suite, registry, advisors, config, options);
  return reduce(suite, std::move(records), options);
}

BenchReport run_suite_serial(const Suite& suite, const ParamRegistry& registry, const AdvisorFactory& advisors,
                             const BenchConfig& config, const BenchOptions& options) {
  std::vector<RepairRecord> records;
  records.reserve(suite.cases.size());
  for (const auto& c : suite.cases) records.push_back(run_case(c, suite, registry, advisors, config, options));
  return reduce(suite, std::move(records), options);
}

namespace {

nlohmann::ordered_json rsr_json(const RsrValue& v) {
  if (!v.defined) return nullptr;
  return {{"exact", v.exact}, {"percent", v.rounded}};
}

nlohmann::ordered_json anr_json(const AnrValue& v) {
  if (!v.defined) return nullptr;
  return {{"exact", v.exact}, {"display", v.display()}};
}

std::string anomalies_field(const std::vector<AnomalyType>& list) {
  std::string out;
  for (auto a : list) {
    if (!out.empty()) out += ';';
    out += to_id(a);
  }
  return out;
}

void write_file(const std::filesystem::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << content;
  out.flush();
  if (!out) throw IoError("write failed for " + path.string());
}

}  // namespace

nlohmann::ordered_json report_to_json(const BenchReport& r) {
  nlohmann::ordered_json doc;
  doc["suite"] = r.suite_name;
  doc["advisor"] = r.advisor;
  doc["ttc"] = r.tally.ttc;
  doc["nrc"] = r.tally.nrc;
  doc["tra"] = r.tally.tra;
  doc["passed"] = r.tally.passed;
  doc["triggered"] = r.tally.triggered;
  doc["rsr"] = rsr_json(r.rsr);
  doc["triggered_rsr"] = rsr_json(r.triggered_rsr);
  doc["anr"] = anr_json(r.anr);
  nlohmann::ordered_json hist = nlohmann::ordered_json::array();
  for (const auto& [k, v] : r.tally.histogram)
    hist.push_back({{"repair_count", k}, {"passed", v.first}, {"failed", v.second}});
  doc["histogram"] = std::move(hist);
  nlohmann::ordered_json fails = nlohmann::ordered_json::object();
  for (const auto& [k, v] : r.tally.failures) fails[k] = v;
  doc["failures"] = std::move(fails);
  nlohmann::ordered_json cases = nlohmann::ordered_json::array();
  for (const auto& c : r.per_case) {
    nlohmann::ordered_json j;
    j["case_id"] = c.case_id;
    j["plan_id"] = c.plan_id;
    j["label"] = c.label;
    j["result"] = c.result.to_string();
    j["repair_count"] = c.repair_count;
    nlohmann::ordered_json an = nlohmann::ordered_json::array();
    for (auto a : c.anomalies) an.push_back(std::string(to_id(a)));
    j["anomalies"] = std::move(an);
    j["terminal_anomaly"] =
        c.terminal_anomaly ? nlohmann::ordered_json(std::string(to_id(*c.terminal_anomaly))) : nullptr;
    if (!c.detail.empty()) j["detail"] = c.detail;
    cases.push_back(std::move(j));
  }
  doc["cases"] = std::move(cases);
  return doc;
}

void export_json(const BenchReport& report, const std::filesystem::path& path) {
  write_file(path, report_to_json(report).dump(2) + "\n");
}

std::string report_to_csv(const BenchReport& r) {
  std::ostringstream out;
  out << "case_id,result,repair_count,anomalies\n";
  for (const auto& c : r.per_case)
    out << c.case_id << ',' << c.result.to_string() << ',' << c.repair_count << ',' << anomalies_field(c.anomalies)
        << '\n';
  if (r.tally.ttc > 0) {
    out << "# ttc=" << r.tally.ttc << " nrc=" << r.tally.nrc << " tra=" << r.tally.tra
        << " triggered=" << r.tally.triggered << '\n';
    out << "# rsr=" << r.rsr.rounded << "% (" << format_number(r.rsr.exact) << ")";
    if (r.triggered_rsr.defined)
      out << " triggered_rsr=" << r.triggered_rsr.rounded << "% (" << format_number(r.triggered_rsr.exact) << ")";
    out << " anr=" << r.anr.display() << '\n';
  }
  return out.str();
}

void export_csv(const BenchReport& report, const std::filesystem::path& path) {
  write_file(path, report_to_csv(report));
}

void export_trace(const RepairRecord& record, const std::filesystem::path& path) {
  std::ostringstream out;
  out << "t,x,y,z,event\n";
  std::size_t next_anomaly = 0;
  std::size_t next_upload = 0;
  auto flush_markers = [&](double upto) {
    while (next_anomaly < record.markers.size() && record.markers[next_anomaly].t_anomaly <= upto) {
      const auto& m = record.markers[next_anomaly++];
      out << format_number(m.t_anomaly) << ",,,,anomaly:" << to_id(m.kind) << '\n';
    }
    while (next_upload < record.markers.size()) {
      const auto& m = record.markers[next_upload];
      if (!m.t_upload) {
        ++next_upload;
        continue;
      }
      if (*m.t_upload > upto || next_upload >= next_anomaly) break;
      out << format_number(*m.t_upload) << ",,,,upload:" << to_id(m.kind) << '\n';
      ++next_upload;
    }
  };
  for (const auto& ev : record.trace) {
    const auto* s = std::get_if<FlightSample>(&ev);
    if (!s) continue;
    flush_markers(s->t - 1e-12);
    out << format_number(s->t) << ',' << format_number(s->pos.x) << ',' << format_number(s->pos.y) << ','
        << format_number(s->pos.z) << ",\n";
  }
  flush_markers(std::numeric_limits<double>::infinity());
  write_file(path, out.str());
}

void export_telemetry(const RepairRecord& record, const std::filesystem::path& path) {
  std::string content;
  for (const auto& ev : record.trace) {
    content += wire::encode(ev);
    content += '\n';
  }
  write_file(path, content);
}

}  // namespace flightfix
