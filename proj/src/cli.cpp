#include "flightfix/cli.hpp"

#include <unistd.h>

#include <CLI11.hpp>
#include <fstream>
#include <iomanip>
#include <iostream>

#include "flightfix/bench.hpp"
#include "flightfix/errors.hpp"
#include "flightfix/repair.hpp"
#include "flightfix/wire.hpp"

#ifndef FLIGHTFIX_DATA_DIR
#define FLIGHTFIX_DATA_DIR "data"
#endif

namespace flightfix::cli {

namespace {

nlohmann::json read_json_file(const std::filesystem::path& path, const char* what) {
  std::ifstream in(path);
  if (!in) throw IoError(std::string("cannot open ") + what + " " + path.string());
  auto doc = nlohmann::json::parse(in, nullptr, false);
  if (doc.is_discarded()) throw SchemaError(std::string(what) + " " + path.string() + " is not valid JSON");
  return doc;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out || !(out << text)) throw IoError("cannot write " + path.string());
}

std::string self_exe() {
  std::error_code ec;
  auto p = std::filesystem::read_symlink("/proc/self/exe", ec);
  return ec ? std::string("flightfix") : p.string();
}

std::unique_ptr<VehicleLink> make_link(const std::string& vehicle, const ParamRegistry& registry,
                                       const HarnessConfig& config) {
  if (vehicle == "sim") return std::make_unique<SimLink>(registry, config.sim);
  if (vehicle == "subprocess") {
    std::vector<std::string> argv = {self_exe(), "--registry", config.registry_path.string(), "--seed",
                                     std::to_string(config.sim.seed), "sim-serve"};
    return std::make_unique<WireLink>(subprocess_connector(std::move(argv)), registry);
  }
  const std::string prefix = "tcp://";
  if (vehicle.rfind(prefix, 0) == 0) {
    const auto rest = vehicle.substr(prefix.size());
    const auto colon = rest.rfind(':');
    if (colon == std::string::npos) throw ConfigError("vehicle address must be tcp://host:port");
    int port = 0;
    try {
      port = std::stoi(rest.substr(colon + 1));
    } catch (const std::exception&) {
      throw ConfigError("bad port in " + vehicle);
    }
    return std::make_unique<WireLink>(tcp_connector(rest.substr(0, colon), port), registry);
  }
  throw ConfigError("unknown vehicle '" + vehicle + "' (sim, subprocess, tcp://host:port)");
}

std::string join_anomalies(const std::vector<AnomalyType>& list) {
  std::string out;
  for (auto a : list) out += (out.empty() ? "" : ";") + std::string(to_id(a));
  return out.empty() ? "-" : out;
}

void write_manifest(const std::filesystem::path& dir, const std::string& run_id, const std::string& command,
                    const HarnessConfig& config, const std::vector<std::string>& files) {
  nlohmann::json doc = {{"run_id", run_id}, {"command", command}, {"config", to_json(config)}, {"files", files}};
  write_text(dir / "manifest.json", doc.dump(2) + "\n");
}

template <typename F>
int guarded(std::ostream& err, F&& body) {
  try {
    return body();
  } catch (const ConfigError& ex) {
    err << "config error: " << ex.what() << '\n';
  } catch (const SchemaError& ex) {
    err << "schema error: " << ex.what() << '\n';
  } catch (const ValidationError& ex) {
    err << "invalid input: " << ex.what() << '\n';
  } catch (const IoError& ex) {
    err << "i/o error: " << ex.what() << '\n';
  } catch (const ConnectionError& ex) {
    err << "connection error: " << ex.what() << '\n';
  } catch (const Error& ex) {
    err << "error: " << ex.what() << '\n';
  }
  return kUsage;
}

}  // namespace

int cmd_run(const HarnessConfig& config, const RunOptions& options, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    config.check();
    const auto registry = ParamRegistry::load(config.registry_path);
    config.sim.check(registry);
    const auto params = param_set_from_json(read_json_file(options.params_file, "params file"));
    const auto plan_path =
        options.plan_file.value_or(std::filesystem::path(FLIGHTFIX_DATA_DIR) / "plans" / "square.json");
    const auto plan = plan_from_json(read_json_file(plan_path, "plan file"));
    require_valid(registry, params);
    auto advisor = make_advisor(config.advisor, registry, config.sim.fault_table);
    auto link = make_link(options.vehicle, registry, config);

    std::string run_id;
    const auto dir = create_run_dir(config.output_dir, &run_id);
    AuditLog audit(dir / "audit.jsonl");
    const auto record = run_mission(*link, params, plan, *advisor, config.detector, config.orchestrator, registry,
                                    MissionOptions{&audit, true});
    write_text(dir / "record.json", to_json(record).dump(2) + "\n");
    export_telemetry(record, dir / "telemetry.jsonl");
    export_trace(record, dir / "trace.csv");
    write_manifest(dir, run_id, "run", config, {"record.json", "audit.jsonl", "telemetry.jsonl", "trace.csv"});

    out << "result=" << record.result.to_string() << " repair_count=" << record.repair_count
        << " anomalies=" << join_anomalies(record.anomaly_record) << '\n'
        << "run_dir=" << dir.string() << '\n';
    return record.result.passed ? kOk : kMissionFailed;
  });
}

int cmd_bench(const HarnessConfig& config, const std::filesystem::path& suite_file, std::ostream& out,
              std::ostream& err) {
  return guarded(err, [&] {
    config.check();
    const auto registry = ParamRegistry::load(config.registry_path);
    config.sim.check(registry);
    const auto suite = load_suite(suite_file, registry);
    // Fail fast on advisor misconfiguration (e.g. missing credential).
    make_advisor(config.advisor, registry, config.sim.fault_table);

    std::string run_id;
    const auto dir = create_run_dir(config.output_dir, &run_id);
    std::filesystem::create_directories(dir / "audit");
    BenchOptions bo;
    bo.parallelism = config.parallelism;
    bo.audit_dir = dir / "audit";
    bo.advisor_label = config.advisor.backend == AdvisorBackendKind::Mock
                           ? "mock-" + std::string(to_string(config.advisor.mock_mode))
                           : "remote:" + config.advisor.model_name;
    const BenchConfig bc{config.sim, config.detector, config.orchestrator};
    const AdvisorFactory factory = [&] { return make_advisor(config.advisor, registry, config.sim.fault_table); };
    const auto report = run_suite(suite, registry, factory, bc, bo);
    export_json(report, dir / "report.json");
    export_csv(report, dir / "report.csv");
    write_manifest(dir, run_id, "bench", config, {"report.json", "report.csv", "audit/"});

    out << "cases=" << report.tally.ttc << " passed=" << report.tally.passed << " triggered=" << report.tally.triggered
        << " nrc=" << report.tally.nrc << " tra=" << report.tally.tra << '\n';
    out << "rsr=" << (report.rsr.defined ? std::to_string(report.rsr.rounded) + "%" : "undefined")
        << " triggered_rsr="
        << (report.triggered_rsr.defined ? std::to_string(report.triggered_rsr.rounded) + "%" : "undefined")
        << " anr=" << report.anr.display() << '\n';
    out << "run_dir=" << dir.string() << '\n';
    return kOk;
  });
}

int cmd_replay(const HarnessConfig& config, const std::filesystem::path& trace_file,
               const std::optional<std::filesystem::path>& plan_file, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    config.detector.check();
    MissionPlan plan;
    if (plan_file) plan = plan_from_json(read_json_file(*plan_file, "plan file"));
    std::ifstream in(trace_file);
    if (!in) throw IoError("cannot open trace " + trace_file.string());
    std::vector<TelemetryEvent> events;
    std::string line;
    long line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
      try {
        events.push_back(wire::decode(line));
      } catch (const ProtocolError& ex) {
        err << trace_file.string() << ":" << line_no << ": " << ex.what() << '\n';
        return static_cast<int>(kUsage);
      }
    }
    DetectorState state(plan);
    for (const auto& ev : events) {
      std::optional<AnomalyEvent> a;
      try {
        a = update(state, config.detector, ev, plan);
      } catch (const ProtocolError& ex) {
        err << "replay: " << ex.what() << '\n';
        return static_cast<int>(kUsage);
      }
      if (a) out << "t=" << format_number(a->t) << ' ' << display_name(a->kind) << ": " << a->detail << '\n';
    }
    return static_cast<int>(kOk);
  });
}

int cmd_params(const HarnessConfig& config, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    const auto registry = ParamRegistry::load(config.registry_path);
    auto row = [&](const std::string& a, const std::string& b, const std::string& c, const std::string& d,
                   const std::string& e) {
      out << std::left << std::setw(18) << a << std::setw(10) << b << std::setw(10) << c << std::setw(10) << d << e
          << '\n';
    };
    row("NAME", "MIN", "MAX", "STEP", "DEFAULT");
    for (const auto& s : registry.specs())
      row(s.name, format_number(s.min), format_number(s.max), format_number(s.step), format_number(s.default_value));
    return static_cast<int>(kOk);
  });
}

namespace {

struct Overrides {
  std::string config_path;
  std::string registry;
  std::string output_dir;
  std::string advisor;
  int parallelism = 0;
  std::optional<std::uint64_t> seed;
};

HarnessConfig resolve_config(const Overrides& o) {
  HarnessConfig c = o.config_path.empty() ? default_harness_config() : load_harness_config(o.config_path);
  if (!o.registry.empty()) c.registry_path = o.registry;
  if (!o.output_dir.empty()) c.output_dir = o.output_dir;
  if (o.parallelism > 0) c.parallelism = o.parallelism;
  if (o.seed) c.sim.seed = *o.seed;
  if (!o.advisor.empty()) {
    if (o.advisor == "remote") {
      c.advisor.backend = AdvisorBackendKind::Remote;
    } else if (o.advisor.rfind("mock-", 0) == 0 && mock_mode_from_string(o.advisor.substr(5))) {
      c.advisor.backend = AdvisorBackendKind::Mock;
      c.advisor.mock_mode = *mock_mode_from_string(o.advisor.substr(5));
    } else {
      throw ConfigError("unknown advisor '" + o.advisor + "'");
    }
  }
  c.check();
  return c;
}

}  // namespace

int main(int argc, char** argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Monitor-and-repair harness for drone flight-control configurations"};
  app.require_subcommand(1);
  Overrides ov;
  app.add_option("--config", ov.config_path, "Harness config file (JSON)");
  app.add_option("--registry", ov.registry, "Parameter registry file");
  app.add_option("--output-dir", ov.output_dir, "Directory receiving per-run output folders");
  app.add_option("--advisor", ov.advisor, "mock-optimal | mock-partial | mock-noop | remote");
  app.add_option("--parallelism", ov.parallelism, "Concurrent missions for bench");
  app.add_option("--seed", ov.seed, "Simulator seed");

  RunOptions run_opts;
  std::string plan_path;
  auto* run = app.add_subcommand("run", "Fly one mission under the repair loop");
  run->add_option("--params", run_opts.params_file, "Initial parameter overrides (JSON object)")->required();
  run->add_option("--plan", plan_path, "Mission plan (JSON)");
  run->add_option("--vehicle", run_opts.vehicle, "sim | subprocess | tcp://host:port");

  std::string suite_path;
  auto* bench = app.add_subcommand("bench", "Run a misconfiguration suite");
  bench->add_option("--suite", suite_path, "Suite file")->required();

  std::string trace_path;
  std::string replay_plan;
  auto* replay = app.add_subcommand("replay", "Run the detectors over a recorded telemetry stream");
  replay->add_option("trace", trace_path, "telemetry.jsonl file")->required();
  replay->add_option("--plan", replay_plan, "Mission plan for the deviation detector");

  app.add_subcommand("params", "List the parameter registry");

  int serve_port = -1;
  double realtime = 0.0;
  auto* serve = app.add_subcommand("sim-serve", "Expose the simulator over the wire protocol");
  serve->add_option("--tcp", serve_port, "Listen on this loopback port instead of stdio (0 = any)");
  serve->add_option("--realtime", realtime, "Pace at this many virtual seconds per wall second");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& ex) {
    const int code = app.exit(ex, out, err);
    return code == 0 ? static_cast<int>(kOk) : static_cast<int>(kUsage);
  }

  HarnessConfig config;
  try {
    config = resolve_config(ov);
  } catch (const Error& ex) {
    err << "config error: " << ex.what() << '\n';
    return kUsage;
  }

  if (*run) {
    if (!plan_path.empty()) run_opts.plan_file = plan_path;
    return cmd_run(config, run_opts, out, err);
  }
  if (*bench) return cmd_bench(config, suite_path, out, err);
  if (*replay) {
    std::optional<std::filesystem::path> plan;
    if (!replay_plan.empty()) plan = replay_plan;
    return cmd_replay(config, trace_path, plan, out, err);
  }
  if (*serve) {
    return guarded(err, [&] {
      const auto registry = ParamRegistry::load(config.registry_path);
      SimLink link(registry, config.sim);
      ServeOptions so;
      so.realtime_factor = realtime;
      so.sample_period = config.sim.dt;
      so.keep_serving = true;
      if (serve_port >= 0) {
        serve_wire_tcp(link, serve_port, so, [&](int port) { err << "listening on 127.0.0.1:" << port << std::endl; });
      } else {
        LineChannel channel(::dup(STDIN_FILENO), ::dup(STDOUT_FILENO));
        serve_wire(link, channel, so);
      }
      return static_cast<int>(kOk);
    });
  }
  return cmd_params(config, out, err);
}

}  // namespace flightfix::cli
