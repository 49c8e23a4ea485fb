#include "flightfix/config.hpp"

#include <chrono>
#include <ctime>
#include <fstream>
#include <random>

#include "flightfix/errors.hpp"

#ifndef FLIGHTFIX_DATA_DIR
#define FLIGHTFIX_DATA_DIR "data"
#endif

namespace flightfix {

void HarnessConfig::check() const {
  detector.check();
  orchestrator.check();
  advisor.check();
  if (parallelism < 1) throw ConfigError("parallelism must be at least 1");
  if (output_dir.empty()) throw ConfigError("output_dir must not be empty");
  if (registry_path.empty()) throw ConfigError("registry_path must not be empty");
}

std::filesystem::path default_registry_path() { return std::filesystem::path(FLIGHTFIX_DATA_DIR) / "registry.json"; }

HarnessConfig default_harness_config() {
  HarnessConfig c;
  c.registry_path = default_registry_path();
  return c;
}

namespace {

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
  std::filesystem::path path(p);
  return path.is_absolute() || base.empty() ? path : base / path;
}

}  // namespace

HarnessConfig harness_config_from_json(const nlohmann::json& doc, const std::filesystem::path& base_dir) {
  if (!doc.is_object()) throw ConfigError("config must be a JSON object");
  static const char* const kKnown[] = {"registry_path", "detector", "orchestrator", "advisor",
                                       "sim",           "output_dir", "parallelism"};
  for (const auto& [key, _] : doc.items()) {
    bool ok = false;
    for (const char* k : kKnown) ok = ok || key == k;
    if (!ok) throw ConfigError("unknown config key '" + key + "'");
  }
  HarnessConfig c = default_harness_config();
  try {
    if (doc.contains("registry_path")) c.registry_path = resolve(base_dir, doc["registry_path"].get<std::string>());
    if (doc.contains("output_dir")) c.output_dir = resolve(base_dir, doc["output_dir"].get<std::string>());
    c.parallelism = doc.value("parallelism", c.parallelism);
  } catch (const nlohmann::json::exception& ex) {
    throw ConfigError(std::string("config: ") + ex.what());
  }
  if (doc.contains("detector")) c.detector = detector_config_from_json(doc["detector"]);
  if (doc.contains("orchestrator")) c.orchestrator = orchestrator_config_from_json(doc["orchestrator"]);
  if (doc.contains("advisor")) c.advisor = advisor_config_from_json(doc["advisor"]);
  if (doc.contains("sim")) c.sim = sim_config_from_json(doc["sim"]);
  c.check();
  return c;
}

HarnessConfig load_harness_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  auto doc = nlohmann::json::parse(in, nullptr, false, true);
  if (doc.is_discarded()) throw ConfigError("config " + path.string() + " is not valid JSON");
  return harness_config_from_json(doc, path.parent_path());
}

nlohmann::json to_json(const HarnessConfig& c) {
  return {{"registry_path", c.registry_path.string()},
          {"detector", to_json(c.detector)},
          {"orchestrator", to_json(c.orchestrator)},
          {"advisor", to_json(c.advisor)},
          {"sim", to_json(c.sim)},
          {"output_dir", c.output_dir.string()},
          {"parallelism", c.parallelism}};
}

std::filesystem::path create_run_dir(const std::filesystem::path& output_dir, std::string* run_id) {
  std::error_code ec;
  std::filesystem::create_directories(output_dir, ec);
  if (ec) throw IoError("cannot create output directory " + output_dir.string() + ": " + ec.message());

  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char stamp[32];
  std::strftime(stamp, sizeof(stamp), "%Y%m%dT%H%M%SZ", &tm);

  std::random_device rd;
  std::uniform_int_distribution<unsigned> dist(0, 0xFFFFFF);
  for (int attempt = 0; attempt < 100; ++attempt) {
    char id[64];
    std::snprintf(id, sizeof(id), "%s-%06x", stamp, dist(rd));
    const auto dir = output_dir / id;
    // create_directory reports false when the directory already existed.
    if (std::filesystem::create_directory(dir, ec)) {
      if (run_id) *run_id = id;
      return dir;
    }
    if (ec) throw IoError("cannot create run directory " + dir.string() + ": " + ec.message());
  }
  throw IoError("could not allocate a fresh run directory under " + output_dir.string());
}

}  // namespace flightfix
