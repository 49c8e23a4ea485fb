#pragma once

#include <filesystem>
#include <string>

#include "flightfix/advisor.hpp"
#include "flightfix/anomaly.hpp"
#include "flightfix/repair.hpp"
#include "flightfix/simdrone.hpp"

namespace flightfix {

/// Everything a CLI invocation needs. Loaded from a JSON file; command-line
/// flags then override individual keys.
struct HarnessConfig {
  std::filesystem::path registry_path;
  DetectorConfig detector;
  OrchestratorConfig orchestrator;
  AdvisorConfig advisor;
  SimConfig sim;
  std::filesystem::path output_dir = "runs";
  int parallelism = 1;

  void check() const;
};

/// Registry shipped with the source tree.
std::filesystem::path default_registry_path();

HarnessConfig default_harness_config();
/// Relative paths inside the document resolve against `base_dir`.
HarnessConfig harness_config_from_json(const nlohmann::json& doc, const std::filesystem::path& base_dir);
HarnessConfig load_harness_config(const std::filesystem::path& path);
nlohmann::json to_json(const HarnessConfig& config);

/// Creates output_dir/<UTC timestamp>-<random suffix>, never reusing an
/// existing directory.
std::filesystem::path create_run_dir(const std::filesystem::path& output_dir, std::string* run_id = nullptr);

}  // namespace flightfix
