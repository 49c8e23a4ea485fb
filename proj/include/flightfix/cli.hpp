#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>

#include "flightfix/config.hpp"

namespace flightfix::cli {

enum ExitCode : int { kOk = 0, kMissionFailed = 1, kUsage = 2 };

/// How `run` reaches the vehicle: "sim" (in process), "subprocess" (this
/// binary's sim-serve over stdio) or "tcp://host:port".
struct RunOptions {
  std::filesystem::path params_file;
  std::optional<std::filesystem::path> plan_file;
  std::string vehicle = "sim";
};

int cmd_run(const HarnessConfig& config, const RunOptions& options, std::ostream& out, std::ostream& err);
int cmd_bench(const HarnessConfig& config, const std::filesystem::path& suite_file, std::ostream& out,
              std::ostream& err);
/// Without a plan the deviation detector has no reference path and stays idle.
int cmd_replay(const HarnessConfig& config, const std::filesystem::path& trace_file,
               const std::optional<std::filesystem::path>& plan_file, std::ostream& out, std::ostream& err);
int cmd_params(const HarnessConfig& config, std::ostream& out, std::ostream& err);

/// Full command-line entry point.
int main(int argc, char** argv, std::ostream& out, std::ostream& err);

}  // namespace flightfix::cli
