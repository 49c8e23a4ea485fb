#pragma once

#include <filesystem>
#include <fstream>
#include <functional>
#include <memory>
#include <mutex>
#include <string>
#include <string_view>
#include <vector>

#include "flightfix/anomaly.hpp"
#include "flightfix/paramdb.hpp"
#include "flightfix/simdrone.hpp"

namespace flightfix {

struct RepairPrompt {
  std::string text;
  AnomalyType anomaly = AnomalyType::Deviation;
  ParamSet params_snapshot;
};

struct RepairAdvice {
  ParamSet updates;
  std::string rationale;
  /// Dropped names, clamped values and similar sanitization notes.
  std::vector<std::string> warnings;
};

nlohmann::json to_json(const RepairAdvice& advice);
RepairAdvice advice_from_json(const nlohmann::json& doc);

enum class AdvisorBackendKind { Mock, Remote };
enum class MockMode { Optimal, Partial, Noop };

std::string_view to_string(MockMode mode);
std::optional<MockMode> mock_mode_from_string(std::string_view text);

struct AdvisorConfig {
  AdvisorBackendKind backend = AdvisorBackendKind::Mock;
  MockMode mock_mode = MockMode::Optimal;
  std::string endpoint;
  std::string model_name;
  std::string api_key_env;
  double timeout_s = 30.0;
  int max_retries = 2;
  double temperature = 0.0;
  /// Reject out-of-range advice instead of clamping it.
  bool strict_advice = false;
  double backoff_base_s = 1.0;

  /// Throws ConfigError.
  void check() const;
};

nlohmann::json to_json(const AdvisorConfig& config);
AdvisorConfig advisor_config_from_json(const nlohmann::json& doc);

/// The static template with both variables substituted.
RepairPrompt build_prompt(AnomalyType anomaly, const ParamSet& current, const ParamRegistry& registry);

/// Deterministic stand-in for a language model, answering in the same JSON
/// shape a real completion is asked for.
std::string mock_oracle(AnomalyType anomaly, const ParamSet& current, const ParamRegistry& registry,
                        const FaultTable& table, MockMode mode);

/// Locates the advice object inside free-form completion text and sanitizes
/// it against the registry.
RepairAdvice parse_response(std::string_view raw, const ParamRegistry& registry, bool strict_advice = false);

/// One completion attempt. Throws TransportError on any failure that should
/// be retried.
class AdvisorBackend {
 public:
  virtual ~AdvisorBackend() = default;
  virtual std::string complete(const RepairPrompt& prompt) = 0;
};

class MockBackend : public AdvisorBackend {
 public:
  MockBackend(const ParamRegistry& registry, FaultTable table, MockMode mode)
      : registry_(registry), table_(std::move(table)), mode_(mode) {}
  std::string complete(const RepairPrompt& prompt) override;

 private:
  const ParamRegistry& registry_;
  FaultTable table_;
  MockMode mode_;
};

/// Generic chat-completion endpoint with bearer authentication.
class HttpChatBackend : public AdvisorBackend {
 public:
  HttpChatBackend(std::string endpoint, std::string model, std::string api_key, double timeout_s,
                  double temperature);
  std::string complete(const RepairPrompt& prompt) override;

  /// Request body sent for `prompt`.
  nlohmann::json request_body(const RepairPrompt& prompt) const;

 private:
  std::string base_;
  std::string path_;
  std::string model_;
  std::string api_key_;
  double timeout_s_;
  double temperature_;
};

using Sleeper = std::function<void(double seconds)>;

/// Retry wrapper around a backend: max_retries + 1 attempts with exponential
/// backoff, then AdvisorUnavailable.
class Advisor {
 public:
  Advisor(std::unique_ptr<AdvisorBackend> backend, int max_retries, double backoff_base_s, bool strict_advice,
          Sleeper sleeper = {});

  std::string query(const RepairPrompt& prompt);
  bool strict_advice() const { return strict_advice_; }
  int attempts_made() const { return attempts_; }

 private:
  std::unique_ptr<AdvisorBackend> backend_;
  int max_retries_;
  double backoff_base_s_;
  bool strict_advice_;
  Sleeper sleeper_;
  int attempts_ = 0;
};

/// Builds the advisor described by `config`. For Remote the credential is read
/// here; a missing variable raises ConfigError before any network activity.
std::unique_ptr<Advisor> make_advisor(const AdvisorConfig& config, const ParamRegistry& registry,
                                      const FaultTable& table);

using AdvisorFactory = std::function<std::unique_ptr<Advisor>()>;

/// Append-only JSON-lines log of advisor exchanges.
class AuditLog {
 public:
  explicit AuditLog(const std::filesystem::path& path);
  void write(const nlohmann::json& entry);

 private:
  std::mutex mu_;
  std::ofstream out_;
};

}  // namespace flightfix
