#include "flightfix/advisor.hpp"

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <thread>

#include "flightfix/errors.hpp"

namespace flightfix {

nlohmann::json to_json(const RepairAdvice& advice) {
  nlohmann::json doc = {{"updates", to_json(advice.updates)}, {"rationale", advice.rationale}};
  if (!advice.warnings.empty()) doc["warnings"] = advice.warnings;
  return doc;
}

RepairAdvice advice_from_json(const nlohmann::json& doc) {
  RepairAdvice a;
  a.updates = param_set_from_json(doc.at("updates"));
  a.rationale = doc.value("rationale", std::string());
  a.warnings = doc.value("warnings", std::vector<std::string>{});
  return a;
}

std::string_view to_string(MockMode mode) {
  switch (mode) {
    case MockMode::Optimal:
      return "optimal";
    case MockMode::Partial:
      return "partial";
    case MockMode::Noop:
      return "noop";
  }
  return "optimal";
}

std::optional<MockMode> mock_mode_from_string(std::string_view text) {
  for (auto m : {MockMode::Optimal, MockMode::Partial, MockMode::Noop})
    if (text == to_string(m)) return m;
  return std::nullopt;
}

void AdvisorConfig::check() const {
  if (!(timeout_s > 0)) throw ConfigError("advisor timeout must be positive");
  if (max_retries < 0) throw ConfigError("advisor max_retries must not be negative");
  if (!(backoff_base_s >= 0)) throw ConfigError("advisor backoff base must not be negative");
  if (!std::isfinite(temperature) || temperature < 0) throw ConfigError("advisor temperature must be >= 0");
  if (backend == AdvisorBackendKind::Remote) {
    if (endpoint.empty()) throw ConfigError("remote advisor requires an endpoint");
    if (api_key_env.empty()) throw ConfigError("remote advisor requires api_key_env");
    if (endpoint.rfind("http://", 0) != 0 && endpoint.rfind("https://", 0) != 0)
      throw ConfigError("advisor endpoint must be an http(s) URL: " + endpoint);
  }
}

nlohmann::json to_json(const AdvisorConfig& c) {
  return {{"backend", c.backend == AdvisorBackendKind::Mock ? "mock" : "remote"},
          {"mock_mode", std::string(to_string(c.mock_mode))},
          {"endpoint", c.endpoint},
          {"model_name", c.model_name},
          {"api_key_env", c.api_key_env},
          {"timeout_s", c.timeout_s},
          {"max_retries", c.max_retries},
          {"temperature", c.temperature},
          {"strict_advice", c.strict_advice},
          {"backoff_base_s", c.backoff_base_s}};
}

AdvisorConfig advisor_config_from_json(const nlohmann::json& doc) {
  AdvisorConfig c;
  try {
    const auto backend = doc.value("backend", std::string("mock"));
    if (backend == "mock") c.backend = AdvisorBackendKind::Mock;
    else if (backend == "remote") c.backend = AdvisorBackendKind::Remote;
    else throw ConfigError("unknown advisor backend '" + backend + "'");
    const auto mode = doc.value("mock_mode", std::string("optimal"));
    auto m = mock_mode_from_string(mode);
    if (!m) throw ConfigError("unknown mock mode '" + mode + "'");
    c.mock_mode = *m;
    c.endpoint = doc.value("endpoint", c.endpoint);
    c.model_name = doc.value("model_name", c.model_name);
    c.api_key_env = doc.value("api_key_env", c.api_key_env);
    c.timeout_s = doc.value("timeout_s", c.timeout_s);
    c.max_retries = doc.value("max_retries", c.max_retries);
    c.temperature = doc.value("temperature", c.temperature);
    c.strict_advice = doc.value("strict_advice", c.strict_advice);
    c.backoff_base_s = doc.value("backoff_base_s", c.backoff_base_s);
  } catch (const nlohmann::json::exception& ex) {
    throw ConfigError(std::string("advisor config: ") + ex.what());
  }
  c.check();
  return c;
}

namespace {

constexpr std::string_view kTemplateHead =
    "You are tuning the flight controller of a multicopter flying an autonomous waypoint mission.\n"
    "\n"
    "The runtime monitor reported this abnormal behavior: ";

constexpr std::string_view kTemplateMiddle =
    "\n"
    "\n"
    "Tunable parameters, each with its documented range, step size and the value currently loaded:\n";

constexpr std::string_view kTemplateTail =
    "\n"
    "Work out which of these parameters most plausibly cause the reported behavior and give corrected\n"
    "values for them. Every value must lie inside its documented range and on its step grid.\n"
    "\n"
    "Answer with a single JSON object and no other text, shaped like this:\n"
    "{\"parameters\": [{\"name\": \"<PARAMETER_NAME>\", \"value\": <number>}], \"reasoning\": \"<one or two "
    "sentences>\"}\n";

}  // namespace

RepairPrompt build_prompt(AnomalyType anomaly, const ParamSet& current, const ParamRegistry& registry) {
  RepairPrompt p;
  p.anomaly = anomaly;
  p.params_snapshot = current;
  p.text.append(kTemplateHead);
  p.text.append(display_name(anomaly));
  p.text.append(kTemplateMiddle);
  p.text.append(render_param_info(registry, current));
  p.text.append(kTemplateTail);
  return p;
}

std::string mock_oracle(AnomalyType anomaly, const ParamSet& current, const ParamRegistry& registry,
                        const FaultTable& table, MockMode mode) {
  nlohmann::ordered_json params = nlohmann::ordered_json::array();
  for (const auto* entry : table.linked(anomaly)) {
    const auto* spec = registry.find(entry->param);
    if (!spec) continue;
    auto it = current.find(entry->param);
    const double now = it != current.end() ? it->second : spec->default_value;
    double value = now;
    switch (mode) {
      case MockMode::Optimal:
        value = entry->optimal;
        break;
      case MockMode::Partial:
        value = clamp_and_quantize(*spec, now + 0.5 * (entry->optimal - now));
        break;
      case MockMode::Noop:
        break;
    }
    params.push_back({{"name", entry->param}, {"value", value}});
  }
  nlohmann::ordered_json doc;
  doc["parameters"] = std::move(params);
  doc["reasoning"] = std::string("rule table (") + std::string(to_string(mode)) + ") for " +
                     std::string(display_name(anomaly));
  return doc.dump();
}

namespace {

// End offset (one past the closing brace) of the balanced object starting at
// `open`, honoring string literals; npos if unbalanced.
std::size_t match_object(std::string_view s, std::size_t open) {
  int depth = 0;
  bool in_string = false;
  bool escaped = false;
  for (std::size_t i = open; i < s.size(); ++i) {
    const char c = s[i];
    if (in_string) {
      if (escaped) escaped = false;
      else if (c == '\\') escaped = true;
      else if (c == '"') in_string = false;
      continue;
    }
    if (c == '"') in_string = true;
    else if (c == '{') ++depth;
    else if (c == '}' && --depth == 0) return i + 1;
  }
  return std::string_view::npos;
}

std::optional<double> numeric_value(const nlohmann::json& v) {
  if (v.is_number()) return v.get<double>();
  if (v.is_string()) {
    const auto& s = v.get_ref<const std::string&>();
    if (s.empty()) return std::nullopt;
    char* end = nullptr;
    const double d = std::strtod(s.c_str(), &end);
    if (end == s.c_str() + s.size()) return d;
  }
  return std::nullopt;
}

}  // namespace

RepairAdvice parse_response(std::string_view raw, const ParamRegistry& registry, bool strict_advice) {
  std::optional<nlohmann::json> doc;
  bool any_object = false;
  for (std::size_t pos = raw.find('{'); pos != std::string_view::npos; pos = raw.find('{', pos + 1)) {
    const auto end = match_object(raw, pos);
    if (end == std::string_view::npos) continue;
    auto parsed = nlohmann::json::parse(raw.substr(pos, end - pos), nullptr, false);
    if (parsed.is_discarded() || !parsed.is_object()) continue;
    any_object = true;
    if (parsed.contains("parameters")) {
      doc = std::move(parsed);
      break;
    }
  }
  if (!doc) {
    if (any_object) throw AdviceRejected("advisor JSON has no 'parameters' field");
    throw ParseError("no JSON object found in advisor response");
  }

  const auto& list = (*doc)["parameters"];
  if (!list.is_array() || list.empty()) throw AdviceRejected("advisor 'parameters' is missing or empty");

  RepairAdvice advice;
  if (auto r = doc->find("reasoning"); r != doc->end() && r->is_string()) advice.rationale = r->get<std::string>();
  for (const auto& item : list) {
    if (!item.is_object() || !item.contains("name") || !item["name"].is_string()) {
      advice.warnings.push_back("dropped malformed entry " + item.dump());
      continue;
    }
    const auto name = item["name"].get<std::string>();
    const auto* spec = registry.find(name);
    if (!spec) {
      advice.warnings.push_back("dropped unknown parameter " + name);
      continue;
    }
    auto value = item.contains("value") ? numeric_value(item["value"]) : std::nullopt;
    if (!value || !std::isfinite(*value)) {
      advice.warnings.push_back("dropped non-numeric value for " + name);
      continue;
    }
    if (*value < spec->min || *value > spec->max) {
      if (strict_advice)
        throw AdviceRejected("advised " + name + "=" + format_number(*value) + " outside [" +
                             format_number(spec->min) + "," + format_number(spec->max) + "]");
      advice.warnings.push_back("clamped " + name + " from " + format_number(*value));
    }
    if (advice.updates.count(name)) advice.warnings.push_back("duplicate entry for " + name + "; last one kept");
    advice.updates.insert_or_assign(name, clamp_and_quantize(*spec, *value));
  }
  if (advice.updates.empty()) throw AdviceRejected("advisor named no known parameters");
  return advice;
}

std::string MockBackend::complete(const RepairPrompt& prompt) {
  return mock_oracle(prompt.anomaly, prompt.params_snapshot, registry_, table_, mode_);
}

Advisor::Advisor(std::unique_ptr<AdvisorBackend> backend, int max_retries, double backoff_base_s,
                 bool strict_advice, Sleeper sleeper)
    : backend_(std::move(backend)),
      max_retries_(max_retries),
      backoff_base_s_(backoff_base_s),
      strict_advice_(strict_advice),
      sleeper_(std::move(sleeper)) {
  if (!sleeper_)
    sleeper_ = [](double s) { std::this_thread::sleep_for(std::chrono::duration<double>(s)); };
}

std::string Advisor::query(const RepairPrompt& prompt) {
  std::string last;
  for (int attempt = 0; attempt <= max_retries_; ++attempt) {
    if (attempt > 0) sleeper_(backoff_base_s_ * std::ldexp(1.0, attempt - 1));
    ++attempts_;
    try {
      return backend_->complete(prompt);
    } catch (const TransportError& ex) {
      last = ex.what();
    }
  }
  throw AdvisorUnavailable("advisor unavailable after " + std::to_string(max_retries_ + 1) +
                           " attempts: " + last);
}

std::unique_ptr<Advisor> make_advisor(const AdvisorConfig& config, const ParamRegistry& registry,
                                      const FaultTable& table) {
  config.check();
  std::unique_ptr<AdvisorBackend> backend;
  if (config.backend == AdvisorBackendKind::Mock) {
    backend = std::make_unique<MockBackend>(registry, table, config.mock_mode);
  } else {
    const char* key = std::getenv(config.api_key_env.c_str());
    if (!key || !*key) throw ConfigError("environment variable " + config.api_key_env + " is not set");
    backend = std::make_unique<HttpChatBackend>(config.endpoint, config.model_name, key, config.timeout_s,
                                                config.temperature);
  }
  return std::make_unique<Advisor>(std::move(backend), config.max_retries, config.backoff_base_s,
                                   config.strict_advice);
}

AuditLog::AuditLog(const std::filesystem::path& path) : out_(path, std::ios::app) {
  if (!out_) throw IoError("cannot open audit log " + path.string());
}

void AuditLog::write(const nlohmann::json& entry) {
  std::lock_guard lock(mu_);
  out_ << entry.dump() << '\n';
  out_.flush();
  if (!out_) throw IoError("audit log write failed");
}

}  // namespace flightfix
