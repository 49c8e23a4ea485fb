#include "flightfix/paramdb.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

#include "flightfix/errors.hpp"

namespace flightfix {

std::string format_number(double value) {
  if (value == 0.0) return "0";  // folds -0
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), value);
  if (ec != std::errc{}) return "nan";
  return std::string(buf, end);
}

std::string Violation::to_string() const {
  switch (kind) {
    case Kind::Unknown:
      return "unknown parameter '" + name + "'";
    case Kind::OutOfRange:
      return "parameter '" + name + "' value " + format_number(value) + " out of range";
    case Kind::NotFinite:
      return "parameter '" + name + "' value is not finite";
  }
  return name;
}

ParamRegistry::ParamRegistry(std::vector<ParamSpec> specs) : specs_(std::move(specs)) {
  std::set<std::string, std::less<>> seen;
  for (const auto& s : specs_) {
    if (s.name.empty()) throw SchemaError("parameter entry with empty name");
    if (!seen.insert(s.name).second) throw SchemaError("duplicate parameter '" + s.name + "'");
    if (!std::isfinite(s.min) || !std::isfinite(s.max) || !std::isfinite(s.step) ||
        !std::isfinite(s.default_value))
      throw SchemaError("parameter '" + s.name + "' has a non-finite field");
    if (s.min > s.max) throw SchemaError("parameter '" + s.name + "' has min > max");
    if (s.step <= 0.0) throw SchemaError("parameter '" + s.name + "' has step <= 0");
    if (s.default_value < s.min || s.default_value > s.max)
      throw SchemaError("parameter '" + s.name + "' default outside [min, max]");
  }
  std::sort(specs_.begin(), specs_.end(),
            [](const ParamSpec& a, const ParamSpec& b) { return a.name < b.name; });
}

ParamRegistry ParamRegistry::from_json(const nlohmann::json& doc) {
  if (!doc.is_array()) throw SchemaError("registry must be a JSON array of parameter objects");
  std::vector<ParamSpec> specs;
  specs.reserve(doc.size());
  for (std::size_t i = 0; i < doc.size(); ++i) {
    const auto& e = doc[i];
    const std::string label = e.is_object() && e.contains("name") && e["name"].is_string()
                                  ? "'" + e["name"].get<std::string>() + "'"
                                  : "#" + std::to_string(i);
    try {
      ParamSpec s;
      s.name = e.at("name").get<std::string>();
      s.min = e.at("min").get<double>();
      s.max = e.at("max").get<double>();
      s.step = e.at("step").get<double>();
      s.default_value = e.at("default").get<double>();
      s.description = e.value("description", std::string{});
      specs.push_back(std::move(s));
    } catch (const nlohmann::json::exception& ex) {
      throw SchemaError("registry entry " + label + ": " + ex.what());
    }
  }
  return ParamRegistry(std::move(specs));
}

ParamRegistry ParamRegistry::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw SchemaError("cannot open registry file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  const std::string text = ss.str();
  if (text.find_first_not_of(" \t\r\n") == std::string::npos) return ParamRegistry{};
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& ex) {
    throw SchemaError("registry file " + path.string() + ": " + ex.what());
  }
  return from_json(doc);
}

const ParamSpec* ParamRegistry::find(std::string_view name) const {
  auto it = std::lower_bound(specs_.begin(), specs_.end(), name,
                             [](const ParamSpec& s, std::string_view n) { return s.name < n; });
  if (it == specs_.end() || it->name != name) return nullptr;
  return &*it;
}

const ParamSpec& ParamRegistry::at(std::string_view name) const {
  if (const auto* s = find(name)) return *s;
  throw ValidationError("unknown parameter '" + std::string(name) + "'");
}

ParamSet ParamRegistry::defaults() const {
  ParamSet out;
  for (const auto& s : specs_) out.emplace(s.name, s.default_value);
  return out;
}

std::vector<Violation> validate(const ParamRegistry& registry, const ParamSet& params) {
  std::vector<Violation> out;
  for (const auto& [name, value] : params) {
    const auto* spec = registry.find(name);
    if (!spec) {
      out.push_back({Violation::Kind::Unknown, name, value});
    } else if (!std::isfinite(value)) {
      out.push_back({Violation::Kind::NotFinite, name, value});
    } else if (value < spec->min || value > spec->max) {
      out.push_back({Violation::Kind::OutOfRange, name, value});
    }
  }
  return out;
}

void require_valid(const ParamRegistry& registry, const ParamSet& params) {
  const auto violations = validate(registry, params);
  if (violations.empty()) return;
  std::string msg = "invalid parameters:";
  for (const auto& v : violations) msg += " " + v.to_string() + ";";
  throw ValidationError(msg);
}

double clamp_and_quantize(const ParamSpec& spec, double value) {
  const double clamped = std::clamp(value, spec.min, spec.max);
  const double k = std::round((clamped - spec.min) / spec.step);
  double q = spec.min + k * spec.step;
  // max need not sit on the step grid; stay inside the range.
  if (q > spec.max) q -= spec.step;
  // Strip accumulated representation noise (0.01 + 25 * 0.005 prints as 0.135).
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.12g", q);
  q = std::strtod(buf, nullptr);
  return std::clamp(q, spec.min, spec.max);
}

ParamSet clamp_and_quantize(const ParamRegistry& registry, const ParamSet& params) {
  ParamSet out;
  for (const auto& [name, value] : params) out.emplace(name, clamp_and_quantize(registry.at(name), value));
  return out;
}

std::string render_param_info(const ParamRegistry& registry, const ParamSet& current) {
  std::string out;
  for (const auto& s : registry.specs()) {
    auto it = current.find(s.name);
    const double value = it != current.end() ? it->second : s.default_value;
    out += s.name + ": range=[" + format_number(s.min) + "," + format_number(s.max) +
           "], step=" + format_number(s.step) + ", current=" + format_number(value) + "\n";
  }
  return out;
}

nlohmann::json to_json(const ParamSet& params) {
  nlohmann::json out = nlohmann::json::object();
  for (const auto& [name, value] : params) out[name] = value;
  return out;
}

ParamSet param_set_from_json(const nlohmann::json& doc) {
  if (!doc.is_object()) throw ValidationError("parameter set must be a JSON object");
  ParamSet out;
  for (const auto& [name, value] : doc.items()) {
    if (!value.is_number()) throw ValidationError("parameter '" + name + "' is not a number");
    out.emplace(name, value.get<double>());
  }
  return out;
}

ParamSet merge(const ParamSet& current, const ParamSet& updates) {
  ParamSet out = current;
  for (const auto& [name, value] : updates) out.insert_or_assign(name, value);
  return out;
}

}  // namespace flightfix
