#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace flightfix {

/// Parameter name -> value. Ordered so every rendering is stable.
using ParamSet = std::map<std::string, double, std::less<>>;

/// Official metadata for one flight-control parameter.
struct ParamSpec {
  std::string name;
  double min = 0.0;
  double max = 0.0;
  double step = 0.0;
  double default_value = 0.0;
  std::string description;
};

struct Violation {
  enum class Kind { Unknown, OutOfRange, NotFinite };
  Kind kind;
  std::string name;
  double value = 0.0;

  std::string to_string() const;
};

/// Immutable registry of ParamSpec entries, keyed by name.
class ParamRegistry {
 public:
  ParamRegistry() = default;
  /// Checks every invariant and throws SchemaError naming the offending entry.
  explicit ParamRegistry(std::vector<ParamSpec> specs);

  static ParamRegistry from_json(const nlohmann::json& doc);
  static ParamRegistry load(const std::filesystem::path& path);

  const ParamSpec* find(std::string_view name) const;
  const ParamSpec& at(std::string_view name) const;
  bool contains(std::string_view name) const { return find(name) != nullptr; }

  /// Entries in lexicographic name order.
  const std::vector<ParamSpec>& specs() const { return specs_; }
  std::size_t size() const { return specs_.size(); }
  bool empty() const { return specs_.empty(); }

  ParamSet defaults() const;

 private:
  std::vector<ParamSpec> specs_;
};

/// Every unknown name and every out-of-range or non-finite value. Empty means ok.
std::vector<Violation> validate(const ParamRegistry& registry, const ParamSet& params);

/// Throws ValidationError listing the violations, if any.
void require_valid(const ParamRegistry& registry, const ParamSet& params);

/// Clamp into [min, max] then snap to min + k*step (ties away from zero).
double clamp_and_quantize(const ParamSpec& spec, double value);
ParamSet clamp_and_quantize(const ParamRegistry& registry, const ParamSet& params);

/// One line per registry entry, lexicographic by name:
/// `NAME: range=[min,max], step=s, current=v`. Parameters absent from
/// `current` are listed at their default.
std::string render_param_info(const ParamRegistry& registry, const ParamSet& current);

/// Shortest round-trip decimal representation of a double.
std::string format_number(double value);

nlohmann::json to_json(const ParamSet& params);
ParamSet param_set_from_json(const nlohmann::json& doc);

/// Union of the two sets; entries of `updates` win.
ParamSet merge(const ParamSet& current, const ParamSet& updates);

}  // namespace flightfix
