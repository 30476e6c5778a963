#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

// Typed configuration fields shared by the subcommands. A field's value is
// resolved from its default, then the --config file, then a matching flag.

namespace scdh::cli {

using nlohmann::json;

enum class Kind { Int, UInt, Real, OptReal, OptUInt, Bool, String, UIntList, IntList, RealList, Schedule };

struct Field {
  std::string name;
  Kind kind;
  json fallback;
  std::string help;
};

std::string flag_name(const std::string& field);

/// Parses a flag string into JSON of the field's kind. Lists accept either
/// JSON or comma-separated values; schedules accept "20:0.2,27:0.2".
json parse_flag(const Field& field, const std::string& text);

/// Throws ValidationError when `value` does not fit `kind`.
void check_kind(const Field& field, const json& value);

/// Defaults, then the config file object, then flags. Unknown file keys and
/// ill-typed values are rejected. A run manifest is accepted as a config file.
json resolve_config(const std::string& command, const std::vector<Field>& fields,
                    const std::optional<std::string>& config_text,
                    const std::map<std::string, std::string>& flags);

}  // namespace scdh::cli
