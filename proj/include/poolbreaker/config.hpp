#pragma once

#include <map>
#include <string>
#include <variant>
#include <vector>

#include "poolbreaker/experiments.hpp"

namespace poolbreaker {

// Values of the small TOML subset accepted in config files: booleans,
// numbers, double-quoted strings and flat arrays of numbers.
using ConfigValue = std::variant<bool, double, std::string, std::vector<double>>;

// Keys are dotted paths ("budget.edit"); top-level keys have no prefix.
using ConfigTable = std::map<std::string, ConfigValue>;

// Supports `# comments`, `[section]` headers and `key = value` lines.
// Throws ConfigError with the line number on malformed input.
ConfigTable parse_config(const std::string& text);
ConfigTable load_config(const std::string& path);

// Applies every key of `table` onto `spec`. Unknown keys and type mismatches
// throw ConfigError naming the key.
void apply_config(const ConfigTable& table, ExperimentSpec& spec);

}  // namespace poolbreaker
