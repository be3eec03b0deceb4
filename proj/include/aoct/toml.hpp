#pragma once

#include <string>

#include <nlohmann/json.hpp>

namespace aoct {

/// Minimal TOML subset, parsed into JSON: [table] / [[array-of-tables]]
/// headers with dotted names, key = value lines, basic and literal strings,
/// integers, floats, booleans, arrays, inline tables, and # comments. Enough
/// for hand-edited configs; dates and multi-line strings are not supported.
/// Throws std::runtime_error with a line number on malformed input.
nlohmann::json parse_toml(const std::string& text);
nlohmann::json parse_toml_file(const std::string& path);

}  // namespace aoct
