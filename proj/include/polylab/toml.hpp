#pragma once

#include <filesystem>
#include <string_view>

#include <json.hpp>

namespace polylab {

/// Parses the TOML subset used by config files into JSON: comments, bare and
/// quoted keys, dotted keys, [tables], [[arrays of tables]], strings, integers,
/// floats (incl. inf/nan), booleans, arrays and inline tables. Dates are not
/// supported. Throws config_error with a line number on malformed input.
nlohmann::json parse_toml(std::string_view text);

nlohmann::json load_toml(const std::filesystem::path& path);

} // namespace polylab
