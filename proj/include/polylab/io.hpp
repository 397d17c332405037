#pragma once

#include <filesystem>
#include <string>

#include <json.hpp>

namespace polylab {

/// Writes `content` to `path`, creating parent directories. Throws unwritable_path.
void write_text(const std::filesystem::path& path, const std::string& content);

std::string read_text(const std::filesystem::path& path);

nlohmann::json read_json(const std::filesystem::path& path);

/// Two-space indented JSON with a trailing newline.
void write_json(const std::filesystem::path& path, const nlohmann::json& j);

} // namespace polylab
