#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>

namespace ccpt {

/// Parses flat UTF-8 `key = value` text. Blank lines and lines starting with
/// '#' are ignored; duplicate keys and lines without '=' are config errors.
std::map<std::string, std::string> parse_key_values(const std::string& text);

std::string read_text_file(const std::filesystem::path& path);

double parse_double(const std::string& key, const std::string& value);
std::uint64_t parse_uint(const std::string& key, const std::string& value);
int parse_int(const std::string& key, const std::string& value);
bool parse_bool(const std::string& key, const std::string& value);

}  // namespace ccpt
