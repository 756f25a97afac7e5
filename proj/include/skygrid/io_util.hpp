#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace skygrid {

std::string_view trim(std::string_view s);
std::vector<std::string> split(std::string_view s, char delim);

/// Strict full-token parse; nullopt on any trailing garbage.
std::optional<double> parse_double(std::string_view s);

/// Shortest representation that round-trips exactly.
std::string format_double(double value);

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& content);

/// 64-bit FNV-1a, stable across platforms (used for config fingerprints).
std::uint64_t fnv1a64(std::string_view data);

}  // namespace skygrid
