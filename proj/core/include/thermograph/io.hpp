#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace thermograph {

// Writes to a sibling temp file and renames it over `path`.
void write_file_atomic(const std::filesystem::path& path, std::string_view content);

std::string read_file(const std::filesystem::path& path);

// Lines without trailing '\r'; blank lines and lines starting with '#' dropped.
std::vector<std::string> read_records(const std::filesystem::path& path);

// Shortest text that parses back to the same double.
std::string format_double(double value);

}  // namespace thermograph
