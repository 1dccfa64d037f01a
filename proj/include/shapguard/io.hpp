#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace shapguard::io {

// Shortest decimal text that parses back to the identical double.
std::string format_double(double value);

// Parses a full field as a double; returns false on any trailing garbage.
bool parse_double(std::string_view text, double& out);

// Splits one CSV line on commas. Quoted fields are not supported; the flow
// datasets this library targets never quote.
std::vector<std::string> split_csv_line(std::string_view line);

std::string read_file(const std::filesystem::path& path);

// Writes atomically enough for our purposes: parent directories are created,
// content replaces any existing file.
void write_file(const std::filesystem::path& path, std::string_view content);

// Lowercase hex SHA-256 of a byte string / file.
std::string sha256_hex(std::string_view bytes);
std::string sha256_file(const std::filesystem::path& path);

}  // namespace shapguard::io
