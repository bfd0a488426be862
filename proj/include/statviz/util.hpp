#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace statviz::util {

// A CSV field; std::nullopt is an empty (null) field.
using Field = std::optional<std::string>;
using CsvRow = std::vector<Field>;

std::string csv_escape(std::string_view value);
std::string csv_format_row(std::span<const Field> row);
// RFC 4180 parser. Empty unquoted fields are null; "" (quoted empty) is an
// empty string.
std::vector<CsvRow> csv_parse(std::string_view text);

std::string read_file(const std::filesystem::path& path);
// Writes to a sibling temp file and renames it over `path`.
void write_file_atomic(const std::filesystem::path& path, std::string_view contents);
void append_line(const std::filesystem::path& path, std::string_view line);

std::string sha256_hex(std::string_view data);
std::uint64_t fnv1a64(std::string_view data);
std::string base64_encode(std::string_view data);

// Half-up rounding to `digits` decimals with a small guard against binary
// representation error (2.675 rounds to 2.68).
double round_half_up(double value, int digits = 2);
std::string format_fixed(double value, int digits = 2);

std::string trim(std::string_view s);
std::string to_lower(std::string_view s);
// Lowercase, non [a-z0-9._-] characters replaced by '-'.
std::string slugify(std::string_view s);
std::vector<std::string> split_lines(std::string_view text);

} // namespace statviz::util
