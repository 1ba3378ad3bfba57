#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

namespace noonfi::io {

/// Significant digits used for every number written to CSV or JSON.
inline constexpr int kSignificantDigits = 12;

/// Rounds to kSignificantDigits significant digits.
double round_significant(double x);

/// "%.12g" rendering.
std::string format_number(double x);

std::vector<std::string> split_csv_line(std::string_view line);

/// Strict numeric parse of a whole field; throws SchemaError with context.
double parse_double(const std::string& field, const std::string& context);
long long parse_integer(const std::string& field, const std::string& context);

/// Writes to a sibling temporary file and renames it over the target.
void write_file_atomic(const std::filesystem::path& path, const std::string& contents);

/// 64-bit FNV-1a hash of `data` as 16 lowercase hex digits.
std::string fnv1a_hex(std::string_view data);

std::string read_file(const std::filesystem::path& path);

}  // namespace noonfi::io
