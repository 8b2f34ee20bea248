#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace doeforge::io {

std::string readTextFile(const std::filesystem::path& path);

/// Writes `content`, creating parent directories as needed.
void writeTextFile(const std::filesystem::path& path, std::string_view content);

/// Shortest decimal representation that parses back to the same double.
std::string formatDouble(double value);

/// Parses a full field as a double; returns false on any trailing garbage.
bool parseDouble(std::string_view field, double& out);

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;
  std::vector<std::size_t> line_numbers;  // 1-based source line of each row
};

/// Numeric CSV with a header line. Columns listed in `required` must be
/// present; errors name the file and line.
CsvTable readNumericCsv(const std::filesystem::path& path, const std::vector<std::string>& required);

/// Index of `name` in the header, or throws.
std::size_t column(const CsvTable& table, const std::string& name);

/// 64-bit FNV-1a of a file's bytes, as 16 hex digits.
std::string fileHash(const std::filesystem::path& path);

}  // namespace doeforge::io
