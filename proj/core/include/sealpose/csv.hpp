#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace sealpose {

/// Empty string for an absent value, otherwise "%.17g".
std::string csv_field(std::optional<double> v);

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  /// Column index by name; throws ContractError when missing.
  std::size_t column(const std::string& name) const;
};

/// Minimal reader for the comma-separated files this library writes
/// (no quoting).
CsvTable read_csv(const std::filesystem::path& path);
CsvTable parse_csv(const std::string& text);

/// Writes `text` to `path`, creating parent directories.
void write_text_file(const std::filesystem::path& path, const std::string& text);

}  // namespace sealpose
