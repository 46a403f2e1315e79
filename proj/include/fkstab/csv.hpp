#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace fkstab {

/// Shortest text that round-trips a double (%.17g); "nan", "inf", "-inf" otherwise.
std::string format_double(double value);

/// RFC 4180 field quoting: fields with a comma, quote, CR or LF are quoted
/// and inner quotes doubled.
std::string csv_escape(std::string_view field);

/// RFC 4180 reader; records end at CRLF or LF.
std::vector<std::vector<std::string>> parse_csv(std::string_view text);

/// Tidy long-format results: one row per (experiment, parameter, n).
struct CsvRow {
  std::string experiment;
  std::string parameter;
  std::size_t n = 0;
  double value = 0.0;
  double std_error = 0.0;
};

class CsvTable {
 public:
  void add(std::string experiment, std::string parameter, std::size_t n, double value, double std_error = 0.0);
  const std::vector<CsvRow>& rows() const noexcept { return rows_; }
  std::string to_string() const;
  void write(const std::filesystem::path& path) const;

 private:
  std::vector<CsvRow> rows_;
};

}  // namespace fkstab
