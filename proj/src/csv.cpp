#include "fkstab/csv.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

#include "fkstab/error.hpp"

namespace fkstab {

std::string format_double(double value) {
  if (std::isnan(value)) return "nan";
  if (std::isinf(value)) return value > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", value);
  return buf;
}

std::string csv_escape(std::string_view field) {
  if (field.find_first_of(",\"\r\n") == std::string_view::npos) return std::string(field);
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

std::vector<std::vector<std::string>> parse_csv(std::string_view text) {
  std::vector<std::vector<std::string>> records;
  std::vector<std::string> record;
  std::string field;
  bool quoted = false;
  bool any = false;
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    any = true;
    if (quoted) {
      if (c == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          field += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        field += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      record.push_back(std::move(field));
      field.clear();
    } else if (c == '\n' || c == '\r') {
      if (c == '\r' && i + 1 < text.size() && text[i + 1] == '\n') ++i;
      record.push_back(std::move(field));
      field.clear();
      records.push_back(std::move(record));
      record.clear();
      any = false;
    } else {
      field += c;
    }
  }
  if (quoted) throw IoError("unterminated quoted CSV field");
  if (any) {
    record.push_back(std::move(field));
    records.push_back(std::move(record));
  }
  return records;
}

void CsvTable::add(std::string experiment, std::string parameter, std::size_t n, double value, double std_error) {
  rows_.push_back(CsvRow{std::move(experiment), std::move(parameter), n, value, std_error});
}

std::string CsvTable::to_string() const {
  std::string out = "experiment,parameter,n,value,stderr\r\n";
  for (const auto& r : rows_) {
    out += csv_escape(r.experiment);
    out += ',';
    out += csv_escape(r.parameter);
    out += ',';
    out += std::to_string(r.n);
    out += ',';
    out += format_double(r.value);
    out += ',';
    out += format_double(r.std_error);
    out += "\r\n";
  }
  return out;
}

void CsvTable::write(const std::filesystem::path& path) const {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open " + path.string() + " for writing");
  f << to_string();
  if (!f) throw IoError("write to " + path.string() + " failed");
}

}  // namespace fkstab
