#pragma once

#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <sstream>
#include <string>
#include <vector>

#include "stablepde/errors.hpp"

namespace stablepde {

/// Minimal comma-separated writer: fixed header, doubles at round-trip
/// precision, no quoting (no field in this project contains a comma).
class CsvWriter {
 public:
  CsvWriter(const std::filesystem::path& path, const std::vector<std::string>& header)
      : path_(path), out_(path), columns_(header.size()) {
    if (!out_) throw IoError("cannot open " + path.string() + " for writing");
    out_.precision(17);
    write_row(header);
  }

  template <typename... Fields>
  void row(const Fields&... fields) {
    std::ostringstream line;
    line.precision(17);
    std::size_t n = 0;
    ((line << (n++ ? "," : "") << fields), ...);
    if (n != columns_) throw IoError(path_.string() + ": row has wrong number of fields");
    out_ << line.str() << '\n';
  }

  void write_row(const std::vector<std::string>& fields) {
    if (fields.size() != columns_) throw IoError(path_.string() + ": row has wrong number of fields");
    for (std::size_t i = 0; i < fields.size(); ++i) out_ << (i ? "," : "") << fields[i];
    out_ << '\n';
  }

  static std::string num(double v) {
    std::ostringstream s;
    s.precision(17);
    s << v;
    return s.str();
  }

 private:
  std::filesystem::path path_;
  std::ofstream out_;
  std::size_t columns_;
};

/// Reads a whole CSV into header + string rows (used by schema checks).
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};

CsvTable read_csv(const std::filesystem::path& path);

}  // namespace stablepde
