#pragma once

// Small table type written both as CSV and as aligned plain text.

#include <filesystem>
#include <string>
#include <vector>

namespace pcp {

class Table {
 public:
  explicit Table(std::vector<std::string> header);

  void add_row(std::vector<std::string> row);
  const std::vector<std::string>& header() const { return header_; }
  const std::vector<std::vector<std::string>>& rows() const { return rows_; }

  std::string to_csv() const;
  std::string to_text() const;

 private:
  std::vector<std::string> header_;
  std::vector<std::vector<std::string>> rows_;
};

/// Fixed significant digits, "nan"/"inf" spelled out.
std::string fmt(double v, int digits = 6);
/// Full round-trip precision.
std::string fmt_exact(double v);

}  // namespace pcp
