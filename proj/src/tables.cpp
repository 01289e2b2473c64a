#include "pcp/tables.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "pcp/error.hpp"

namespace pcp {

namespace {

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char ch : s) {
    if (ch == '"') out += '"';
    out += ch;
  }
  return out + "\"";
}

}  // namespace

Table::Table(std::vector<std::string> header) : header_(std::move(header)) {
  if (header_.empty()) throw ValidationError("table: empty header");
}

void Table::add_row(std::vector<std::string> row) {
  if (row.size() != header_.size()) throw ValidationError("table: row width does not match header");
  rows_.push_back(std::move(row));
}

std::string Table::to_csv() const {
  std::ostringstream out;
  auto line = [&](const std::vector<std::string>& r) {
    for (std::size_t k = 0; k < r.size(); ++k) out << (k ? "," : "") << csv_field(r[k]);
    out << '\n';
  };
  line(header_);
  for (const auto& r : rows_) line(r);
  return out.str();
}

std::string Table::to_text() const {
  std::vector<std::size_t> width(header_.size());
  for (std::size_t k = 0; k < header_.size(); ++k) width[k] = header_[k].size();
  for (const auto& r : rows_)
    for (std::size_t k = 0; k < r.size(); ++k) width[k] = std::max(width[k], r[k].size());
  std::ostringstream out;
  auto line = [&](const std::vector<std::string>& r) {
    std::string s;
    for (std::size_t k = 0; k < r.size(); ++k) {
      if (k) s += "  ";
      s += r[k];
      if (k + 1 < r.size()) s.append(width[k] - r[k].size(), ' ');
    }
    out << s << '\n';
  };
  line(header_);
  std::size_t total = 0;
  for (std::size_t k = 0; k < width.size(); ++k) total += width[k] + (k ? 2 : 0);
  out << std::string(total, '-') << '\n';
  for (const auto& r : rows_) line(r);
  return out.str();
}

std::string fmt(double v, int digits) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*g", digits, v);
  return buf;
}

std::string fmt_exact(double v) { return fmt(v, 17); }

}  // namespace pcp
