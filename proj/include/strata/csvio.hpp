#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace strata {

// RFC 4180 field quoting/escaping; cells containing comma, quote or newline
// are quoted, embedded quotes doubled.
std::string csv_escape(const std::string& field);

void write_csv_row(std::ostream& os, const std::vector<std::string>& fields);

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  int column(const std::string& name) const;  // -1 when absent
};

CsvTable read_csv(std::istream& is);
CsvTable read_csv_file(const std::string& path);

std::string format_double(double x);  // shortest round-trip representation

}  // namespace strata
