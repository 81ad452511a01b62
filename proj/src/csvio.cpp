#include "strata/csvio.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace strata {

std::string csv_escape(const std::string& field) {
  if (field.find_first_of(",\"\r\n") == std::string::npos) return field;
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

void write_csv_row(std::ostream& os, const std::vector<std::string>& fields) {
  for (size_t i = 0; i < fields.size(); ++i) {
    if (i) os << ',';
    os << csv_escape(fields[i]);
  }
  os << '\n';
}

int CsvTable::column(const std::string& name) const {
  for (size_t i = 0; i < header.size(); ++i) {
    if (header[i] == name) return static_cast<int>(i);
  }
  return -1;
}

namespace {

std::vector<std::string> parse_line(std::istream& is, bool& eof) {
  std::vector<std::string> fields;
  std::string cur;
  bool in_quotes = false;
  bool any = false;
  int c;
  while ((c = is.get()) != EOF) {
    any = true;
    if (in_quotes) {
      if (c == '"') {
        if (is.peek() == '"') {
          cur += '"';
          is.get();
        } else {
          in_quotes = false;
        }
      } else {
        cur += static_cast<char>(c);
      }
    } else if (c == '"') {
      in_quotes = true;
    } else if (c == ',') {
      fields.push_back(std::move(cur));
      cur.clear();
    } else if (c == '\r') {
      if (is.peek() == '\n') is.get();
      fields.push_back(std::move(cur));
      return fields;
    } else if (c == '\n') {
      fields.push_back(std::move(cur));
      return fields;
    } else {
      cur += static_cast<char>(c);
    }
  }
  eof = true;
  if (any) fields.push_back(std::move(cur));
  return fields;
}

}  // namespace

CsvTable read_csv(std::istream& is) {
  CsvTable t;
  bool eof = false;
  t.header = parse_line(is, eof);
  while (!eof) {
    auto row = parse_line(is, eof);
    if (row.empty()) continue;
    if (row.size() == 1 && row[0].empty()) continue;
    t.rows.push_back(std::move(row));
  }
  return t;
}

CsvTable read_csv_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open CSV file: " + path);
  return read_csv(f);
}

std::string format_double(double x) {
  char buf[40];
  auto [p, ec] = std::to_chars(buf, buf + sizeof(buf), x);
  (void)ec;
  return std::string(buf, p);
}

}  // namespace strata
