#pragma once

#include <Eigen/Dense>

#include <charconv>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include "fastkci/errors.hpp"

namespace fastkci {

/// Numeric table with named columns. Header row required, '.' decimal
/// separator, no quoting.
struct CsvTable {
  std::vector<std::string> columns;
  Eigen::MatrixXd values;

  int column_index(const std::string& name) const {
    for (std::size_t i = 0; i < columns.size(); ++i) {
      if (columns[i] == name) return static_cast<int>(i);
    }
    throw ColumnSpecError("column '" + name + "' not found");
  }
};

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  std::istringstream iss(line);
  while (std::getline(iss, field, ',')) {
    while (!field.empty() && (field.back() == '\r' || field.back() == ' ')) field.pop_back();
    std::size_t start = 0;
    while (start < field.size() && field[start] == ' ') ++start;
    fields.push_back(field.substr(start));
  }
  if (!line.empty() && line.back() == ',') fields.emplace_back();
  return fields;
}

}  // namespace detail

inline CsvTable read_numeric_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FileNotFound("cannot open '" + path + "'");

  std::string line;
  if (!std::getline(in, line)) {
    throw ParseError("empty file '" + path + "'", 0, "");
  }
  CsvTable table;
  table.columns = detail::split_csv_line(line);
  if (table.columns.empty()) {
    throw ParseError("header row of '" + path + "' has no columns", 0, "");
  }

  std::vector<std::vector<double>> rows;
  long row_number = 0;
  while (std::getline(in, line)) {
    if (line.empty() || line == "\r") continue;
    ++row_number;
    const auto fields = detail::split_csv_line(line);
    if (fields.size() != table.columns.size()) {
      throw ParseError("row " + std::to_string(row_number) + " of '" + path + "' has " +
                           std::to_string(fields.size()) + " fields, expected " +
                           std::to_string(table.columns.size()),
                       row_number, "");
    }
    std::vector<double> row(fields.size());
    for (std::size_t c = 0; c < fields.size(); ++c) {
      const std::string& f = fields[c];
      double value = 0.0;
      const auto result = std::from_chars(f.data(), f.data() + f.size(), value);
      if (result.ec != std::errc{} || result.ptr != f.data() + f.size()) {
        throw ParseError("non-numeric cell at row " + std::to_string(row_number) +
                             ", column '" + table.columns[c] + "' in '" + path + "'",
                         row_number, table.columns[c]);
      }
      row[c] = value;
    }
    rows.push_back(std::move(row));
  }

  table.values.resize(static_cast<Eigen::Index>(rows.size()),
                      static_cast<Eigen::Index>(table.columns.size()));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    for (std::size_t c = 0; c < rows[r].size(); ++c) {
      table.values(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c];
    }
  }
  return table;
}

inline void write_csv(const std::string& path, const std::vector<std::string>& columns,
                      const std::vector<std::vector<double>>& rows) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write '" + path + "'");
  out << std::setprecision(17);
  for (std::size_t c = 0; c < columns.size(); ++c) {
    if (c > 0) out << ",";
    out << columns[c];
  }
  out << "\n";
  for (const auto& row : rows) {
    for (std::size_t c = 0; c < row.size(); ++c) {
      if (c > 0) out << ",";
      out << row[c];
    }
    out << "\n";
  }
}

}  // namespace fastkci
