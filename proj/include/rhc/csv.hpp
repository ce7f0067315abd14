#pragma once

#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "rhc/dataset.hpp"
#include "rhc/errors.hpp"

namespace rhc {

// column = value predicate on the raw cell text (trimmed, exact match).
struct CsvFilter {
  std::string column;
  std::string value;
};

struct CsvLoadResult {
  DataMatrix X;
  // Original data-row indices (0-based, header excluded) of the retained rows.
  std::vector<int> provenance;
};

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream ss(line);
  while (std::getline(ss, field, ',')) out.push_back(field);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

inline bool parse_double(const std::string& raw, double& out) {
  const std::string s = trim(raw);
  if (s.empty()) return false;
  const char* first = s.data();
  const char* last = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(first, last, out);
  return ec == std::errc() && ptr == last && std::isfinite(out);
}

}  // namespace detail

// UTF-8, header row required, comma-separated, decimal point '.'.
// Filters on the same column OR together; filters on distinct columns AND.
// Rows with unparseable or missing feature values are dropped (never imputed);
// provenance records which original rows were retained.
inline CsvLoadResult load_csv(const std::string& path, const std::vector<std::string>& feature_columns,
                              const std::vector<CsvFilter>& filters = {}) {
  std::ifstream in(path);
  if (!in) throw io_error("load_csv: cannot open '" + path + "'");
  if (feature_columns.empty()) throw std::invalid_argument("load_csv: no feature columns given");

  std::string line;
  if (!std::getline(in, line)) throw io_error("load_csv: '" + path + "' is empty");
  const auto header = detail::split_csv_line(line);
  std::map<std::string, int> col_index;
  for (std::size_t j = 0; j < header.size(); ++j) col_index[detail::trim(header[j])] = static_cast<int>(j);

  std::vector<int> feature_idx;
  for (const auto& name : feature_columns) {
    auto it = col_index.find(name);
    if (it == col_index.end()) throw io_error("load_csv: unknown column '" + name + "'");
    feature_idx.push_back(it->second);
  }
  // column -> accepted values
  std::map<int, std::set<std::string>> accept;
  for (const auto& f : filters) {
    auto it = col_index.find(f.column);
    if (it == col_index.end()) throw io_error("load_csv: unknown filter column '" + f.column + "'");
    accept[it->second].insert(f.value);
  }

  std::vector<std::vector<double>> rows;
  std::vector<int> provenance;
  int row_id = -1;
  while (std::getline(in, line)) {
    ++row_id;
    if (detail::trim(line).empty()) continue;
    const auto fields = detail::split_csv_line(line);
    bool ok = true;
    for (const auto& [col, values] : accept) {
      if (col >= static_cast<int>(fields.size()) || !values.count(detail::trim(fields[col]))) {
        ok = false;
        break;
      }
    }
    if (!ok) continue;
    std::vector<double> feat(feature_idx.size());
    for (std::size_t k = 0; k < feature_idx.size(); ++k) {
      if (feature_idx[k] >= static_cast<int>(fields.size()) ||
          !detail::parse_double(fields[feature_idx[k]], feat[k])) {
        ok = false;
        break;
      }
    }
    if (!ok) continue;
    rows.push_back(std::move(feat));
    provenance.push_back(row_id);
  }

  if (rows.size() < 2) throw io_error("load_csv: fewer than 2 usable rows in '" + path + "'");
  Eigen::MatrixXd m(rows.size(), feature_idx.size());
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < feature_idx.size(); ++j) m(i, j) = rows[i][j];
  return {DataMatrix(std::move(m)), std::move(provenance)};
}

}  // namespace rhc
