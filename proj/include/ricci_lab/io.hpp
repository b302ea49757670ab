#pragma once

// Plain CSV and JSON file helpers. Numbers are written with 17 significant
// digits in the C locale so outputs round-trip and are byte-reproducible.

#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace ricci_lab::io {

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<double>> columns;  // columns[c][row]

  std::size_t rows() const { return columns.empty() ? 0 : columns.front().size(); }
  const std::vector<double>& column(const std::string& name) const;
  void add(std::string name, std::vector<double> values);
};

std::string format_double(double v);

void write_csv(const Table& t, const std::string& path);
Table read_csv(const std::string& path);

void write_json(const nlohmann::json& j, const std::string& path);
nlohmann::json read_json(const std::string& path);

// FNV-1a 64-bit of a string, as 16 hex digits.
std::string fnv1a_hex(const std::string& s);

}  // namespace ricci_lab::io
