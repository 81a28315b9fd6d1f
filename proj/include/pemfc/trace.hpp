// Copyright 2026 The pemfc-online Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "pemfc/errors.hpp"

namespace pemfc {

// Uniformly sampled scalar channel. Sample k sits at t0 + k * dt.
class Trace {
 public:
  Trace() = default;
  Trace(double dt, double t0, std::vector<double> samples)
      : dt_(dt), t0_(t0), samples_(std::move(samples)) {
    if (!(dt_ > 0.0) || !std::isfinite(dt_)) throw DomainError("trace: dt must be positive");
    if (!std::isfinite(t0_)) throw DomainError("trace: non-finite t0");
    for (double v : samples_)
      if (!std::isfinite(v)) throw DomainError("non-finite sample");
  }

  double dt() const { return dt_; }
  double t0() const { return t0_; }
  std::size_t size() const { return samples_.size(); }
  bool empty() const { return samples_.empty(); }
  double time(std::size_t k) const { return t0_ + static_cast<double>(k) * dt_; }
  double operator[](std::size_t k) const { return samples_[k]; }
  const std::vector<double>& samples() const { return samples_; }

 private:
  double dt_ = 1.0;
  double t0_ = 0.0;
  std::vector<double> samples_;
};

namespace csv {

// 17 significant digits round-trips every double.
inline std::string format(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;

  int column(const std::string& name) const {
    for (std::size_t i = 0; i < header.size(); ++i)
      if (header[i] == name) return static_cast<int>(i);
    return -1;
  }
};

inline void write(const std::string& path, const Table& table) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DomainError("cannot open for writing: " + path);
  for (std::size_t i = 0; i < table.header.size(); ++i)
    out << (i ? "," : "") << table.header[i];
  out << '\n';
  for (const auto& row : table.rows) {
    for (std::size_t i = 0; i < row.size(); ++i) out << (i ? "," : "") << format(row[i]);
    out << '\n';
  }
}

inline std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) {
    while (!cell.empty() && (cell.back() == '\r' || cell.back() == ' ')) cell.pop_back();
    while (!cell.empty() && cell.front() == ' ') cell.erase(cell.begin());
    cells.push_back(cell);
  }
  return cells;
}

inline Table read(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DomainError("cannot open: " + path);
  Table table;
  std::string line;
  if (!std::getline(in, line)) throw DomainError("empty csv: " + path);
  table.header = split(line);
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    const auto cells = split(line);
    if (cells.size() != table.header.size())
      throw DomainError(path + ":" + std::to_string(lineno) + ": expected " +
                        std::to_string(table.header.size()) + " columns");
    std::vector<double> row;
    row.reserve(cells.size());
    for (const auto& c : cells) {
      std::size_t used = 0;
      double v = 0.0;
      try {
        v = std::stod(c, &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used != c.size() || c.empty())
        throw DomainError(path + ":" + std::to_string(lineno) + ": bad number '" + c + "'");
      row.push_back(v);
    }
    table.rows.push_back(std::move(row));
  }
  return table;
}

}  // namespace csv

// `t,value` serialization.
inline void write_trace_csv(const std::string& path, const Trace& trace) {
  csv::Table table{{"t", "value"}, {}};
  table.rows.reserve(trace.size());
  for (std::size_t k = 0; k < trace.size(); ++k) table.rows.push_back({trace.time(k), trace[k]});
  csv::write(path, table);
}

inline Trace read_trace_csv(const std::string& path) {
  const auto table = csv::read(path);
  if (table.header != std::vector<std::string>{"t", "value"})
    throw DomainError(path + ": expected header t,value");
  if (table.rows.size() < 2) throw DomainError(path + ": need at least two samples");
  const double t0 = table.rows.front()[0];
  const double dt = table.rows[1][0] - t0;
  std::vector<double> values;
  values.reserve(table.rows.size());
  for (std::size_t k = 0; k < table.rows.size(); ++k) {
    const double expected = t0 + static_cast<double>(k) * dt;
    if (std::abs(table.rows[k][0] - expected) > 1e-9 * std::max(1.0, std::abs(expected)))
      throw DomainError(path + ": non-uniform time grid");
    values.push_back(table.rows[k][1]);
  }
  return Trace(dt, t0, std::move(values));
}

}  // namespace pemfc
