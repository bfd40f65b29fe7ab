#pragma once

#include "mvx/common.hpp"

#include <limits>

namespace mvx::particle {

/// Named-column numeric table with one row per recording time. Column 0 is
/// always "t". Serializes to CSV with 17 significant digits so written files
/// round-trip bit-exactly.
struct TimeSeries {
  std::vector<std::string> columns;
  std::vector<Vec> rows;

  bool has_col(const std::string& name) const {
    for (const auto& c : columns)
      if (c == name) return true;
    return false;
  }

  int col(const std::string& name) const {
    for (std::size_t k = 0; k < columns.size(); ++k)
      if (columns[k] == name) return static_cast<int>(k);
    throw SimError("time series has no column '" + name + "'");
  }

  void add_row(const Vec& row) {
    if (row.size() != static_cast<std::int64_t>(columns.size()))
      throw SimError("row length " + std::to_string(row.size()) +
                     " does not match " + std::to_string(columns.size()) +
                     " columns");
    rows.push_back(row);
  }

  double at(std::size_t row, const std::string& name) const {
    return rows.at(row)[col(name)];
  }

  std::vector<double> column(const std::string& name) const {
    const int c = col(name);
    std::vector<double> out;
    out.reserve(rows.size());
    for (const auto& r : rows) out.push_back(r[c]);
    return out;
  }

  /// Row index whose time is nearest to t; error if off by more than tol.
  std::size_t row_at_time(double t, double tol) const {
    const int c = col("t");
    std::size_t best = 0;
    double bestd = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < rows.size(); ++k) {
      const double d = std::abs(rows[k][c] - t);
      if (d < bestd) {
        bestd = d;
        best = k;
      }
    }
    if (rows.empty() || bestd > tol)
      throw SimError("no recorded row near t = " + fmt6(t));
    return best;
  }

  std::string to_csv() const;
  void write_csv(const std::string& path) const;
  static TimeSeries read_csv(const std::string& path);
};

}  // namespace mvx::particle
