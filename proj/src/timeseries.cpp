#include "mvx/timeseries.hpp"

#include <fstream>
#include <sstream>

namespace mvx::particle {

std::string TimeSeries::to_csv() const {
  std::string out;
  for (std::size_t k = 0; k < columns.size(); ++k) {
    if (k) out += ',';
    out += columns[k];
  }
  out += '\n';
  for (const auto& r : rows) {
    for (std::int64_t k = 0; k < r.size(); ++k) {
      if (k) out += ',';
      out += fmt17(r[k]);
    }
    out += '\n';
  }
  return out;
}

void TimeSeries::write_csv(const std::string& path) const {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw SimError("cannot open '" + path + "' for writing");
  f << to_csv();
  if (!f) throw SimError("write failed for '" + path + "'");
}

TimeSeries TimeSeries::read_csv(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw SimError("cannot open '" + path + "'");
  TimeSeries ts;
  std::string line;
  if (!std::getline(f, line)) throw SimError("'" + path + "' is empty");
  {
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) ts.columns.push_back(cell);
  }
  if (ts.columns.empty()) throw SimError("'" + path + "' has no columns");
  std::size_t lineno = 1;
  while (std::getline(f, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    Vec row(static_cast<std::int64_t>(ts.columns.size()));
    std::int64_t k = 0;
    while (std::getline(ss, cell, ',')) {
      if (k >= row.size())
        throw SimError(path + ":" + std::to_string(lineno) +
                       ": too many fields");
      try {
        row[k] = std::stod(cell);
      } catch (const std::exception&) {
        throw SimError(path + ":" + std::to_string(lineno) +
                       ": cannot parse '" + cell + "' as a number");
      }
      ++k;
    }
    if (k != row.size())
      throw SimError(path + ":" + std::to_string(lineno) + ": expected " +
                     std::to_string(row.size()) + " fields, got " +
                     std::to_string(k));
    ts.rows.push_back(std::move(row));
  }
  return ts;
}

}  // namespace mvx::particle
