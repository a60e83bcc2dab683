#pragma once

#include <string>
#include <vector>

#include "mtd/numeric.hpp"

namespace mtd {

/// Minimal fixed-schema CSV writer; values are written with full precision.
class CsvWriter {
 public:
  CsvWriter(const std::string& path, const std::vector<std::string>& header);
  ~CsvWriter();

  void row(const std::vector<double>& values);
  void raw_row(const std::string& line);

 private:
  struct Impl;
  Impl* impl_;
};

/// Column headers like x_1..x_n.
std::vector<std::string> numbered(const std::string& stem, int count);

/// Writes a single polyline chart (one series per column) as a static SVG.
void write_svg_chart(const std::string& path, const std::string& title,
                     const std::vector<std::string>& series_names,
                     const std::vector<std::vector<double>>& series);

void ensure_directory(const std::string& path);

}  // namespace mtd
