#include "mtd/csv.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>

namespace mtd {

struct CsvWriter::Impl {
  std::ofstream out;
};

CsvWriter::CsvWriter(const std::string& path,
                     const std::vector<std::string>& header)
    : impl_(new Impl) {
  impl_->out.open(path);
  if (!impl_->out)
    throw NumericError("cannot open output file: " + path);
  for (std::size_t i = 0; i < header.size(); ++i)
    impl_->out << (i ? "," : "") << header[i];
  impl_->out << "\n";
}

CsvWriter::~CsvWriter() { delete impl_; }

void CsvWriter::row(const std::vector<double>& values) {
  std::ostringstream os;
  os << std::setprecision(17);
  for (std::size_t i = 0; i < values.size(); ++i)
    os << (i ? "," : "") << values[i];
  impl_->out << os.str() << "\n";
}

void CsvWriter::raw_row(const std::string& line) { impl_->out << line << "\n"; }

std::vector<std::string> numbered(const std::string& stem, int count) {
  std::vector<std::string> out;
  out.reserve(count);
  for (int i = 1; i <= count; ++i) out.push_back(stem + "_" + std::to_string(i));
  return out;
}

void write_svg_chart(const std::string& path, const std::string& title,
                     const std::vector<std::string>& series_names,
                     const std::vector<std::vector<double>>& series) {
  const int W = 880, H = 460, L = 70, Bm = 40, T = 30, R = 20;
  std::ofstream out(path);
  if (!out) throw NumericError("cannot open output file: " + path);

  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  std::size_t len = 0;
  for (const auto& s : series) {
    len = std::max(len, s.size());
    for (double v : s)
      if (std::isfinite(v)) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
      }
  }
  if (!std::isfinite(lo)) {
    lo = 0;
    hi = 1;
  }
  if (hi - lo < 1e-12) hi = lo + 1;

  const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                          "#ff7f0e", "#8c564b"};
  out << "<svg xmlns='http://www.w3.org/2000/svg' width='" << W
      << "' height='" << H << "'>\n";
  out << "<rect width='100%' height='100%' fill='white'/>\n";
  out << "<text x='" << W / 2 << "' y='20' text-anchor='middle' "
      << "font-family='sans-serif' font-size='14'>" << title << "</text>\n";
  out << "<line x1='" << L << "' y1='" << H - Bm << "' x2='" << W - R
      << "' y2='" << H - Bm << "' stroke='black'/>\n";
  out << "<line x1='" << L << "' y1='" << T << "' x2='" << L << "' y2='"
      << H - Bm << "' stroke='black'/>\n";
  out << "<text x='10' y='" << T + 10 << "' font-family='sans-serif' "
      << "font-size='11'>" << hi << "</text>\n";
  out << "<text x='10' y='" << H - Bm << "' font-family='sans-serif' "
      << "font-size='11'>" << lo << "</text>\n";

  for (std::size_t s = 0; s < series.size(); ++s) {
    if (series[s].empty()) continue;
    out << "<polyline fill='none' stroke='" << colors[s % 6]
        << "' stroke-width='1.5' points='";
    for (std::size_t i = 0; i < series[s].size(); ++i) {
      const double v = series[s][i];
      if (!std::isfinite(v)) continue;
      const double x =
          L + (W - L - R) * (len > 1 ? static_cast<double>(i) / (len - 1) : 0.0);
      const double y = (H - Bm) - (H - Bm - T) * (v - lo) / (hi - lo);
      out << x << "," << y << " ";
    }
    out << "'/>\n";
    out << "<text x='" << W - R - 150 << "' y='" << T + 16 * (s + 1)
        << "' fill='" << colors[s % 6]
        << "' font-family='sans-serif' font-size='12'>" << series_names[s]
        << "</text>\n";
  }
  out << "</svg>\n";
}

void ensure_directory(const std::string& path) {
  std::error_code ec;
  std::filesystem::create_directories(path, ec);
  if (ec) throw NumericError("cannot create directory: " + path);
}

}  // namespace mtd
