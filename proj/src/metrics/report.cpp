#include "px3d/report.hpp"

#include <algorithm>
#include <cstdio>
#include <sstream>

namespace px3d::report {

namespace {

constexpr double kDisplayScale[3] = {1.0, 100.0, 100.0};

std::string pad(const std::string& s, std::size_t width) {
  return s.size() >= width ? s : s + std::string(width - s.size(), ' ');
}

}  // namespace

std::vector<std::array<Marker, 3>> ComparisonTable::markers() const {
  std::vector<std::array<Marker, 3>> out(rows.size(), {Marker::none, Marker::none, Marker::none});
  for (std::size_t c = 0; c < 3; ++c) {
    std::vector<double> values;
    for (const auto& r : rows)
      if (!r.failed && r.values[c]) values.push_back(*r.values[c]);
    std::sort(values.begin(), values.end(), std::greater<>());
    values.erase(std::unique(values.begin(), values.end()), values.end());
    for (std::size_t i = 0; i < rows.size(); ++i) {
      if (rows[i].failed || !rows[i].values[c]) continue;
      const double v = *rows[i].values[c];
      if (!values.empty() && v == values[0]) {
        out[i][c] = Marker::best;
      } else if (values.size() > 1 && v == values[1]) {
        out[i][c] = Marker::second;
      }
    }
  }
  return out;
}

std::string ComparisonTable::cell(std::size_t row, std::size_t column) const {
  const TableRow& r = rows.at(row);
  if (r.failed) return "FAILED";
  if (!r.values.at(column)) return "n/a";
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", *r.values[column] * kDisplayScale[column]);
  return buf;
}

std::string ComparisonTable::to_text() const {
  const auto marks = markers();
  std::size_t name_width = std::string("Method").size();
  for (const auto& r : rows) name_width = std::max(name_width, r.name.size());
  constexpr std::size_t kCell = 10;

  std::ostringstream os;
  os << pad("Method", name_width);
  for (const char* c : kColumns) os << " | " << pad(c, kCell);
  os << '\n' << std::string(name_width, '-');
  for (std::size_t c = 0; c < kColumns.size(); ++c) os << "-|-" << std::string(kCell, '-');
  os << '\n';
  for (std::size_t i = 0; i < rows.size(); ++i) {
    os << pad(rows[i].name, name_width);
    for (std::size_t c = 0; c < 3; ++c) {
      std::string text = cell(i, c);
      if (marks[i][c] == Marker::best) text = "**" + text + "**";
      if (marks[i][c] == Marker::second) text = "_" + text + "_";
      os << " | " << pad(text, kCell);
    }
    os << '\n';
  }
  os << "PSNR in dB; DSC and SSIM x100. **best**, _second best_.\n";
  return os.str();
}

std::string ComparisonTable::to_csv() const {
  std::ostringstream os;
  os << "method,psnr_db,dsc_x100,ssim_x100\n";
  for (std::size_t i = 0; i < rows.size(); ++i) {
    os << rows[i].name;
    for (std::size_t c = 0; c < 3; ++c) os << ',' << cell(i, c);
    os << '\n';
  }
  return os.str();
}

}  // namespace px3d::report
