#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

namespace px3d::report {

enum class Marker { none, best, second };

struct TableRow {
  std::string name;
  std::array<std::optional<double>, 3> values;  // PSNR (dB), DSC, SSIM in [0,1]
  bool failed = false;
};

/// Comparison table in the layout Method | PSNR | DSC | SSIM. DSC and SSIM are
/// shown x100; best per column is wrapped in ** and second best in _.
struct ComparisonTable {
  std::vector<TableRow> rows;

  static constexpr std::array<const char*, 3> kColumns{"PSNR", "DSC", "SSIM"};

  /// markers[row][column]; higher is better in every column.
  std::vector<std::array<Marker, 3>> markers() const;
  /// Display string of a cell without markers ("FAILED" for failed rows).
  std::string cell(std::size_t row, std::size_t column) const;

  std::string to_text() const;
  std::string to_csv() const;
};

}  // namespace px3d::report
