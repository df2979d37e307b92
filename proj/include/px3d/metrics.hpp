#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "px3d/tensor.hpp"

namespace px3d::metrics {

inline constexpr std::size_t kSsimWindow = 7;
inline constexpr double kSsimC1 = 0.01 * 0.01;
inline constexpr double kSsimC2 = 0.03 * 0.03;

/// 10 log10(peak^2 / MSE). Identical inputs (MSE == 0) yield nullopt.
std::optional<double> psnr(const Tensor& pred, const Tensor& gt, double peak = 1.0);

/// Mean SSIM over every valid 7x7x7 window of two [D,H,W] volumes (L = 1).
double ssim3d(const Tensor& pred, const Tensor& gt);

/// Dice overlap of the masks pred >= mean(gt) and gt >= mean(gt); two empty
/// masks score 1.
double dsc_bone(const Tensor& pred, const Tensor& gt);

struct SampleScore {
  std::string sample_id;
  std::optional<double> psnr_db;
  double ssim = 0.0;
  double dsc = 0.0;
};

struct Aggregate {
  double mean = 0.0;
  double stddev = 0.0;  // population standard deviation
  std::size_t count = 0;
};

Aggregate aggregate(const std::vector<double>& values);

struct MetricReport {
  std::string method;
  std::string decoder_type;
  bool progressive = false;
  std::string schedule;
  std::vector<SampleScore> rows;

  Aggregate psnr;  // excludes identical samples
  Aggregate ssim;
  Aggregate dsc;
  std::size_t identical = 0;

  /// Recomputes the aggregates from `rows`.
  void finalize();

  /// Per-sample CSV: sample_id,psnr_db,ssim,dsc (psnr "identical" for the sentinel).
  std::string to_csv() const;
  static std::vector<SampleScore> parse_csv(const std::string& text);
  std::string summary() const;
};

/// Scores one prediction against its ground truth with all three metrics.
SampleScore score(const std::string& sample_id, const Tensor& pred, const Tensor& gt);

}  // namespace px3d::metrics
