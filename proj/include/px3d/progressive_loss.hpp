#pragma once

#include <string>
#include <vector>

#include "px3d/network.hpp"
#include "px3d/tensor.hpp"

namespace px3d::loss {

using px3d::to_string;

enum class ScheduleDirection {
  literal,        // alpha_i = 2^(n-1-i): heaviest at the shallowest guided level
  toward_output,  // alpha_i = 2^(i-(n-1)): heaviest at the output
};

std::string to_string(ScheduleDirection direction);
ScheduleDirection schedule_direction_from_string(const std::string& name);

/// Per-level weights of the progressive reconstruction loss.
struct GuidanceSchedule {
  int n = net::kPyramidBlocks;
  std::vector<double> alphas;
  ScheduleDirection direction = ScheduleDirection::toward_output;
  int zero_below = net::kFirstReconstructionLevel;

  static GuidanceSchedule make(int n, ScheduleDirection direction,
                               int zero_below = net::kFirstReconstructionLevel);
  /// Only the output level is weighted (alpha = 1).
  static GuidanceSchedule final_only(int n = net::kPyramidBlocks);

  void validate() const;
  double alpha(int level) const;
};

struct LabelLevel {
  int index;
  Tensor label;  // [B, D, Hi, Wi]
};

struct ScaledLabelSet {
  std::vector<LabelLevel> levels;

  const Tensor* find(int index) const;
};

struct LevelSpec {
  int index;
  std::size_t height;
  std::size_t width;
};

/// Mean (or, with normalize=false, sum) of squared differences.
Tensor sse_loss(const Tensor& pred, const Tensor& target, bool normalize = true);

/// Builds each requested level by repeated 2x2 average pooling over H and W;
/// the depth axis (channels) is never touched.
ScaledLabelSet scale_labels(const Tensor& gt, const std::vector<LevelSpec>& levels);

/// Labels for every level present in `pyramid`.
ScaledLabelSet scale_labels_for(const Tensor& gt, const net::PyramidOutput& pyramid);

struct LevelLoss {
  int index;
  double alpha;
  double value;  // unweighted L_i
};

struct LossBreakdown {
  Tensor total;
  std::vector<LevelLoss> levels;
};

/// Sum over guided levels of alpha_i * sse_loss(level_i, label_i). Levels with
/// alpha 0, or absent from the pyramid, contribute nothing.
LossBreakdown progressive_loss(const net::PyramidOutput& pyramid, const ScaledLabelSet& labels,
                               const GuidanceSchedule& schedule, bool normalize = true);

}  // namespace px3d::loss
