#include "px3d/progressive_loss.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <stdexcept>

namespace px3d::loss {

std::string to_string(ScheduleDirection direction) {
  return direction == ScheduleDirection::literal ? "literal" : "toward_output";
}

ScheduleDirection schedule_direction_from_string(const std::string& name) {
  if (name == "literal") return ScheduleDirection::literal;
  if (name == "toward_output") return ScheduleDirection::toward_output;
  throw std::invalid_argument("unknown schedule direction '" + name +
                              "' (expected literal or toward_output)");
}

GuidanceSchedule GuidanceSchedule::make(int n, ScheduleDirection direction, int zero_below) {
  GuidanceSchedule s;
  s.n = n;
  s.direction = direction;
  s.zero_below = zero_below;
  s.alphas.resize(static_cast<std::size_t>(std::max(n, 0)));
  for (int i = 0; i < n; ++i) {
    const int exponent = direction == ScheduleDirection::literal ? n - 1 - i : i - (n - 1);
    s.alphas[static_cast<std::size_t>(i)] = i < zero_below ? 0.0 : std::ldexp(1.0, exponent);
  }
  s.validate();
  return s;
}

GuidanceSchedule GuidanceSchedule::final_only(int n) {
  GuidanceSchedule s;
  s.n = n;
  s.zero_below = n - 1;
  s.alphas.assign(static_cast<std::size_t>(n), 0.0);
  s.alphas.back() = 1.0;
  s.validate();
  return s;
}

void GuidanceSchedule::validate() const {
  if (n <= 0 || alphas.size() != static_cast<std::size_t>(n)) {
    throw std::invalid_argument("guidance schedule: expected " + std::to_string(n) + " weights");
  }
  bool any_positive = false;
  for (int i = 0; i < n; ++i) {
    const double a = alphas[static_cast<std::size_t>(i)];
    if (!(a >= 0.0) || !std::isfinite(a)) {
      throw std::invalid_argument("guidance schedule: weight " + std::to_string(i) + " is negative");
    }
    if (i < zero_below && a != 0.0) {
      throw std::invalid_argument("guidance schedule: weight " + std::to_string(i) +
                                  " must be zero below level " + std::to_string(zero_below));
    }
    any_positive = any_positive || a > 0.0;
  }
  if (!any_positive) throw std::invalid_argument("guidance schedule: all weights are zero");
}

double GuidanceSchedule::alpha(int level) const {
  if (level < 0 || level >= n) return 0.0;
  return alphas[static_cast<std::size_t>(level)];
}

const Tensor* ScaledLabelSet::find(int index) const {
  for (const auto& l : levels)
    if (l.index == index) return &l.label;
  return nullptr;
}

Tensor sse_loss(const Tensor& pred, const Tensor& target, bool normalize) {
  if (pred.shape() != target.shape()) {
    throw ShapeError("sse_loss: prediction " + to_string(pred.shape()) + " vs target " +
                     to_string(target.shape()));
  }
  const Tensor sq = square(sub(pred, target));
  return normalize ? reduce_mean(sq) : reduce_sum(sq);
}

ScaledLabelSet scale_labels(const Tensor& gt, const std::vector<LevelSpec>& levels) {
  if (gt.rank() != 4) throw ShapeError("scale_labels: expected [B,D,H,W], got " + to_string(gt.shape()));
  const std::size_t h = gt.dim(2), w = gt.dim(3);
  auto order = levels;
  std::stable_sort(order.begin(), order.end(),
                   [](const LevelSpec& a, const LevelSpec& b) { return a.height > b.height; });

  ScaledLabelSet out;
  Tensor current = gt.detach();
  std::size_t cur_h = h;
  for (const auto& spec : order) {
    const bool valid = spec.height > 0 && spec.width > 0 && h % spec.height == 0 &&
                       w % spec.width == 0 && h / spec.height == w / spec.width &&
                       std::has_single_bit(h / spec.height);
    if (!valid) {
      throw ShapeError("scale_labels: level " + std::to_string(spec.index) + " extent " +
                       std::to_string(spec.height) + "x" + std::to_string(spec.width) +
                       " is not a power-of-two reduction of " + std::to_string(h) + "x" +
                       std::to_string(w));
    }
    while (cur_h > spec.height) {
      current = avg_pool2d(current, 2);
      cur_h /= 2;
    }
    out.levels.push_back({spec.index, current});
  }
  std::stable_sort(out.levels.begin(), out.levels.end(),
                   [](const LabelLevel& a, const LabelLevel& b) { return a.index < b.index; });
  return out;
}

ScaledLabelSet scale_labels_for(const Tensor& gt, const net::PyramidOutput& pyramid) {
  std::vector<LevelSpec> specs;
  for (const auto& level : pyramid.levels) {
    specs.push_back({level.index, level.reconstruction.dim(2), level.reconstruction.dim(3)});
  }
  return scale_labels(gt, specs);
}

LossBreakdown progressive_loss(const net::PyramidOutput& pyramid, const ScaledLabelSet& labels,
                               const GuidanceSchedule& schedule, bool normalize) {
  schedule.validate();
  LossBreakdown out;
  for (const auto& level : pyramid.levels) {
    const double alpha = schedule.alpha(level.index);
    if (alpha == 0.0) continue;
    const Tensor* label = labels.find(level.index);
    if (!label) {
      throw ShapeError("progressive_loss: no label for guided level " + std::to_string(level.index));
    }
    if (level.reconstruction.rank() != 4 || level.reconstruction.dim(1) != label->dim(1)) {
      throw ShapeError("progressive_loss: level " + std::to_string(level.index) + " has shape " +
                       to_string(level.reconstruction.shape()) + " but guidance needs depth " +
                       std::to_string(label->dim(1)));
    }
    const Tensor term = sse_loss(level.reconstruction, *label, normalize);
    const Tensor weighted = scale(term, alpha);
    out.total = out.total.defined() ? add(out.total, weighted) : weighted;
    out.levels.push_back({level.index, alpha, term.item()});
  }
  if (!out.total.defined()) {
    throw std::invalid_argument("progressive_loss: no pyramid level carries a nonzero weight");
  }
  return out;
}

}  // namespace px3d::loss
