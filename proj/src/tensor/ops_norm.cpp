#include <cmath>

#include "ops_common.hpp"

namespace px3d {

using detail::raw;
using detail::wants_grad;

Tensor batch_norm(const Tensor& input, const Tensor& gamma, const Tensor& beta,
                  RunningStats& stats, Mode mode) {
  detail::require_rank(input, 4, "batch_norm", "input");
  const std::size_t batch = input.dim(0), channels = input.dim(1);
  const std::size_t hw = input.dim(2) * input.dim(3);
  const Shape param_shape{channels};
  detail::require(gamma.shape() == param_shape && beta.shape() == param_shape,
                  "batch_norm: gamma/beta must have shape " + to_string(param_shape));
  detail::require(stats.mean.size() == channels && stats.var.size() == channels,
                  "batch_norm: running stats track " + std::to_string(stats.mean.size()) +
                      " channels, input has " + std::to_string(channels));
  const std::size_t count = batch * hw;
  if (mode == Mode::train && count < 2) {
    throw ShapeError("batch_norm: train mode needs at least 2 values per channel, input " +
                     to_string(input.shape()) + " has " + std::to_string(count));
  }

  const auto dx = input.data();
  const auto dg = gamma.data();
  const auto dbeta = beta.data();
  std::vector<double> xhat(dx.size());
  std::vector<double> inv_std(channels);
  std::vector<double> out(dx.size());
  for (std::size_t c = 0; c < channels; ++c) {
    double mean, var;
    if (mode == Mode::train) {
      double sum = 0.0;
      for (std::size_t b = 0; b < batch; ++b)
        for (std::size_t i = 0; i < hw; ++i) sum += dx[(b * channels + c) * hw + i];
      mean = sum / static_cast<double>(count);
      double sq = 0.0;
      for (std::size_t b = 0; b < batch; ++b)
        for (std::size_t i = 0; i < hw; ++i) {
          const double d = dx[(b * channels + c) * hw + i] - mean;
          sq += d * d;
        }
      var = sq / static_cast<double>(count);
      const double unbiased = sq / static_cast<double>(count - 1);
      stats.mean[c] = (1.0 - kBatchNormMomentum) * stats.mean[c] + kBatchNormMomentum * mean;
      stats.var[c] = (1.0 - kBatchNormMomentum) * stats.var[c] + kBatchNormMomentum * unbiased;
    } else {
      mean = stats.mean[c];
      var = stats.var[c];
    }
    inv_std[c] = 1.0 / std::sqrt(var + kNormEpsilon);
    for (std::size_t b = 0; b < batch; ++b)
      for (std::size_t i = 0; i < hw; ++i) {
        const std::size_t k = (b * channels + c) * hw + i;
        xhat[k] = (dx[k] - mean) * inv_std[c];
        out[k] = dg[c] * xhat[k] + dbeta[c];
      }
  }

  auto* nx = raw(input);
  auto* ng = raw(gamma);
  auto* nb = raw(beta);
  const bool batch_stats = mode == Mode::train;
  return Tensor::make_result(
      input.shape(), std::move(out), "batch_norm", {input, gamma, beta},
      [nx, ng, nb, xhat = std::move(xhat), inv_std = std::move(inv_std), batch, channels, hw,
       count, batch_stats](std::span<const double> g) {
        const double n = static_cast<double>(count);
        for (std::size_t c = 0; c < channels; ++c) {
          double sum_g = 0.0, sum_gx = 0.0;
          for (std::size_t b = 0; b < batch; ++b)
            for (std::size_t i = 0; i < hw; ++i) {
              const std::size_t k = (b * channels + c) * hw + i;
              sum_g += g[k];
              sum_gx += g[k] * xhat[k];
            }
          if (wants_grad(ng)) ng->grad[c] += sum_gx;
          if (wants_grad(nb)) nb->grad[c] += sum_g;
          if (!wants_grad(nx)) continue;
          const double gam = ng->value[c];
          for (std::size_t b = 0; b < batch; ++b)
            for (std::size_t i = 0; i < hw; ++i) {
              const std::size_t k = (b * channels + c) * hw + i;
              if (batch_stats) {
                nx->grad[k] += gam * inv_std[c] * (g[k] - sum_g / n - xhat[k] * sum_gx / n);
              } else {
                nx->grad[k] += gam * inv_std[c] * g[k];
              }
            }
        }
      });
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta) {
  detail::require(x.rank() >= 1, "layer_norm: input must have rank >= 1");
  const std::size_t width = x.shape().back();
  const Shape param_shape{width};
  detail::require(gamma.shape() == param_shape && beta.shape() == param_shape,
                  "layer_norm: gamma/beta must have shape " + to_string(param_shape) +
                      " for input " + to_string(x.shape()));
  const std::size_t rows = x.numel() / width;
  const auto dx = x.data();
  const auto dg = gamma.data();
  const auto db = beta.data();
  std::vector<double> xhat(dx.size());
  std::vector<double> inv_std(rows);
  std::vector<double> out(dx.size());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = dx.data() + r * width;
    double mean = 0.0;
    for (std::size_t i = 0; i < width; ++i) mean += row[i];
    mean /= static_cast<double>(width);
    double var = 0.0;
    for (std::size_t i = 0; i < width; ++i) var += (row[i] - mean) * (row[i] - mean);
    var /= static_cast<double>(width);
    inv_std[r] = 1.0 / std::sqrt(var + kNormEpsilon);
    for (std::size_t i = 0; i < width; ++i) {
      const std::size_t k = r * width + i;
      xhat[k] = (row[i] - mean) * inv_std[r];
      out[k] = dg[i] * xhat[k] + db[i];
    }
  }
  auto* nx = raw(x);
  auto* ng = raw(gamma);
  auto* nb = raw(beta);
  return Tensor::make_result(
      x.shape(), std::move(out), "layer_norm", {x, gamma, beta},
      [nx, ng, nb, xhat = std::move(xhat), inv_std = std::move(inv_std), rows,
       width](std::span<const double> g) {
        const double n = static_cast<double>(width);
        for (std::size_t r = 0; r < rows; ++r) {
          double sum_d = 0.0, sum_dx = 0.0;
          for (std::size_t i = 0; i < width; ++i) {
            const std::size_t k = r * width + i;
            if (wants_grad(ng)) ng->grad[i] += g[k] * xhat[k];
            if (wants_grad(nb)) nb->grad[i] += g[k];
            const double d = g[k] * ng->value[i];
            sum_d += d;
            sum_dx += d * xhat[k];
          }
          if (!wants_grad(nx)) continue;
          for (std::size_t i = 0; i < width; ++i) {
            const std::size_t k = r * width + i;
            const double d = g[k] * ng->value[i];
            nx->grad[k] += inv_std[r] * (d - sum_d / n - xhat[k] * sum_dx / n);
          }
        }
      });
}

}  // namespace px3d
