#include <cblas.h>

#include <limits>

#include "ops_common.hpp"

namespace px3d {

using detail::raw;
using detail::wants_grad;

namespace {

struct ConvGeometry {
  std::size_t channels, height, width, kernel, out_h, out_w;
  int stride, padding;

  std::size_t rows() const { return channels * kernel * kernel; }
  std::size_t cols() const { return out_h * out_w; }
};

void im2col(const double* image, const ConvGeometry& g, double* cols) {
  const auto h = static_cast<long>(g.height), w = static_cast<long>(g.width);
  std::size_t row = 0;
  for (std::size_t c = 0; c < g.channels; ++c) {
    const double* plane = image + c * g.height * g.width;
    for (std::size_t ky = 0; ky < g.kernel; ++ky) {
      for (std::size_t kx = 0; kx < g.kernel; ++kx, ++row) {
        double* dst = cols + row * g.cols();
        for (std::size_t oy = 0; oy < g.out_h; ++oy) {
          const long iy = static_cast<long>(oy) * g.stride - g.padding + static_cast<long>(ky);
          for (std::size_t ox = 0; ox < g.out_w; ++ox) {
            const long ix = static_cast<long>(ox) * g.stride - g.padding + static_cast<long>(kx);
            dst[oy * g.out_w + ox] =
                (iy >= 0 && iy < h && ix >= 0 && ix < w) ? plane[iy * w + ix] : 0.0;
          }
        }
      }
    }
  }
}

void col2im_add(const double* cols, const ConvGeometry& g, double* image) {
  const auto h = static_cast<long>(g.height), w = static_cast<long>(g.width);
  std::size_t row = 0;
  for (std::size_t c = 0; c < g.channels; ++c) {
    double* plane = image + c * g.height * g.width;
    for (std::size_t ky = 0; ky < g.kernel; ++ky) {
      for (std::size_t kx = 0; kx < g.kernel; ++kx, ++row) {
        const double* src = cols + row * g.cols();
        for (std::size_t oy = 0; oy < g.out_h; ++oy) {
          const long iy = static_cast<long>(oy) * g.stride - g.padding + static_cast<long>(ky);
          if (iy < 0 || iy >= h) continue;
          for (std::size_t ox = 0; ox < g.out_w; ++ox) {
            const long ix = static_cast<long>(ox) * g.stride - g.padding + static_cast<long>(kx);
            if (ix >= 0 && ix < w) plane[iy * w + ix] += src[oy * g.out_w + ox];
          }
        }
      }
    }
  }
}

}  // namespace

Tensor conv2d(const Tensor& input, const Tensor& weight, const Tensor& bias, int stride,
              int padding) {
  detail::require_rank(input, 4, "conv2d", "input");
  detail::require_rank(weight, 4, "conv2d", "weight");
  const bool has_bias = bias.defined();
  if (has_bias) detail::require_rank(bias, 1, "conv2d", "bias");
  detail::require(stride >= 1 && padding >= 0, "conv2d: stride must be >= 1 and padding >= 0");
  const std::size_t batch = input.dim(0), channels = input.dim(1);
  const std::size_t filters = weight.dim(0), kernel = weight.dim(2);
  detail::require(weight.dim(1) == channels,
                  "conv2d: weight " + to_string(weight.shape()) + " expects " +
                      std::to_string(weight.dim(1)) + " input channels, input " +
                      to_string(input.shape()) + " has " + std::to_string(channels));
  detail::require(weight.dim(3) == kernel && kernel % 2 == 1,
                  "conv2d: kernel must be square with odd extent, got " + to_string(weight.shape()));
  if (has_bias) {
    detail::require(bias.dim(0) == filters, "conv2d: bias " + to_string(bias.shape()) +
                                                " does not match " + std::to_string(filters) +
                                                " filters");
  }
  const long span_h = static_cast<long>(input.dim(2)) + 2L * padding - static_cast<long>(kernel);
  const long span_w = static_cast<long>(input.dim(3)) + 2L * padding - static_cast<long>(kernel);
  detail::require(span_h >= 0 && span_w >= 0 && span_h % stride == 0 && span_w % stride == 0,
                  "conv2d: input " + to_string(input.shape()) + " with kernel " +
                      std::to_string(kernel) + ", stride " + std::to_string(stride) +
                      ", padding " + std::to_string(padding) +
                      " does not give an integral output extent");

  ConvGeometry geo{channels,
                   input.dim(2),
                   input.dim(3),
                   kernel,
                   static_cast<std::size_t>(span_h / stride + 1),
                   static_cast<std::size_t>(span_w / stride + 1),
                   stride,
                   padding};
  const std::size_t in_plane = channels * geo.height * geo.width;
  const std::size_t out_plane = filters * geo.cols();

  std::vector<double> out(batch * out_plane);
  std::vector<double> cols(geo.rows() * geo.cols());
  const auto din = input.data();
  const auto dw = weight.data();
  for (std::size_t b = 0; b < batch; ++b) {
    im2col(din.data() + b * in_plane, geo, cols.data());
    double* dst = out.data() + b * out_plane;
    for (std::size_t f = 0; f < filters; ++f)
      std::fill_n(dst + f * geo.cols(), geo.cols(), has_bias ? bias.data()[f] : 0.0);
    cblas_dgemm(CblasRowMajor, CblasNoTrans, CblasNoTrans, static_cast<int>(filters),
                static_cast<int>(geo.cols()), static_cast<int>(geo.rows()), 1.0, dw.data(),
                static_cast<int>(geo.rows()), cols.data(), static_cast<int>(geo.cols()), 1.0, dst,
                static_cast<int>(geo.cols()));
  }

  auto* nx = raw(input);
  auto* nw = raw(weight);
  auto* nb = has_bias ? raw(bias) : nullptr;
  return Tensor::make_result(
      {batch, filters, geo.out_h, geo.out_w}, std::move(out), "conv2d", has_bias ? std::vector<Tensor>{input, weight, bias} : std::vector<Tensor>{input, weight},
      [nx, nw, nb, geo, batch, filters, in_plane, out_plane](std::span<const double> g) {
        std::vector<double> cols(geo.rows() * geo.cols());
        const int m = static_cast<int>(filters), n = static_cast<int>(geo.cols()),
                  k = static_cast<int>(geo.rows());
        for (std::size_t b = 0; b < batch; ++b) {
          const double* gb = g.data() + b * out_plane;
          if (nb && wants_grad(nb))
            for (std::size_t f = 0; f < filters; ++f) {
              double acc = 0.0;
              for (std::size_t i = 0; i < geo.cols(); ++i) acc += gb[f * geo.cols() + i];
              nb->grad[f] += acc;
            }
          if (wants_grad(nw)) {
            im2col(nx->value.data() + b * in_plane, geo, cols.data());
            // dW[F, CKK] += G[F, HW] @ cols[CKK, HW]^T
            cblas_dgemm(CblasRowMajor, CblasNoTrans, CblasTrans, m, k, n, 1.0, gb, n, cols.data(),
                        n, 1.0, nw->grad.data(), k);
          }
          if (wants_grad(nx)) {
            // dcols[CKK, HW] = W[F, CKK]^T @ G[F, HW]
            cblas_dgemm(CblasRowMajor, CblasTrans, CblasNoTrans, k, n, m, 1.0, nw->value.data(), k,
                        gb, n, 0.0, cols.data(), n);
            col2im_add(cols.data(), geo, nx->grad.data() + b * in_plane);
          }
        }
      });
}

Tensor max_pool2d(const Tensor& input, std::size_t kernel) {
  detail::require_rank(input, 4, "max_pool2d", "input");
  const std::size_t planes = input.dim(0) * input.dim(1);
  const std::size_t h = input.dim(2), w = input.dim(3);
  detail::require(kernel >= 1, "max_pool2d: kernel must be positive");
  detail::require(h % kernel == 0, "max_pool2d: height " + std::to_string(h) +
                                       " is not divisible by " + std::to_string(kernel));
  detail::require(w % kernel == 0, "max_pool2d: width " + std::to_string(w) +
                                       " is not divisible by " + std::to_string(kernel));
  const std::size_t oh = h / kernel, ow = w / kernel;
  const auto dx = input.data();
  std::vector<double> out(planes * oh * ow);
  std::vector<std::size_t> argmax(out.size());
  for (std::size_t p = 0; p < planes; ++p) {
    for (std::size_t oy = 0; oy < oh; ++oy) {
      for (std::size_t ox = 0; ox < ow; ++ox) {
        double best = -std::numeric_limits<double>::infinity();
        std::size_t best_index = 0;
        // Strict comparison keeps the first index on ties.
        for (std::size_t ky = 0; ky < kernel; ++ky)
          for (std::size_t kx = 0; kx < kernel; ++kx) {
            const std::size_t idx = (p * h + oy * kernel + ky) * w + ox * kernel + kx;
            if (dx[idx] > best) {
              best = dx[idx];
              best_index = idx;
            }
          }
        const std::size_t o = (p * oh + oy) * ow + ox;
        out[o] = best;
        argmax[o] = best_index;
      }
    }
  }
  auto* nx = raw(input);
  return Tensor::make_result({input.dim(0), input.dim(1), oh, ow}, std::move(out), "max_pool2d",
                             {input}, [nx, argmax = std::move(argmax)](std::span<const double> g) {
                               for (std::size_t i = 0; i < g.size(); ++i)
                                 nx->grad[argmax[i]] += g[i];
                             });
}

Tensor avg_pool2d(const Tensor& input, std::size_t kernel) {
  detail::require_rank(input, 4, "avg_pool2d", "input");
  const std::size_t planes = input.dim(0) * input.dim(1);
  const std::size_t h = input.dim(2), w = input.dim(3);
  detail::require(kernel >= 1 && h % kernel == 0 && w % kernel == 0,
                  "avg_pool2d: extents of " + to_string(input.shape()) + " not divisible by " +
                      std::to_string(kernel));
  const std::size_t oh = h / kernel, ow = w / kernel;
  const double norm = 1.0 / static_cast<double>(kernel * kernel);
  const auto dx = input.data();
  std::vector<double> out(planes * oh * ow, 0.0);
  for (std::size_t p = 0; p < planes; ++p)
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x)
        out[(p * oh + y / kernel) * ow + x / kernel] += dx[(p * h + y) * w + x];
  for (auto& v : out) v *= norm;
  auto* nx = raw(input);
  return Tensor::make_result({input.dim(0), input.dim(1), oh, ow}, std::move(out), "avg_pool2d",
                             {input}, [nx, planes, h, w, oh, ow, kernel, norm](std::span<const double> g) {
                               for (std::size_t p = 0; p < planes; ++p)
                                 for (std::size_t y = 0; y < h; ++y)
                                   for (std::size_t x = 0; x < w; ++x)
                                     nx->grad[(p * h + y) * w + x] +=
                                         g[(p * oh + y / kernel) * ow + x / kernel] * norm;
                             });
}

Tensor upsample2d(const Tensor& input, std::size_t factor) {
  detail::require_rank(input, 4, "upsample2d", "input");
  detail::require(factor >= 1, "upsample2d: factor must be positive");
  const std::size_t planes = input.dim(0) * input.dim(1);
  const std::size_t h = input.dim(2), w = input.dim(3);
  const std::size_t oh = h * factor, ow = w * factor;
  const auto dx = input.data();
  std::vector<double> out(planes * oh * ow);
  for (std::size_t p = 0; p < planes; ++p)
    for (std::size_t y = 0; y < oh; ++y)
      for (std::size_t x = 0; x < ow; ++x)
        out[(p * oh + y) * ow + x] = dx[(p * h + y / factor) * w + x / factor];
  auto* nx = raw(input);
  return Tensor::make_result({input.dim(0), input.dim(1), oh, ow}, std::move(out), "upsample2d",
                             {input}, [nx, planes, h, w, oh, ow, factor](std::span<const double> g) {
                               for (std::size_t p = 0; p < planes; ++p)
                                 for (std::size_t y = 0; y < oh; ++y)
                                   for (std::size_t x = 0; x < ow; ++x)
                                     nx->grad[(p * h + y / factor) * w + x / factor] +=
                                         g[(p * oh + y) * ow + x];
                             });
}

}  // namespace px3d
