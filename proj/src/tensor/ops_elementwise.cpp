#include <cmath>
#include <numbers>

#include "ops_common.hpp"

namespace px3d {

using detail::raw;
using detail::wants_grad;

namespace {

template <typename Forward, typename Derivative>
Tensor unary(const Tensor& x, const char* op, Forward f, Derivative df) {
  const auto in = x.data();
  std::vector<double> out(in.size());
  for (std::size_t i = 0; i < in.size(); ++i) out[i] = f(in[i]);
  auto* nx = raw(x);
  return Tensor::make_result(x.shape(), std::move(out), op, {x},
                             [nx, df](std::span<const double> g) {
                               auto& gx = nx->grad;
                               const auto& v = nx->value;
                               for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * df(v[i]);
                             });
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  detail::require_same_shape(a, b, "add");
  const auto da = a.data();
  const auto db = b.data();
  std::vector<double> out(da.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = da[i] + db[i];
  auto* na = raw(a);
  auto* nb = raw(b);
  return Tensor::make_result(a.shape(), std::move(out), "add", {a, b},
                             [na, nb](std::span<const double> g) {
                               for (auto* n : {na, nb}) {
                                 if (!wants_grad(n)) continue;
                                 for (std::size_t i = 0; i < g.size(); ++i) n->grad[i] += g[i];
                               }
                             });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  detail::require_same_shape(a, b, "sub");
  const auto da = a.data();
  const auto db = b.data();
  std::vector<double> out(da.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = da[i] - db[i];
  auto* na = raw(a);
  auto* nb = raw(b);
  return Tensor::make_result(a.shape(), std::move(out), "sub", {a, b},
                             [na, nb](std::span<const double> g) {
                               if (wants_grad(na))
                                 for (std::size_t i = 0; i < g.size(); ++i) na->grad[i] += g[i];
                               if (wants_grad(nb))
                                 for (std::size_t i = 0; i < g.size(); ++i) nb->grad[i] -= g[i];
                             });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  detail::require_same_shape(a, b, "mul");
  const auto da = a.data();
  const auto db = b.data();
  std::vector<double> out(da.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = da[i] * db[i];
  auto* na = raw(a);
  auto* nb = raw(b);
  return Tensor::make_result(a.shape(), std::move(out), "mul", {a, b},
                             [na, nb](std::span<const double> g) {
                               if (wants_grad(na))
                                 for (std::size_t i = 0; i < g.size(); ++i)
                                   na->grad[i] += g[i] * nb->value[i];
                               if (wants_grad(nb))
                                 for (std::size_t i = 0; i < g.size(); ++i)
                                   nb->grad[i] += g[i] * na->value[i];
                             });
}

Tensor scale(const Tensor& x, double factor) {
  return unary(
      x, "scale", [factor](double v) { return v * factor; },
      [factor](double) { return factor; });
}

Tensor square(const Tensor& x) {
  return unary(
      x, "square", [](double v) { return v * v; }, [](double v) { return 2.0 * v; });
}

Tensor relu(const Tensor& x) {
  return unary(
      x, "relu", [](double v) { return v > 0.0 ? v : 0.0; },
      [](double v) { return v > 0.0 ? 1.0 : 0.0; });
}

Tensor sigmoid(const Tensor& x) {
  auto s = [](double v) {
    if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
    const double e = std::exp(v);
    return e / (1.0 + e);
  };
  return unary(x, "sigmoid", s, [s](double v) {
    const double y = s(v);
    return y * (1.0 - y);
  });
}

Tensor gelu(const Tensor& x) {
  constexpr double inv_sqrt2 = 0.70710678118654752440;
  const double inv_sqrt2pi = 0.5 * std::numbers::inv_sqrtpi * std::numbers::sqrt2;
  return unary(
      x, "gelu", [](double v) { return 0.5 * v * (1.0 + std::erf(v * inv_sqrt2)); },
      [inv_sqrt2pi](double v) {
        return 0.5 * (1.0 + std::erf(v * inv_sqrt2)) + v * inv_sqrt2pi * std::exp(-0.5 * v * v);
      });
}

Tensor scale_channels(const Tensor& x, const Tensor& s) {
  detail::require_rank(x, 4, "scale_channels", "input");
  detail::require(s.shape() == Shape{x.dim(0), x.dim(1)},
                  "scale_channels: scale shape " + to_string(s.shape()) + " does not match [B,C] of " +
                      to_string(x.shape()));
  const std::size_t planes = x.dim(0) * x.dim(1);
  const std::size_t hw = x.dim(2) * x.dim(3);
  const auto dx = x.data();
  const auto ds = s.data();
  std::vector<double> out(dx.size());
  for (std::size_t p = 0; p < planes; ++p)
    for (std::size_t i = 0; i < hw; ++i) out[p * hw + i] = dx[p * hw + i] * ds[p];
  auto* nx = raw(x);
  auto* ns = raw(s);
  return Tensor::make_result(x.shape(), std::move(out), "scale_channels", {x, s},
                             [nx, ns, planes, hw](std::span<const double> g) {
                               for (std::size_t p = 0; p < planes; ++p) {
                                 double acc = 0.0;
                                 for (std::size_t i = 0; i < hw; ++i) {
                                   const std::size_t k = p * hw + i;
                                   if (wants_grad(nx)) nx->grad[k] += g[k] * ns->value[p];
                                   acc += g[k] * nx->value[k];
                                 }
                                 if (wants_grad(ns)) ns->grad[p] += acc;
                               }
                             });
}

Tensor reduce_sum(const Tensor& x) {
  double total = 0.0;
  for (double v : x.data()) total += v;
  auto* nx = raw(x);
  return Tensor::make_result({}, {total}, "reduce_sum", {x}, [nx](std::span<const double> g) {
    for (auto& v : nx->grad) v += g[0];
  });
}

Tensor reduce_mean(const Tensor& x) {
  const double n = static_cast<double>(x.numel());
  double total = 0.0;
  for (double v : x.data()) total += v;
  auto* nx = raw(x);
  return Tensor::make_result({}, {total / n}, "reduce_mean", {x},
                             [nx, n](std::span<const double> g) {
                               for (auto& v : nx->grad) v += g[0] / n;
                             });
}

Tensor reduce_mean(const Tensor& x, std::size_t axis) {
  const Shape& s = x.shape();
  detail::require(axis < s.size(), "reduce_mean: axis " + std::to_string(axis) +
                                       " out of range for " + to_string(s));
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= s[i];
  for (std::size_t i = axis + 1; i < s.size(); ++i) inner *= s[i];
  const std::size_t len = s[axis];
  Shape out_shape = s;
  out_shape.erase(out_shape.begin() + static_cast<std::ptrdiff_t>(axis));
  const auto dx = x.data();
  std::vector<double> out(outer * inner, 0.0);
  for (std::size_t o = 0; o < outer; ++o)
    for (std::size_t k = 0; k < len; ++k)
      for (std::size_t i = 0; i < inner; ++i) out[o * inner + i] += dx[(o * len + k) * inner + i];
  for (auto& v : out) v /= static_cast<double>(len);
  auto* nx = raw(x);
  return Tensor::make_result(std::move(out_shape), std::move(out), "reduce_mean_axis", {x},
                             [nx, outer, inner, len](std::span<const double> g) {
                               const double w = 1.0 / static_cast<double>(len);
                               for (std::size_t o = 0; o < outer; ++o)
                                 for (std::size_t k = 0; k < len; ++k)
                                   for (std::size_t i = 0; i < inner; ++i)
                                     nx->grad[(o * len + k) * inner + i] += g[o * inner + i] * w;
                             });
}

}  // namespace px3d
