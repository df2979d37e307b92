#include <numeric>

#include "ops_common.hpp"

namespace px3d {

using detail::raw;
using detail::wants_grad;

namespace {

// Maps each output flat index to the input flat index it reads from.
std::vector<std::size_t> permutation_gather(const Shape& in_shape,
                                            const std::vector<std::size_t>& perm) {
  const std::size_t rank = in_shape.size();
  std::vector<std::size_t> in_strides(rank, 1);
  for (std::size_t i = rank; i-- > 1;) in_strides[i - 1] = in_strides[i] * in_shape[i];
  Shape out_shape(rank);
  std::vector<std::size_t> stride_for_out(rank);
  for (std::size_t i = 0; i < rank; ++i) {
    out_shape[i] = in_shape[perm[i]];
    stride_for_out[i] = in_strides[perm[i]];
  }
  const std::size_t n = numel_of(in_shape);
  std::vector<std::size_t> gather(n);
  std::vector<std::size_t> counter(rank, 0);
  std::size_t src = 0;
  for (std::size_t flat = 0; flat < n; ++flat) {
    gather[flat] = src;
    for (std::size_t ax = rank; ax-- > 0;) {
      ++counter[ax];
      src += stride_for_out[ax];
      if (counter[ax] < out_shape[ax]) break;
      src -= stride_for_out[ax] * out_shape[ax];
      counter[ax] = 0;
    }
  }
  return gather;
}

}  // namespace

Tensor reshape(const Tensor& x, Shape shape) {
  detail::require(numel_of(shape) == x.numel(), "reshape: cannot view " + to_string(x.shape()) +
                                                    " as " + to_string(shape));
  std::vector<double> out(x.data().begin(), x.data().end());
  auto* nx = raw(x);
  return Tensor::make_result(std::move(shape), std::move(out), "reshape", {x},
                             [nx](std::span<const double> g) {
                               for (std::size_t i = 0; i < g.size(); ++i) nx->grad[i] += g[i];
                             });
}

Tensor transpose_axes(const Tensor& x, const std::vector<std::size_t>& perm) {
  const Shape& s = x.shape();
  detail::require(perm.size() == s.size(), "transpose_axes: permutation rank " +
                                               std::to_string(perm.size()) + " vs tensor " +
                                               to_string(s));
  std::vector<bool> used(perm.size(), false);
  for (std::size_t p : perm) {
    detail::require(p < perm.size() && !used[p], "transpose_axes: not a permutation");
    used[p] = true;
  }
  Shape out_shape(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) out_shape[i] = s[perm[i]];
  auto gather = permutation_gather(s, perm);
  const auto dx = x.data();
  std::vector<double> out(dx.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = dx[gather[i]];
  auto* nx = raw(x);
  return Tensor::make_result(std::move(out_shape), std::move(out), "transpose_axes", {x},
                             [nx, gather = std::move(gather)](std::span<const double> g) {
                               for (std::size_t i = 0; i < g.size(); ++i)
                                 nx->grad[gather[i]] += g[i];
                             });
}

Tensor concat(const std::vector<Tensor>& parts, std::size_t axis) {
  detail::require(!parts.empty(), "concat: no inputs");
  const Shape& first = parts.front().shape();
  detail::require(axis < first.size(), "concat: axis out of range for " + to_string(first));
  Shape out_shape = first;
  out_shape[axis] = 0;
  for (const auto& p : parts) {
    const Shape& s = p.shape();
    bool ok = s.size() == first.size();
    for (std::size_t i = 0; ok && i < s.size(); ++i) ok = i == axis || s[i] == first[i];
    detail::require(ok, "concat: incompatible shapes " + to_string(first) + " and " + to_string(s) +
                            " along axis " + std::to_string(axis));
    out_shape[axis] += s[axis];
  }
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= first[i];
  for (std::size_t i = axis + 1; i < first.size(); ++i) inner *= first[i];
  const std::size_t out_row = out_shape[axis] * inner;

  std::vector<double> out(numel_of(out_shape));
  std::vector<detail::Node*> nodes;
  std::vector<std::size_t> widths;
  std::size_t offset = 0;
  for (const auto& p : parts) {
    const std::size_t w = p.dim(axis) * inner;
    const auto d = p.data();
    for (std::size_t o = 0; o < outer; ++o)
      std::copy_n(d.begin() + static_cast<std::ptrdiff_t>(o * w), w,
                  out.begin() + static_cast<std::ptrdiff_t>(o * out_row + offset));
    offset += w;
    nodes.push_back(raw(p));
    widths.push_back(w);
  }
  return Tensor::make_result(std::move(out_shape), std::move(out), "concat", parts,
                             [nodes, widths, outer, out_row](std::span<const double> g) {
                               std::size_t off = 0;
                               for (std::size_t k = 0; k < nodes.size(); ++k) {
                                 const std::size_t w = widths[k];
                                 if (wants_grad(nodes[k])) {
                                   auto& gx = nodes[k]->grad;
                                   for (std::size_t o = 0; o < outer; ++o)
                                     for (std::size_t i = 0; i < w; ++i)
                                       gx[o * w + i] += g[o * out_row + off + i];
                                 }
                                 off += w;
                               }
                             });
}

std::vector<Tensor> split(const Tensor& x, std::size_t axis, const std::vector<std::size_t>& sizes) {
  const Shape& s = x.shape();
  detail::require(axis < s.size(), "split: axis out of range for " + to_string(s));
  const std::size_t total = std::accumulate(sizes.begin(), sizes.end(), std::size_t{0});
  detail::require(total == s[axis], "split: sizes sum to " + std::to_string(total) +
                                        " but axis has extent " + std::to_string(s[axis]));
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= s[i];
  for (std::size_t i = axis + 1; i < s.size(); ++i) inner *= s[i];
  const std::size_t in_row = s[axis] * inner;
  const auto dx = x.data();
  auto* nx = raw(x);

  std::vector<Tensor> pieces;
  std::size_t offset = 0;
  for (std::size_t size : sizes) {
    Shape ps = s;
    ps[axis] = size;
    const std::size_t w = size * inner;
    std::vector<double> out(outer * w);
    for (std::size_t o = 0; o < outer; ++o)
      std::copy_n(dx.begin() + static_cast<std::ptrdiff_t>(o * in_row + offset), w,
                  out.begin() + static_cast<std::ptrdiff_t>(o * w));
    pieces.push_back(Tensor::make_result(
        std::move(ps), std::move(out), "split", {x},
        [nx, outer, in_row, offset, w](std::span<const double> g) {
          for (std::size_t o = 0; o < outer; ++o)
            for (std::size_t i = 0; i < w; ++i) nx->grad[o * in_row + offset + i] += g[o * w + i];
        }));
    offset += w;
  }
  return pieces;
}

Tensor concat_channels(const std::vector<Tensor>& parts) {
  for (const auto& p : parts) detail::require_rank(p, 4, "concat_channels", "input");
  return concat(parts, 1);
}

std::vector<Tensor> split_channels(const Tensor& x, const std::vector<std::size_t>& sizes) {
  detail::require_rank(x, 4, "split_channels", "input");
  return split(x, 1, sizes);
}

}  // namespace px3d
