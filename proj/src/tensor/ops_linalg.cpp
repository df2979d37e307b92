#include <cblas.h>

#include "ops_common.hpp"

namespace px3d {

using detail::raw;
using detail::wants_grad;

namespace {

// C[M,N] (+)= op(A) @ op(B), row-major.
void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k, const double* a,
          const double* b, double* c, double beta) {
  if (m == 0 || n == 0) return;
  cblas_dgemm(CblasRowMajor, trans_a ? CblasTrans : CblasNoTrans,
              trans_b ? CblasTrans : CblasNoTrans, static_cast<int>(m), static_cast<int>(n),
              static_cast<int>(k), 1.0, a, trans_a ? static_cast<int>(m) : static_cast<int>(k), b,
              trans_b ? static_cast<int>(k) : static_cast<int>(n), beta, c, static_cast<int>(n));
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  detail::require_rank(a, 2, "matmul", "lhs");
  detail::require_rank(b, 2, "matmul", "rhs");
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  detail::require(b.dim(0) == k, "matmul: inner dimensions differ " + to_string(a.shape()) + " @ " +
                                     to_string(b.shape()));
  std::vector<double> out(m * n);
  gemm(false, false, m, n, k, a.data().data(), b.data().data(), out.data(), 0.0);
  auto* na = raw(a);
  auto* nb = raw(b);
  return Tensor::make_result({m, n}, std::move(out), "matmul", {a, b},
                             [na, nb, m, n, k](std::span<const double> g) {
                               // dA = G B^T, dB = A^T G
                               if (wants_grad(na))
                                 gemm(false, true, m, k, n, g.data(), nb->value.data(),
                                      na->grad.data(), 1.0);
                               if (wants_grad(nb))
                                 gemm(true, false, k, n, m, na->value.data(), g.data(),
                                      nb->grad.data(), 1.0);
                             });
}

Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  detail::require(x.rank() >= 1, "linear: input must have rank >= 1");
  detail::require_rank(weight, 2, "linear", "weight");
  detail::require_rank(bias, 1, "linear", "bias");
  const std::size_t in = x.shape().back();
  const std::size_t out_features = weight.dim(0);
  detail::require(weight.dim(1) == in, "linear: weight " + to_string(weight.shape()) +
                                           " does not accept input " + to_string(x.shape()));
  detail::require(bias.dim(0) == out_features, "linear: bias " + to_string(bias.shape()) +
                                                   " does not match weight " +
                                                   to_string(weight.shape()));
  const std::size_t rows = x.numel() / in;
  Shape out_shape = x.shape();
  out_shape.back() = out_features;
  std::vector<double> out(rows * out_features);
  const auto db = bias.data();
  for (std::size_t r = 0; r < rows; ++r)
    std::copy(db.begin(), db.end(), out.begin() + static_cast<std::ptrdiff_t>(r * out_features));
  gemm(false, true, rows, out_features, in, x.data().data(), weight.data().data(), out.data(), 1.0);

  auto* nx = raw(x);
  auto* nw = raw(weight);
  auto* nb = raw(bias);
  return Tensor::make_result(
      std::move(out_shape), std::move(out), "linear", {x, weight, bias},
      [nx, nw, nb, rows, in, out_features](std::span<const double> g) {
        if (wants_grad(nx))
          gemm(false, false, rows, in, out_features, g.data(), nw->value.data(), nx->grad.data(),
               1.0);
        if (wants_grad(nw))
          gemm(true, false, out_features, in, rows, g.data(), nx->value.data(), nw->grad.data(),
               1.0);
        if (wants_grad(nb))
          for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t o = 0; o < out_features; ++o) nb->grad[o] += g[r * out_features + o];
      });
}

}  // namespace px3d
