#pragma once

#include <filesystem>
#include <functional>
#include <random>
#include <string>

#include "px3d/random.hpp"
#include "px3d/tensor.hpp"

namespace px3d::testing {

inline Tensor random_tensor(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0, bool requires_grad = false) {
  std::vector<double> v(numel_of(shape));
  for (auto& x : v) x = rng.uniform(lo, hi);
  return Tensor::from(std::move(shape), std::move(v), requires_grad);
}

/// Central difference of `loss` with respect to element `index` of a leaf.
inline double numeric_grad(Tensor& leaf, std::size_t index, const std::function<double()>& loss,
                           double h = 1e-6) {
  auto data = leaf.mutable_data();
  const double saved = data[index];
  data[index] = saved + h;
  const double up = loss();
  data[index] = saved - h;
  const double down = loss();
  data[index] = saved;
  return (up - down) / (2.0 * h);
}

/// |analytic - numeric| / max(1, |numeric|).
inline double grad_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) / std::max(1.0, std::abs(numeric));
}

/// Checks every element of every input against central differences of
/// sum(weights * f(inputs)); returns the worst error.
inline double gradcheck(const std::function<Tensor(const std::vector<Tensor>&)>& f, std::vector<Tensor> inputs,
                        std::uint64_t seed = 99) {
  Rng rng(seed);
  const Tensor probe = f(inputs);
  const Tensor weights = random_tensor(probe.shape(), rng);
  auto scalar = [&] { return reduce_sum(mul(f(inputs), weights)); };
  for (auto& in : inputs) in.zero_grad();
  scalar().backward();
  double worst = 0.0;
  for (auto& in : inputs) {
    if (!in.requires_grad()) continue;
    const std::vector<double> analytic(in.grad().begin(), in.grad().end());
    for (std::size_t i = 0; i < in.numel(); ++i) {
      const double n = numeric_grad(in, i, [&] { return scalar().item(); });
      worst = std::max(worst, grad_error(analytic[i], n));
    }
  }
  return worst;
}

class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() / ("px3d_" + tag + "_" + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

}  // namespace px3d::testing
