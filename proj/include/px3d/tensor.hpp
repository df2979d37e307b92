#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace px3d {

using Shape = std::vector<std::size_t>;

std::size_t numel_of(const Shape& shape);
std::string to_string(const Shape& shape);

/// Raised when operand shapes do not satisfy an operation's contract.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Raised when an operation produces NaN or Inf from finite inputs.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {

struct Node;
using BackwardFn = std::function<void(std::span<const double> out_grad)>;

struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;
  bool requires_grad = false;
  std::uint64_t sequence = 0;
  const char* op = "leaf";
  std::vector<std::shared_ptr<Node>> inputs;
  BackwardFn backward;

  bool is_leaf() const { return !backward; }
};

}  // namespace detail

/// N-dimensional row-major array of doubles with reverse-mode gradient tracking.
///
/// A Tensor is a cheap handle: copies share the same underlying node, so
/// values produced by an operation are immutable and parameters are updated
/// through mutable_data() on leaf tensors only.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<double> values, bool requires_grad = false);
  static Tensor scalar(double value);

  bool defined() const { return static_cast<bool>(node_); }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t numel() const;

  std::span<const double> data() const;
  /// Writable view for leaves (parameters, inputs). Throws on op results.
  std::span<double> mutable_data();
  double item() const;
  double at(std::initializer_list<std::size_t> index) const;

  bool requires_grad() const;
  Tensor& set_requires_grad(bool on);
  bool is_leaf() const;
  bool has_grad() const;
  std::span<const double> grad() const;
  void zero_grad();

  /// Copy of the values with no graph history.
  Tensor detach() const;

  /// Accumulates d(this)/d(leaf) into every reachable leaf's grad.
  void backward() const;

  // Construction helper for operations. `backward` is dropped when no input
  // requires a gradient, so untracked evaluation builds no graph.
  static Tensor make_result(Shape shape, std::vector<double> values, const char* op,
                            const std::vector<Tensor>& inputs, detail::BackwardFn backward);

  const std::shared_ptr<detail::Node>& node() const { return node_; }

 private:
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}
  std::shared_ptr<detail::Node> node_;
};

/// Tracked operations reachable from a root, in execution order.
class GradTape {
 public:
  struct Entry {
    std::uint64_t sequence;
    const char* op;
  };

  static GradTape collect(const Tensor& root);

  std::size_t size() const { return nodes_.size(); }
  std::vector<Entry> entries() const;

  /// Runs every recorded backward function in reverse execution order.
  /// Returns the visit order (sequence numbers) for inspection.
  std::vector<std::uint64_t> replay(std::span<const double> seed) const;

 private:
  std::vector<detail::Node*> nodes_;
  detail::Node* root_ = nullptr;
};

// ---------------------------------------------------------------------------
// Elementwise
// ---------------------------------------------------------------------------
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& x, double factor);
Tensor square(const Tensor& x);
Tensor relu(const Tensor& x);
Tensor sigmoid(const Tensor& x);
/// Exact (erf-based) GELU.
Tensor gelu(const Tensor& x);

/// x[B,C,H,W] * s[B,C], broadcast over the spatial axes.
Tensor scale_channels(const Tensor& x, const Tensor& s);

// ---------------------------------------------------------------------------
// Reductions
// ---------------------------------------------------------------------------
Tensor reduce_sum(const Tensor& x);
Tensor reduce_mean(const Tensor& x);
/// Mean over one axis; the axis is removed from the shape.
Tensor reduce_mean(const Tensor& x, std::size_t axis);

// ---------------------------------------------------------------------------
// Shape manipulation
// ---------------------------------------------------------------------------
Tensor reshape(const Tensor& x, Shape shape);
/// out.shape[i] = x.shape[perm[i]].
Tensor transpose_axes(const Tensor& x, const std::vector<std::size_t>& perm);
Tensor concat(const std::vector<Tensor>& parts, std::size_t axis);
std::vector<Tensor> split(const Tensor& x, std::size_t axis, const std::vector<std::size_t>& sizes);
Tensor concat_channels(const std::vector<Tensor>& parts);
std::vector<Tensor> split_channels(const Tensor& x, const std::vector<std::size_t>& sizes);

// ---------------------------------------------------------------------------
// Linear algebra
// ---------------------------------------------------------------------------
/// A[M,K] @ B[K,N].
Tensor matmul(const Tensor& a, const Tensor& b);
/// x[..., in] @ weight[out, in]^T + bias[out].
Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias);

// ---------------------------------------------------------------------------
// Convolution, pooling, normalisation
// ---------------------------------------------------------------------------
Tensor conv2d(const Tensor& input, const Tensor& weight, const Tensor& bias, int stride = 1,
              int padding = 0);
Tensor max_pool2d(const Tensor& input, std::size_t kernel = 2);
Tensor avg_pool2d(const Tensor& input, std::size_t kernel = 2);
/// Nearest-neighbour upsampling.
Tensor upsample2d(const Tensor& input, std::size_t factor = 2);

enum class Mode { train, eval };

struct RunningStats {
  std::vector<double> mean;
  std::vector<double> var;

  static RunningStats identity(std::size_t channels) {
    return {std::vector<double>(channels, 0.0), std::vector<double>(channels, 1.0)};
  }
};

inline constexpr double kNormEpsilon = 1e-5;
inline constexpr double kBatchNormMomentum = 0.1;

/// Per-channel batch normalisation of x[B,C,H,W]. Train mode updates `stats`.
Tensor batch_norm(const Tensor& input, const Tensor& gamma, const Tensor& beta,
                  RunningStats& stats, Mode mode);
/// Normalisation over the last axis.
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta);

}  // namespace px3d
