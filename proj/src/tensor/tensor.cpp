#include "px3d/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <sstream>
#include <unordered_set>

namespace px3d {

namespace {

std::atomic<std::uint64_t> g_sequence{1};

std::shared_ptr<detail::Node> new_node(Shape shape, std::vector<double> values) {
  if (numel_of(shape) != values.size()) {
    throw ShapeError("tensor of shape " + to_string(shape) + " needs " +
                     std::to_string(numel_of(shape)) + " values, got " +
                     std::to_string(values.size()));
  }
  auto node = std::make_shared<detail::Node>();
  node->shape = std::move(shape);
  node->value = std::move(values);
  return node;
}

}  // namespace

std::size_t numel_of(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t extent : shape) n *= extent;
  return n;
}

std::string to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  return full(std::move(shape), 0.0, requires_grad);
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  const std::size_t n = numel_of(shape);
  auto node = new_node(std::move(shape), std::vector<double>(n, value));
  node->requires_grad = requires_grad;
  return Tensor(std::move(node));
}

Tensor Tensor::from(Shape shape, std::vector<double> values, bool requires_grad) {
  for (double v : values) {
    if (!std::isfinite(v)) throw NumericError("Tensor::from: non-finite input value");
  }
  auto node = new_node(std::move(shape), std::move(values));
  node->requires_grad = requires_grad;
  return Tensor(std::move(node));
}

Tensor Tensor::scalar(double value) { return from({}, {value}); }

const Shape& Tensor::shape() const {
  if (!node_) throw std::logic_error("use of an undefined tensor");
  return node_->shape;
}

std::size_t Tensor::dim(std::size_t axis) const {
  const auto& s = shape();
  if (axis >= s.size()) {
    throw ShapeError("axis " + std::to_string(axis) + " out of range for shape " + to_string(s));
  }
  return s[axis];
}

std::size_t Tensor::numel() const { return node_ ? node_->value.size() : 0; }

std::span<const double> Tensor::data() const {
  if (!node_) throw std::logic_error("use of an undefined tensor");
  return node_->value;
}

std::span<double> Tensor::mutable_data() {
  if (!node_) throw std::logic_error("use of an undefined tensor");
  if (!node_->is_leaf()) throw std::logic_error("mutable_data() on a non-leaf tensor");
  return node_->value;
}

double Tensor::item() const {
  if (numel() != 1) throw ShapeError("item() on tensor of shape " + to_string(shape()));
  return node_->value[0];
}

double Tensor::at(std::initializer_list<std::size_t> index) const {
  const auto& s = shape();
  if (index.size() != s.size()) throw ShapeError("at(): rank mismatch for " + to_string(s));
  std::size_t flat = 0;
  std::size_t axis = 0;
  for (std::size_t i : index) {
    if (i >= s[axis]) throw ShapeError("at(): index out of range for " + to_string(s));
    flat = flat * s[axis] + i;
    ++axis;
  }
  return node_->value[flat];
}

bool Tensor::requires_grad() const { return node_ && node_->requires_grad; }

Tensor& Tensor::set_requires_grad(bool on) {
  if (!node_) throw std::logic_error("use of an undefined tensor");
  if (!node_->is_leaf()) throw std::logic_error("set_requires_grad() on a non-leaf tensor");
  node_->requires_grad = on;
  return *this;
}

bool Tensor::is_leaf() const { return node_ && node_->is_leaf(); }

bool Tensor::has_grad() const { return node_ && !node_->grad.empty(); }

std::span<const double> Tensor::grad() const {
  if (!has_grad()) throw std::logic_error("tensor has no gradient");
  return node_->grad;
}

void Tensor::zero_grad() {
  if (node_) node_->grad.clear();
}

Tensor Tensor::detach() const { return Tensor(new_node(shape(), node_->value)); }

Tensor Tensor::make_result(Shape shape, std::vector<double> values, const char* op,
                           const std::vector<Tensor>& inputs, detail::BackwardFn backward) {
  for (double v : values) {
    if (!std::isfinite(v)) throw NumericError(std::string(op) + " produced a non-finite value");
  }
  auto node = new_node(std::move(shape), std::move(values));
  node->op = op;
  const bool tracked =
      std::any_of(inputs.begin(), inputs.end(), [](const Tensor& t) { return t.requires_grad(); });
  if (tracked) {
    node->requires_grad = true;
    node->sequence = g_sequence.fetch_add(1, std::memory_order_relaxed);
    node->inputs.reserve(inputs.size());
    for (const auto& t : inputs) node->inputs.push_back(t.node_);
    node->backward = std::move(backward);
  }
  return Tensor(std::move(node));
}

void Tensor::backward() const {
  if (!node_) throw std::logic_error("backward() on an undefined tensor");
  if (numel() != 1) {
    throw ShapeError("backward() requires a scalar loss, got shape " + to_string(shape()));
  }
  if (!node_->requires_grad) throw std::logic_error("backward() on a tensor with no graph");
  const double seed = 1.0;
  GradTape::collect(*this).replay(std::span<const double>(&seed, 1));
}

GradTape GradTape::collect(const Tensor& root) {
  GradTape tape;
  tape.root_ = root.node().get();
  std::unordered_set<const detail::Node*> seen;
  std::vector<detail::Node*> stack{root.node().get()};
  while (!stack.empty()) {
    detail::Node* n = stack.back();
    stack.pop_back();
    if (!n->requires_grad || !seen.insert(n).second) continue;
    if (!n->is_leaf()) tape.nodes_.push_back(n);
    for (const auto& in : n->inputs) stack.push_back(in.get());
  }
  std::sort(tape.nodes_.begin(), tape.nodes_.end(),
            [](const detail::Node* a, const detail::Node* b) { return a->sequence < b->sequence; });
  return tape;
}

std::vector<GradTape::Entry> GradTape::entries() const {
  std::vector<Entry> out;
  out.reserve(nodes_.size());
  for (const auto* n : nodes_) out.push_back({n->sequence, n->op});
  return out;
}

std::vector<std::uint64_t> GradTape::replay(std::span<const double> seed) const {
  // Intermediate gradients are scratch space for one pass; leaves accumulate.
  for (auto* n : nodes_) {
    n->grad.assign(n->value.size(), 0.0);
    for (const auto& in : n->inputs) {
      if (in->requires_grad && in->grad.size() != in->value.size()) {
        in->grad.assign(in->value.size(), 0.0);
      }
    }
  }
  if (root_ && root_->requires_grad) {
    if (root_->grad.size() != root_->value.size()) root_->grad.assign(root_->value.size(), 0.0);
    for (std::size_t i = 0; i < seed.size(); ++i) root_->grad[i] += seed[i];
  }
  std::vector<std::uint64_t> order;
  order.reserve(nodes_.size());
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
    detail::Node* n = *it;
    order.push_back(n->sequence);
    n->backward(n->grad);
  }
  for (auto* n : nodes_) {
    if (n != root_) std::vector<double>().swap(n->grad);
  }
  return order;
}

}  // namespace px3d
