#pragma once

#include <string>

#include "px3d/tensor.hpp"

namespace px3d::detail {

inline Node* raw(const Tensor& t) { return t.node().get(); }

inline bool wants_grad(const Node* n) { return n->requires_grad; }

inline void require(bool ok, const std::string& message) {
  if (!ok) throw ShapeError(message);
}

inline void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  require(a.shape() == b.shape(), std::string(op) + ": shape mismatch " + to_string(a.shape()) +
                                      " vs " + to_string(b.shape()));
}

inline void require_rank(const Tensor& t, std::size_t rank, const char* op, const char* what) {
  require(t.rank() == rank, std::string(op) + ": " + what + " must have rank " +
                                std::to_string(rank) + ", got " + to_string(t.shape()));
}

}  // namespace px3d::detail
