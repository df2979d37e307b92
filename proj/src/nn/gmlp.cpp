#include "px3d/nn.hpp"

namespace px3d::nn {

namespace {

void require_divisible(std::size_t extent, std::size_t by, const char* axis, const char* what,
                       std::size_t size) {
  if (by == 0 || extent % by != 0) {
    throw ShapeError(std::string("multi_axis_gmlp: ") + axis + " " + std::to_string(extent) +
                     " is not divisible by " + what + " " + std::to_string(size));
  }
}

// u * (W v + b) where the projection mixes positions (last axis of the
// [..., channels, positions] view).
Tensor gate_positions(const Tensor& grouped, const LinearParams& gate) {
  // grouped: [B, groups, positions, 2c]
  const std::size_t c2 = grouped.shape().back();
  auto halves = split(grouped, 3, {c2 / 2, c2 / 2});
  const Tensor v = transpose_axes(halves[1], {0, 1, 3, 2});
  const Tensor mixed = transpose_axes(linear(v, gate.weight, gate.bias), {0, 1, 3, 2});
  return mul(halves[0], mixed);
}

void require_gating_input(const Tensor& x, const LinearParams& gate, std::size_t positions,
                          const char* op) {
  if (x.rank() != 4 || x.dim(3) % 2 != 0) {
    throw ShapeError(std::string(op) + ": expected [B,H,W,2c] input, got " + to_string(x.shape()));
  }
  if (gate.weight.shape() != Shape{positions, positions}) {
    throw ShapeError(std::string(op) + ": gate weight " + to_string(gate.weight.shape()) +
                     " does not mix " + std::to_string(positions) + " positions");
  }
}

}  // namespace

GatedMlpParams GatedMlpParams::init(std::size_t channels, std::size_t block_size,
                                    std::size_t grid_size, Rng& rng, bool zero_output) {
  if (channels % 2 != 0) {
    throw ShapeError("multi_axis_gmlp: channel count " + std::to_string(channels) + " must be even");
  }
  GatedMlpParams p;
  p.norm = LayerNormParams::init(channels);
  p.in_proj = LinearParams::init(channels, 2 * channels, rng);
  p.block_gate = LinearParams::constant(block_size * block_size, block_size * block_size, 0.0, 1.0);
  p.grid_gate = LinearParams::constant(grid_size * grid_size, grid_size * grid_size, 0.0, 1.0);
  p.out_proj = zero_output ? LinearParams::constant(channels, channels, 0.0, 0.0)
                           : LinearParams::init(channels, channels, rng);
  p.block_size = block_size;
  p.grid_size = grid_size;
  return p;
}

Tensor block_gating(const Tensor& x, const LinearParams& gate, std::size_t b) {
  require_gating_input(x, gate, b * b, "block_gating");
  const std::size_t batch = x.dim(0), h = x.dim(1), w = x.dim(2), c2 = x.dim(3);
  require_divisible(h, b, "height", "block size", b);
  require_divisible(w, b, "width", "block size", b);
  const std::size_t nh = h / b, nw = w / b;
  Tensor blocks = reshape(x, {batch, nh, b, nw, b, c2});
  blocks = transpose_axes(blocks, {0, 1, 3, 2, 4, 5});
  blocks = reshape(blocks, {batch, nh * nw, b * b, c2});
  Tensor gated = gate_positions(blocks, gate);
  gated = reshape(gated, {batch, nh, nw, b, b, c2 / 2});
  gated = transpose_axes(gated, {0, 1, 3, 2, 4, 5});
  return reshape(gated, {batch, h, w, c2 / 2});
}

Tensor grid_gating(const Tensor& x, const LinearParams& gate, std::size_t g) {
  require_gating_input(x, gate, g * g, "grid_gating");
  const std::size_t batch = x.dim(0), h = x.dim(1), w = x.dim(2), c2 = x.dim(3);
  require_divisible(h, g, "height", "grid size", g);
  require_divisible(w, g, "width", "grid size", g);
  const std::size_t fh = h / g, fw = w / g;
  Tensor cells = reshape(x, {batch, g, fh, g, fw, c2});
  cells = transpose_axes(cells, {0, 2, 4, 1, 3, 5});
  cells = reshape(cells, {batch, fh * fw, g * g, c2});
  Tensor gated = gate_positions(cells, gate);
  gated = reshape(gated, {batch, fh, fw, g, g, c2 / 2});
  gated = transpose_axes(gated, {0, 3, 1, 4, 2, 5});
  return reshape(gated, {batch, h, w, c2 / 2});
}

Tensor multi_axis_gmlp(const Tensor& x, const GatedMlpParams& p) {
  if (x.rank() != 4) throw ShapeError("multi_axis_gmlp: expected [B,C,H,W], got " + to_string(x.shape()));
  const std::size_t channels = x.dim(1), h = x.dim(2), w = x.dim(3);
  if (channels % 2 != 0) {
    throw ShapeError("multi_axis_gmlp: channel count " + std::to_string(channels) + " must be even");
  }
  if (channels != p.channels()) {
    throw ShapeError("multi_axis_gmlp: parameters expect " + std::to_string(p.channels()) +
                     " channels, input has " + std::to_string(channels));
  }
  require_divisible(h, p.block_size, "height", "block size", p.block_size);
  require_divisible(w, p.block_size, "width", "block size", p.block_size);
  require_divisible(h, p.grid_size, "height", "grid size", p.grid_size);
  require_divisible(w, p.grid_size, "width", "grid size", p.grid_size);

  const Tensor nhwc = transpose_axes(x, {0, 2, 3, 1});
  Tensor y = layer_norm(nhwc, p.norm.gamma, p.norm.beta);
  y = gelu(linear(y, p.in_proj.weight, p.in_proj.bias));
  auto branches = split(y, 3, {channels, channels});
  const Tensor local = block_gating(branches[0], p.block_gate, p.block_size);
  const Tensor global = grid_gating(branches[1], p.grid_gate, p.grid_size);
  y = linear(concat({local, global}, 3), p.out_proj.weight, p.out_proj.bias);
  return add(x, transpose_axes(y, {0, 3, 1, 2}));
}

}  // namespace px3d::nn
