#include <cmath>

#include "px3d/nn.hpp"

namespace px3d::nn {

namespace {

Tensor normal_tensor(Shape shape, double stddev, Rng& rng) {
  std::vector<double> values(numel_of(shape));
  for (auto& v : values) v = rng.normal(0.0, stddev);
  return Tensor::from(std::move(shape), std::move(values), true);
}

}  // namespace

Conv2dParams Conv2dParams::init(std::size_t in_channels, std::size_t out_channels,
                                std::size_t kernel, Rng& rng, bool with_bias) {
  const double fan_in = static_cast<double>(in_channels * kernel * kernel);
  return {normal_tensor({out_channels, in_channels, kernel, kernel}, std::sqrt(2.0 / fan_in), rng),
          with_bias ? Tensor::zeros({out_channels}, true) : Tensor{}};
}

BatchNormParams BatchNormParams::init(std::size_t channels) {
  return {Tensor::full({channels}, 1.0, true), Tensor::zeros({channels}, true),
          RunningStats::identity(channels)};
}

LinearParams LinearParams::init(std::size_t in_features, std::size_t out_features, Rng& rng) {
  return {normal_tensor({out_features, in_features}, std::sqrt(1.0 / static_cast<double>(in_features)),
                        rng),
          Tensor::zeros({out_features}, true)};
}

LinearParams LinearParams::constant(std::size_t in_features, std::size_t out_features,
                                    double weight, double bias) {
  return {Tensor::full({out_features, in_features}, weight, true),
          Tensor::full({out_features}, bias, true)};
}

LayerNormParams LayerNormParams::init(std::size_t width) {
  return {Tensor::full({width}, 1.0, true), Tensor::zeros({width}, true)};
}

ConvBlockParams ConvBlockParams::init(std::size_t in_channels, std::size_t out_channels, Rng& rng) {
  ConvBlockParams p;
  p.conv1 = Conv2dParams::init(in_channels, out_channels, 3, rng, false);
  p.bn1 = BatchNormParams::init(out_channels);
  p.conv2 = Conv2dParams::init(out_channels, out_channels, 3, rng, false);
  p.bn2 = BatchNormParams::init(out_channels);
  return p;
}

ChannelAttentionParams ChannelAttentionParams::init(std::size_t channels, std::size_t reduction,
                                                    Rng& rng) {
  if (reduction == 0 || channels % reduction != 0) {
    throw ShapeError("channel_attention: " + std::to_string(channels) +
                     " channels not divisible by reduction " + std::to_string(reduction));
  }
  return {LinearParams::init(channels, channels / reduction, rng),
          LinearParams::init(channels / reduction, channels, rng), reduction};
}

HybridBlockParams HybridBlockParams::init(std::size_t up_channels, std::size_t skip_channels,
                                          std::size_t depth, std::size_t block_size,
                                          std::size_t grid_size, std::size_t reduction, Rng& rng) {
  HybridBlockParams p;
  p.fuse1 = Conv2dParams::init(up_channels + skip_channels, depth, 3, rng, false);
  p.bn1 = BatchNormParams::init(depth);
  p.gmlp = GatedMlpParams::init(depth, block_size, grid_size, rng);
  p.attention = ChannelAttentionParams::init(depth, reduction, rng);
  p.fuse2 = Conv2dParams::init(2 * depth, depth, 3, rng, false);
  p.bn2 = BatchNormParams::init(depth);
  return p;
}

Tensor conv_bn_relu(const Tensor& x, const Conv2dParams& conv, BatchNormParams& bn, Mode mode) {
  return relu(batch_norm(conv2d(x, conv.weight, conv.bias, 1, 1), bn.gamma, bn.beta, bn.stats, mode));
}

Tensor conv_block(const Tensor& x, ConvBlockParams& p, Mode mode) {
  if (x.rank() != 4 || x.dim(1) != p.in_channels()) {
    throw ShapeError("conv_block: expected [B," + std::to_string(p.in_channels()) +
                     ",H,W] input, got " + to_string(x.shape()));
  }
  return conv_bn_relu(conv_bn_relu(x, p.conv1, p.bn1, mode), p.conv2, p.bn2, mode);
}

Tensor channel_attention(const Tensor& x, const ChannelAttentionParams& p) {
  if (x.rank() != 4) throw ShapeError("channel_attention: expected rank-4 input, got " + to_string(x.shape()));
  const std::size_t batch = x.dim(0), channels = x.dim(1);
  if (p.reduction == 0 || channels % p.reduction != 0) {
    throw ShapeError("channel_attention: " + std::to_string(channels) +
                     " channels not divisible by reduction " + std::to_string(p.reduction));
  }
  const Tensor pooled = reduce_mean(reshape(x, {batch, channels, x.dim(2) * x.dim(3)}), 2);
  const Tensor hidden = relu(linear(pooled, p.squeeze.weight, p.squeeze.bias));
  const Tensor weights = sigmoid(linear(hidden, p.excite.weight, p.excite.bias));
  return scale_channels(x, weights);
}

Tensor hybrid_block(const Tensor& up_features, const Tensor& skip_features, HybridBlockParams& p,
                    Mode mode) {
  if (up_features.rank() != 4 || skip_features.rank() != 4 ||
      up_features.dim(0) != skip_features.dim(0) || up_features.dim(2) != skip_features.dim(2) ||
      up_features.dim(3) != skip_features.dim(3)) {
    throw ShapeError("hybrid_block: upsampled features " + to_string(up_features.shape()) +
                     " and skip features " + to_string(skip_features.shape()) +
                     " must share batch and spatial extents");
  }
  const Tensor fused = conv_bn_relu(concat_channels({up_features, skip_features}), p.fuse1, p.bn1, mode);
  const Tensor attended = channel_attention(multi_axis_gmlp(fused, p.gmlp), p.attention);
  // Second step of the skip: pre-MLP features rejoin after attention.
  return conv_bn_relu(concat_channels({attended, fused}), p.fuse2, p.bn2, mode);
}

void visit_params(Conv2dParams& p, const std::string& prefix, const ParamVisitor& visit) {
  visit(prefix + ".weight", p.weight);
  if (p.bias.defined()) visit(prefix + ".bias", p.bias);
}

void visit_params(BatchNormParams& p, const std::string& prefix, const ParamVisitor& visit) {
  visit(prefix + ".gamma", p.gamma);
  visit(prefix + ".beta", p.beta);
}

void visit_params(LinearParams& p, const std::string& prefix, const ParamVisitor& visit) {
  visit(prefix + ".weight", p.weight);
  visit(prefix + ".bias", p.bias);
}

void visit_params(LayerNormParams& p, const std::string& prefix, const ParamVisitor& visit) {
  visit(prefix + ".gamma", p.gamma);
  visit(prefix + ".beta", p.beta);
}

void visit_params(ConvBlockParams& p, const std::string& prefix, const ParamVisitor& visit) {
  visit_params(p.conv1, prefix + ".conv1", visit);
  visit_params(p.bn1, prefix + ".bn1", visit);
  visit_params(p.conv2, prefix + ".conv2", visit);
  visit_params(p.bn2, prefix + ".bn2", visit);
}

void visit_params(GatedMlpParams& p, const std::string& prefix, const ParamVisitor& visit) {
  visit_params(p.norm, prefix + ".norm", visit);
  visit_params(p.in_proj, prefix + ".in_proj", visit);
  visit_params(p.block_gate, prefix + ".block_gate", visit);
  visit_params(p.grid_gate, prefix + ".grid_gate", visit);
  visit_params(p.out_proj, prefix + ".out_proj", visit);
}

void visit_params(ChannelAttentionParams& p, const std::string& prefix, const ParamVisitor& visit) {
  visit_params(p.squeeze, prefix + ".squeeze", visit);
  visit_params(p.excite, prefix + ".excite", visit);
}

void visit_params(HybridBlockParams& p, const std::string& prefix, const ParamVisitor& visit) {
  visit_params(p.fuse1, prefix + ".fuse1", visit);
  visit_params(p.bn1, prefix + ".bn1", visit);
  visit_params(p.gmlp, prefix + ".gmlp", visit);
  visit_params(p.attention, prefix + ".attention", visit);
  visit_params(p.fuse2, prefix + ".fuse2", visit);
  visit_params(p.bn2, prefix + ".bn2", visit);
}

void visit_buffers(BatchNormParams& p, const std::string& prefix, const BufferVisitor& visit) {
  visit(prefix + ".running_mean", p.stats.mean);
  visit(prefix + ".running_var", p.stats.var);
}

void visit_buffers(ConvBlockParams& p, const std::string& prefix, const BufferVisitor& visit) {
  visit_buffers(p.bn1, prefix + ".bn1", visit);
  visit_buffers(p.bn2, prefix + ".bn2", visit);
}

void visit_buffers(HybridBlockParams& p, const std::string& prefix, const BufferVisitor& visit) {
  visit_buffers(p.bn1, prefix + ".bn1", visit);
  visit_buffers(p.bn2, prefix + ".bn2", visit);
}

}  // namespace px3d::nn
