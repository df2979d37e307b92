#pragma once

#include <functional>
#include <string>

#include "px3d/random.hpp"
#include "px3d/tensor.hpp"

namespace px3d::nn {

struct Conv2dParams {
  Tensor weight;  // [out, in, k, k]
  Tensor bias;    // [out], undefined for convolutions feeding a batch norm

  /// Kaiming-normal weights, zero bias.
  static Conv2dParams init(std::size_t in_channels, std::size_t out_channels, std::size_t kernel,
                           Rng& rng, bool with_bias = true);
  std::size_t in_channels() const { return weight.dim(1); }
  std::size_t out_channels() const { return weight.dim(0); }
};

struct BatchNormParams {
  Tensor gamma;
  Tensor beta;
  RunningStats stats;

  static BatchNormParams init(std::size_t channels);
};

struct LinearParams {
  Tensor weight;  // [out, in]
  Tensor bias;    // [out]

  static LinearParams init(std::size_t in_features, std::size_t out_features, Rng& rng);
  static LinearParams constant(std::size_t in_features, std::size_t out_features, double weight,
                               double bias);
};

struct LayerNormParams {
  Tensor gamma;
  Tensor beta;

  static LayerNormParams init(std::size_t width);
};

/// Encoder block: (Conv3x3 -> BN -> ReLU) twice.
struct ConvBlockParams {
  Conv2dParams conv1;
  BatchNormParams bn1;
  Conv2dParams conv2;
  BatchNormParams bn2;

  static ConvBlockParams init(std::size_t in_channels, std::size_t out_channels, Rng& rng);
  std::size_t in_channels() const { return conv1.in_channels(); }
  std::size_t out_channels() const { return conv2.out_channels(); }
};

/// Multi-axis gated MLP. The expanded features are split into a local branch,
/// gated across positions inside each block_size x block_size window, and a
/// global branch, gated across the grid_size x grid_size cells at a fixed
/// offset inside each cell.
struct GatedMlpParams {
  LayerNormParams norm;
  LinearParams in_proj;     // C -> 2C
  LinearParams block_gate;  // spatial, b*b -> b*b
  LinearParams grid_gate;   // spatial, g*g -> g*g
  LinearParams out_proj;    // C -> C
  std::size_t block_size = 4;
  std::size_t grid_size = 4;

  /// Gating projections start at weight 0 / bias 1 so each gate passes its
  /// input through. `zero_output` also zeroes out_proj, making the whole
  /// block the identity.
  static GatedMlpParams init(std::size_t channels, std::size_t block_size, std::size_t grid_size,
                             Rng& rng, bool zero_output = false);
  std::size_t channels() const { return out_proj.weight.dim(0); }
};

/// Squeeze-excite channel attention.
struct ChannelAttentionParams {
  LinearParams squeeze;  // C -> C/r
  LinearParams excite;   // C/r -> C
  std::size_t reduction = 4;

  static ChannelAttentionParams init(std::size_t channels, std::size_t reduction, Rng& rng);
};

struct HybridBlockParams {
  Conv2dParams fuse1;
  BatchNormParams bn1;
  GatedMlpParams gmlp;
  ChannelAttentionParams attention;
  Conv2dParams fuse2;  // input is concat(attended, fused) -> 2D channels
  BatchNormParams bn2;

  static HybridBlockParams init(std::size_t up_channels, std::size_t skip_channels,
                                std::size_t depth, std::size_t block_size, std::size_t grid_size,
                                std::size_t reduction, Rng& rng);
  std::size_t depth() const { return fuse2.out_channels(); }
};

Tensor conv_bn_relu(const Tensor& x, const Conv2dParams& conv, BatchNormParams& bn, Mode mode);

Tensor conv_block(const Tensor& x, ConvBlockParams& p, Mode mode);

/// Spatial gating inside non-overlapping windows of a channels-last tensor
/// [B,H,W,2c] -> [B,H,W,c]: the first c channels are multiplied by a learned
/// mix of the last c channels over the block positions.
Tensor block_gating(const Tensor& x_nhwc, const LinearParams& gate, std::size_t block_size);

/// As block_gating, but mixing across a grid_size x grid_size lattice of cells.
Tensor grid_gating(const Tensor& x_nhwc, const LinearParams& gate, std::size_t grid_size);

Tensor multi_axis_gmlp(const Tensor& x, const GatedMlpParams& p);

Tensor channel_attention(const Tensor& x, const ChannelAttentionParams& p);

Tensor hybrid_block(const Tensor& up_features, const Tensor& skip_features, HybridBlockParams& p,
                    Mode mode);

/// Visitors over trainable tensors and BN running statistics, with stable
/// dotted names.
using ParamVisitor = std::function<void(const std::string& name, Tensor& tensor)>;
using BufferVisitor = std::function<void(const std::string& name, std::vector<double>& values)>;

void visit_params(Conv2dParams& p, const std::string& prefix, const ParamVisitor& visit);
void visit_params(BatchNormParams& p, const std::string& prefix, const ParamVisitor& visit);
void visit_params(LinearParams& p, const std::string& prefix, const ParamVisitor& visit);
void visit_params(LayerNormParams& p, const std::string& prefix, const ParamVisitor& visit);
void visit_params(ConvBlockParams& p, const std::string& prefix, const ParamVisitor& visit);
void visit_params(GatedMlpParams& p, const std::string& prefix, const ParamVisitor& visit);
void visit_params(ChannelAttentionParams& p, const std::string& prefix, const ParamVisitor& visit);
void visit_params(HybridBlockParams& p, const std::string& prefix, const ParamVisitor& visit);

void visit_buffers(BatchNormParams& p, const std::string& prefix, const BufferVisitor& visit);
void visit_buffers(ConvBlockParams& p, const std::string& prefix, const BufferVisitor& visit);
void visit_buffers(HybridBlockParams& p, const std::string& prefix, const BufferVisitor& visit);

}  // namespace px3d::nn
