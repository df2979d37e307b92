#include "px3d/network.hpp"

#include <stdexcept>

#include "px3d/binary_io.hpp"

namespace px3d::net {

std::string to_string(DecoderType type) { return type == DecoderType::cnn ? "cnn" : "hybrid"; }

DecoderType decoder_type_from_string(const std::string& name) {
  if (name == "cnn") return DecoderType::cnn;
  if (name == "hybrid") return DecoderType::hybrid;
  throw std::invalid_argument("unknown decoder_type '" + name + "' (expected cnn or hybrid)");
}

NetworkConfig NetworkConfig::desk() { return NetworkConfig{}; }

NetworkConfig NetworkConfig::paper() {
  NetworkConfig c;
  c.input_h = 128;
  c.input_w = 256;
  c.depth = 128;
  c.stem_channels = 16;
  c.encoder_channels = {32, 64, 128, 128};
  c.bottleneck_channels = 256;
  return c;
}

void NetworkConfig::validate() const {
  auto fail = [](const std::string& why) { throw std::invalid_argument("network config: " + why); };
  if (input_h == 0 || input_w == 0 || input_h % 8 != 0 || input_w % 8 != 0) {
    fail("input extents " + std::to_string(input_h) + "x" + std::to_string(input_w) +
         " must be positive multiples of 8");
  }
  if (depth == 0 || stem_channels == 0 || bottleneck_channels == 0) fail("channel counts must be positive");
  for (std::size_t c : encoder_channels)
    if (c == 0) fail("encoder channel counts must be positive");
  if (encoder_channels[3] != depth) {
    fail("last encoder block has " + std::to_string(encoder_channels[3]) +
         " channels but the reconstruction depth is " + std::to_string(depth));
  }
  if (decoder_type == DecoderType::hybrid) {
    if (depth % 2 != 0) fail("depth must be even for the gated MLP");
    if (attention_reduction == 0 || depth % attention_reduction != 0)
      fail("depth must be divisible by attention_reduction");
    const std::size_t h = input_h / 8, w = input_w / 8;
    if (block_size == 0 || h % block_size != 0 || w % block_size != 0)
      fail("block_size " + std::to_string(block_size) + " must divide the coarsest level " +
           std::to_string(h) + "x" + std::to_string(w));
    if (grid_size == 0 || h % grid_size != 0 || w % grid_size != 0)
      fail("grid_size " + std::to_string(grid_size) + " must divide the coarsest level " +
           std::to_string(h) + "x" + std::to_string(w));
  }
}

nlohmann::json NetworkConfig::to_json() const {
  return {{"input_h", input_h},
          {"input_w", input_w},
          {"depth", depth},
          {"stem_channels", stem_channels},
          {"encoder_channels", encoder_channels},
          {"bottleneck_channels", bottleneck_channels},
          {"decoder_type", net::to_string(decoder_type)},
          {"progressive", progressive},
          {"block_size", block_size},
          {"grid_size", grid_size},
          {"attention_reduction", attention_reduction}};
}

NetworkConfig NetworkConfig::from_json(const nlohmann::json& j) {
  NetworkConfig c;
  c.input_h = j.at("input_h").get<std::size_t>();
  c.input_w = j.at("input_w").get<std::size_t>();
  c.depth = j.at("depth").get<std::size_t>();
  c.stem_channels = j.at("stem_channels").get<std::size_t>();
  c.encoder_channels = j.at("encoder_channels").get<std::array<std::size_t, 4>>();
  c.bottleneck_channels = j.at("bottleneck_channels").get<std::size_t>();
  c.decoder_type = decoder_type_from_string(j.at("decoder_type").get<std::string>());
  c.progressive = j.at("progressive").get<bool>();
  c.block_size = j.at("block_size").get<std::size_t>();
  c.grid_size = j.at("grid_size").get<std::size_t>();
  c.attention_reduction = j.at("attention_reduction").get<std::size_t>();
  return c;
}

std::uint64_t config_digest(const NetworkConfig& config) {
  return io::fnv1a64(config.to_json().dump());
}

std::size_t parameter_count(const NetworkConfig& c) {
  auto conv = [](std::size_t in, std::size_t out) { return out * in * 9; };
  auto bn = [](std::size_t ch) { return 2 * ch; };
  auto block = [&](std::size_t in, std::size_t out) { return conv(in, out) + bn(out) + conv(out, out) + bn(out); };
  auto dense = [](std::size_t in, std::size_t out) { return out * in + out; };

  std::size_t total = conv(1, c.stem_channels) + c.stem_channels;
  std::size_t prev = c.stem_channels;
  for (std::size_t ch : c.encoder_channels) {
    total += block(prev, ch);
    prev = ch;
  }
  total += conv(c.encoder_channels[3], c.bottleneck_channels) + bn(c.bottleneck_channels);

  const std::size_t d = c.depth;
  const std::array<std::size_t, 4> up{c.bottleneck_channels, d, d, d};
  const std::array<std::size_t, 4> skip{c.encoder_channels[3], c.encoder_channels[2],
                                        c.encoder_channels[1], c.encoder_channels[0]};
  for (std::size_t i = 0; i < 4; ++i) {
    if (c.decoder_type == DecoderType::cnn) {
      total += block(up[i] + skip[i], d);
    } else {
      const std::size_t pb = c.block_size * c.block_size, pg = c.grid_size * c.grid_size;
      total += conv(up[i] + skip[i], d) + bn(d);
      total += 2 * d + dense(d, 2 * d) + dense(pb, pb) + dense(pg, pg) + dense(d, d);
      total += dense(d, d / c.attention_reduction) + dense(d / c.attention_reduction, d);
      total += conv(2 * d, d) + bn(d);
    }
  }
  return total;
}

std::vector<std::pair<std::size_t, std::size_t>> level_extents(std::size_t h, std::size_t w) {
  return {{h / 8, w / 8}, {h / 8, w / 8}, {h / 4, w / 4}, {h / 2, w / 2}, {h, w}};
}

Network Network::create(const NetworkConfig& config, std::uint64_t seed) {
  config.validate();
  Rng rng(seed);
  Network n;
  n.config_ = config;
  n.stem_ = nn::Conv2dParams::init(1, config.stem_channels, 3, rng);
  std::size_t prev = config.stem_channels;
  for (std::size_t i = 0; i < 4; ++i) {
    n.encoder_[i] = nn::ConvBlockParams::init(prev, config.encoder_channels[i], rng);
    prev = config.encoder_channels[i];
  }
  n.bottleneck_ = nn::Conv2dParams::init(prev, config.bottleneck_channels, 3, rng, false);
  n.bottleneck_bn_ = nn::BatchNormParams::init(config.bottleneck_channels);

  const std::size_t d = config.depth;
  const std::array<std::size_t, 4> up{config.bottleneck_channels, d, d, d};
  for (std::size_t i = 0; i < 4; ++i) {
    const std::size_t skip = config.encoder_channels[3 - i];
    if (config.decoder_type == DecoderType::cnn) {
      n.decoder_[i] = nn::ConvBlockParams::init(up[i] + skip, d, rng);
    } else {
      n.decoder_[i] = nn::HybridBlockParams::init(up[i], skip, d, config.block_size,
                                                  config.grid_size, config.attention_reduction, rng);
    }
  }
  return n;
}

PyramidOutput Network::forward(const Tensor& px, Mode mode) {
  if (px.rank() != 4 || px.dim(1) != 1) {
    throw ShapeError("forward: expected [B,1,H,W] input, got " + to_string(px.shape()));
  }
  if (px.dim(2) != config_.input_h || px.dim(3) != config_.input_w) {
    throw ShapeError("forward: network configured for " + std::to_string(config_.input_h) + "x" +
                     std::to_string(config_.input_w) + " input, got " + to_string(px.shape()));
  }
  std::array<Tensor, 4> skips;
  Tensor x = conv2d(px, stem_.weight, stem_.bias, 1, 1);
  for (std::size_t i = 0; i < 4; ++i) {
    if (i > 0) x = max_pool2d(x, 2);
    x = nn::conv_block(x, encoder_[i], mode);
    skips[i] = x;
  }

  PyramidOutput out;
  if (config_.progressive) out.levels.push_back({kFirstReconstructionLevel, skips[3]});

  x = nn::conv_bn_relu(skips[3], bottleneck_, bottleneck_bn_, mode);
  for (std::size_t i = 0; i < 4; ++i) {
    if (i > 0) x = upsample2d(x, 2);
    const Tensor& skip = skips[3 - i];
    x = std::visit(
        [&](auto& block) -> Tensor {
          using T = std::decay_t<decltype(block)>;
          if constexpr (std::is_same_v<T, nn::ConvBlockParams>) {
            return nn::conv_block(concat_channels({x, skip}), block, mode);
          } else {
            return nn::hybrid_block(x, skip, block, mode);
          }
        },
        decoder_[i]);
    const int level = kFirstReconstructionLevel + 1 + static_cast<int>(i);
    if (config_.progressive || i == 3) out.levels.push_back({level, x});
  }
  return out;
}

void Network::visit_params(const nn::ParamVisitor& visit) {
  nn::visit_params(stem_, "stem", visit);
  for (std::size_t i = 0; i < 4; ++i) nn::visit_params(encoder_[i], "encoder." + std::to_string(i), visit);
  nn::visit_params(bottleneck_, "bottleneck.conv", visit);
  nn::visit_params(bottleneck_bn_, "bottleneck.bn", visit);
  for (std::size_t i = 0; i < 4; ++i) {
    std::visit([&](auto& block) { nn::visit_params(block, "decoder." + std::to_string(i), visit); },
               decoder_[i]);
  }
}

void Network::visit_buffers(const nn::BufferVisitor& visit) {
  for (std::size_t i = 0; i < 4; ++i) nn::visit_buffers(encoder_[i], "encoder." + std::to_string(i), visit);
  nn::visit_buffers(bottleneck_bn_, "bottleneck.bn", visit);
  for (std::size_t i = 0; i < 4; ++i) {
    std::visit([&](auto& block) { nn::visit_buffers(block, "decoder." + std::to_string(i), visit); },
               decoder_[i]);
  }
}

std::vector<std::pair<std::string, Tensor>> Network::named_parameters() {
  std::vector<std::pair<std::string, Tensor>> out;
  visit_params([&](const std::string& name, Tensor& t) { out.emplace_back(name, t); });
  return out;
}

}  // namespace px3d::net
