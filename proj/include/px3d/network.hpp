#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "json.hpp"
#include "px3d/nn.hpp"

namespace px3d::net {

using px3d::to_string;

enum class DecoderType { cnn, hybrid };

std::string to_string(DecoderType type);
DecoderType decoder_type_from_string(const std::string& name);

/// Number of guided pyramid positions: four encoder blocks then four decoder blocks.
inline constexpr int kPyramidBlocks = 8;
/// Pyramid index of the first level carrying `depth` channels (encoder block 3).
inline constexpr int kFirstReconstructionLevel = 3;

struct NetworkConfig {
  std::size_t input_h = 32;
  std::size_t input_w = 64;
  std::size_t depth = 16;
  std::size_t stem_channels = 4;
  std::array<std::size_t, 4> encoder_channels{8, 16, 16, 16};
  std::size_t bottleneck_channels = 64;
  DecoderType decoder_type = DecoderType::hybrid;
  bool progressive = true;
  std::size_t block_size = 4;
  std::size_t grid_size = 4;
  std::size_t attention_reduction = 4;

  /// 32x64 input, 16-deep output: small enough for CPU training runs.
  static NetworkConfig desk();
  /// 128x256 input, 128-deep output.
  static NetworkConfig paper();

  /// Throws std::invalid_argument describing the first violated constraint.
  void validate() const;

  nlohmann::json to_json() const;
  static NetworkConfig from_json(const nlohmann::json& j);

  bool operator==(const NetworkConfig&) const = default;
};

/// FNV-1a over the canonical JSON form of the config.
std::uint64_t config_digest(const NetworkConfig& config);

/// Exact trainable-scalar count, computed from the config alone.
std::size_t parameter_count(const NetworkConfig& config);

struct PyramidLevel {
  int index;             // position in the 8-block pyramid (3..7)
  Tensor reconstruction; // [B, D, Hi, Wi]
};

struct PyramidOutput {
  std::vector<PyramidLevel> levels;

  const Tensor& final() const { return levels.back().reconstruction; }
};

using DecoderBlock = std::variant<nn::ConvBlockParams, nn::HybridBlockParams>;

class Network {
 public:
  static Network create(const NetworkConfig& config, std::uint64_t seed);

  const NetworkConfig& config() const { return config_; }

  /// px: [B, 1, H, W]. Train mode uses and updates batch statistics.
  PyramidOutput forward(const Tensor& px, Mode mode);

  void visit_params(const nn::ParamVisitor& visit);
  void visit_buffers(const nn::BufferVisitor& visit);
  std::vector<std::pair<std::string, Tensor>> named_parameters();

  const nn::ConvBlockParams& encoder_block(std::size_t i) const { return encoder_.at(i); }
  const DecoderBlock& decoder_block(std::size_t i) const { return decoder_.at(i); }

 private:
  NetworkConfig config_;
  nn::Conv2dParams stem_;
  std::array<nn::ConvBlockParams, 4> encoder_;
  nn::Conv2dParams bottleneck_;
  nn::BatchNormParams bottleneck_bn_;
  std::array<DecoderBlock, 4> decoder_;
};

/// Spatial extents of pyramid levels 3..7 for an input of h x w.
std::vector<std::pair<std::size_t, std::size_t>> level_extents(std::size_t h, std::size_t w);

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Raised when a checkpoint was written for a different network config.
class DigestMismatch : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::vector<char> encode_checkpoint(Network& network);
void save_checkpoint(Network& network, const std::filesystem::path& path);

/// Reads the config stored in a checkpoint without loading its tensors.
NetworkConfig read_checkpoint_config(const std::filesystem::path& path);

/// Loads a checkpoint. When `expected` is given the stored config digest must
/// match it, otherwise DigestMismatch lists the differing fields.
Network load_checkpoint(const std::filesystem::path& path,
                        const std::optional<NetworkConfig>& expected = std::nullopt);

}  // namespace px3d::net
