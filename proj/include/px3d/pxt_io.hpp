#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "px3d/tensor.hpp"

namespace px3d::io {

inline constexpr std::uint32_t kPxtVersion = 1;

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

/// PXT1 container: magic, version, an index table of (name, dtype, shape,
/// offset, count) entries, then little-endian f32 payloads. Values are
/// rounded to single precision on write.
std::vector<char> encode_pxt(const std::vector<NamedTensor>& entries);
std::vector<NamedTensor> decode_pxt(std::vector<char> bytes, const std::string& origin = {});

void write_pxt(const std::filesystem::path& path, const std::vector<NamedTensor>& entries);
std::vector<NamedTensor> read_pxt(const std::filesystem::path& path);

/// Throws FormatError if no entry has this name.
const Tensor& find_tensor(const std::vector<NamedTensor>& entries, const std::string& name);

/// Rounds every value through float, the precision PXT1 stores.
Tensor round_to_f32(const Tensor& t);

}  // namespace px3d::io
