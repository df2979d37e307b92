#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "px3d/tensor.hpp"

namespace px3d::image {

struct GrayImage {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<std::uint8_t> pixels;  // row-major
};

inline constexpr std::size_t kMontageTiles = 8;
inline constexpr std::size_t kMontageColumns = 4;

/// Depth indices round(k (D-1) / 7) for k = 0..7.
std::vector<std::size_t> montage_slices(std::size_t depth);

/// Eight evenly spaced depth slices of a [D,H,W] volume on a 4x2 grid, scaled
/// by the volume's overall range to 8-bit.
GrayImage depth_montage(const Tensor& volume);

void write_png(const std::filesystem::path& path, const GrayImage& image);

}  // namespace px3d::image
