#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <memory>
#include <stdexcept>

#include "px3d/image.hpp"

namespace px3d::image {

std::vector<std::size_t> montage_slices(std::size_t depth) {
  if (depth < kMontageTiles) {
    throw std::invalid_argument("montage: need at least " + std::to_string(kMontageTiles) + " depth slices, got " +
                                std::to_string(depth));
  }
  std::vector<std::size_t> out;
  for (std::size_t k = 0; k < kMontageTiles; ++k) {
    out.push_back(static_cast<std::size_t>(
        std::lround(static_cast<double>(k) * static_cast<double>(depth - 1) / (kMontageTiles - 1))));
  }
  return out;
}

GrayImage depth_montage(const Tensor& volume) {
  if (volume.rank() != 3) throw ShapeError("montage: expected [D,H,W], got " + to_string(volume.shape()));
  const std::size_t H = volume.dim(1), W = volume.dim(2);
  const auto slices = montage_slices(volume.dim(0));
  const auto& v = volume.data();
  const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
  const double min = *lo, range = *hi - *lo;

  const std::size_t rows = kMontageTiles / kMontageColumns;
  GrayImage img{kMontageColumns * W, rows * H, {}};
  img.pixels.assign(img.width * img.height, 0);
  for (std::size_t t = 0; t < slices.size(); ++t) {
    const std::size_t ox = (t % kMontageColumns) * W, oy = (t / kMontageColumns) * H;
    for (std::size_t y = 0; y < H; ++y)
      for (std::size_t x = 0; x < W; ++x) {
        const double value = v[(slices[t] * H + y) * W + x];
        const double scaled = range > 0.0 ? (value - min) / range : 0.0;
        img.pixels[(oy + y) * img.width + ox + x] = static_cast<std::uint8_t>(std::lround(scaled * 255.0));
      }
  }
  return img;
}

void write_png(const std::filesystem::path& path, const GrayImage& image) {
  if (image.pixels.size() != image.width * image.height || image.width == 0 || image.height == 0) {
    throw std::invalid_argument("write_png: pixel buffer does not match its extents");
  }
  std::unique_ptr<FILE, int (*)(FILE*)> file(std::fopen(path.c_str(), "wb"), &std::fclose);
  if (!file) throw std::runtime_error("cannot write " + path.string());
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    throw std::runtime_error("libpng initialisation failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw std::runtime_error("libpng failed writing " + path.string());
  }
  png_init_io(png, file.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(image.width), static_cast<png_uint_32>(image.height), 8,
               PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (std::size_t y = 0; y < image.height; ++y) {
    png_write_row(png, const_cast<png_bytep>(image.pixels.data() + y * image.width));
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

}  // namespace px3d::image
