#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "finecount/tensor.hpp"

namespace finecount {

/// Decodes an 8-bit grayscale or RGB PNG into a C x H x W tensor in [0, 1].
/// Palette and alpha images are flattened to gray or RGB.
Tensor read_png(const std::filesystem::path& path);

/// Encodes a 1- or 3-channel tensor as 8-bit PNG; values are clamped to [0, 1].
void write_png(const std::filesystem::path& path, const Tensor& image);

/// Interleaved 8-bit RGB raster, used by the visualization code.
struct RgbImage {
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> pixels;  // row-major, 3 bytes per pixel

  RgbImage() = default;
  RgbImage(int h, int w) : height(h), width(w), pixels(static_cast<std::size_t>(h) * w * 3, 0) {}
  std::uint8_t* at(int y, int x) { return &pixels[(static_cast<std::size_t>(y) * width + x) * 3]; }
  const std::uint8_t* at(int y, int x) const {
    return &pixels[(static_cast<std::size_t>(y) * width + x) * 3];
  }
};

void write_png(const std::filesystem::path& path, const RgbImage& image);

/// Bilinear resize of every channel (pixel-center aligned).
Tensor resize_bilinear(const Tensor& image, int height, int width);

}  // namespace finecount
