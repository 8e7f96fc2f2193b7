#pragma once

#include <array>
#include <cstdint>
#include <string>

#include "finecount/image_io.hpp"
#include "finecount/tensor.hpp"

namespace finecount {

using Rgb = std::array<std::uint8_t, 3>;

/// Fixed palette: category 1 warm, category 2 cool, then further hues.
Rgb category_color(int category);

/// Image (1 or 3 channels) as an RGB raster.
RgbImage to_rgb(const Tensor& image);

/// Per-category density heat overlay at image resolution. Each category is
/// blended in its palette color with opacity proportional to its density
/// relative to the largest density across categories; zero density leaves
/// the image untouched.
RgbImage density_overlay(const Tensor& image, const Tensor& fine_maps);

/// Argmax mask of a (K+1)-channel segmentation map; background pixels show
/// the image, category pixels are tinted with the palette.
RgbImage segmentation_overlay(const Tensor& image, const Tensor& segmentation);

/// Draws text with a 3x5 bitmap font scaled by `scale`. Unknown characters
/// render as blanks.
void draw_text(RgbImage& canvas, int y, int x, const std::string& text, Rgb color, int scale = 2);

/// Ground-truth and predicted overlays side by side, each with a caption
/// listing the per-category counts in palette colors.
RgbImage comparison_panel(const Tensor& image, const Tensor& gt_fine, const Tensor& pred_fine);

}  // namespace finecount
