#include "finecount/visualize.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "finecount/errors.hpp"

namespace finecount {

namespace {

constexpr Rgb kPalette[] = {{255, 96, 0}, {0, 144, 255}, {64, 220, 64}, {220, 64, 220}, {240, 220, 0}, {0, 220, 200}};

// 3x5 glyphs, one row per entry, bit 2 = left column.
struct Glyph {
  char ch;
  std::uint8_t rows[5];
};
constexpr Glyph kFont[] = {
    {'0', {7, 5, 5, 5, 7}}, {'1', {2, 6, 2, 2, 7}}, {'2', {7, 1, 7, 4, 7}}, {'3', {7, 1, 7, 1, 7}},
    {'4', {5, 5, 7, 1, 1}}, {'5', {7, 4, 7, 1, 7}}, {'6', {7, 4, 7, 5, 7}}, {'7', {7, 1, 1, 1, 1}},
    {'8', {7, 5, 7, 5, 7}}, {'9', {7, 5, 7, 1, 7}}, {'.', {0, 0, 0, 0, 2}}, {':', {0, 2, 0, 2, 0}},
    {'-', {0, 0, 7, 0, 0}}, {'/', {1, 1, 2, 4, 4}}, {'G', {7, 4, 5, 5, 7}}, {'T', {7, 2, 2, 2, 2}},
    {'P', {7, 5, 7, 4, 4}}, {'R', {7, 5, 6, 5, 5}}, {'E', {7, 4, 6, 4, 7}}, {'D', {6, 5, 5, 5, 6}},
};

const Glyph* glyph(char c) {
  for (const auto& g : kFont)
    if (g.ch == c) return &g;
  return nullptr;
}

// Nearest-neighbour lookup of a low-resolution map at image pixel (y, x).
double sample(const Tensor& map, int c, int y, int x, int h, int w) {
  int my = std::min(map.height() - 1, y * map.height() / h);
  int mx = std::min(map.width() - 1, x * map.width() / w);
  return map(c, my, mx);
}

void blend(std::uint8_t* px, Rgb color, double alpha) {
  for (int i = 0; i < 3; ++i) px[i] = static_cast<std::uint8_t>(std::lround((1 - alpha) * px[i] + alpha * color[i]));
}

std::string format_count(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.1f", v);
  return buf;
}

}  // namespace

Rgb category_color(int category) {
  if (category < 1) throw UsageError("categories are 1-based");
  return kPalette[(category - 1) % std::size(kPalette)];
}

RgbImage to_rgb(const Tensor& image) {
  if (image.channels() != 1 && image.channels() != 3) throw DataError("to_rgb: image must have 1 or 3 channels");
  RgbImage out(image.height(), image.width());
  for (int y = 0; y < image.height(); ++y)
    for (int x = 0; x < image.width(); ++x)
      for (int c = 0; c < 3; ++c) {
        double v = image(image.channels() == 3 ? c : 0, y, x);
        out.at(y, x)[c] = static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255));
      }
  return out;
}

RgbImage density_overlay(const Tensor& image, const Tensor& fine_maps) {
  RgbImage out = to_rgb(image);
  double peak = 0;
  for (double v : fine_maps.data()) peak = std::max(peak, v);
  if (peak <= 0) return out;
  for (int y = 0; y < out.height; ++y)
    for (int x = 0; x < out.width; ++x)
      for (int c = 0; c < fine_maps.channels(); ++c) {
        double a = sample(fine_maps, c, y, x, out.height, out.width) / peak;
        if (a > 0) blend(out.at(y, x), category_color(c + 1), std::min(1.0, a));
      }
  return out;
}

RgbImage segmentation_overlay(const Tensor& image, const Tensor& segmentation) {
  int k = segmentation.channels() - 1;
  if (k < 1) throw DataError("segmentation_overlay: need at least 2 channels");
  RgbImage out = to_rgb(image);
  for (int y = 0; y < out.height; ++y)
    for (int x = 0; x < out.width; ++x) {
      int best = 0;
      for (int c = 1; c <= k; ++c)
        if (sample(segmentation, c, y, x, out.height, out.width) >
            sample(segmentation, best, y, x, out.height, out.width))
          best = c;
      if (best < k) blend(out.at(y, x), category_color(best + 1), 0.6);
    }
  return out;
}

void draw_text(RgbImage& canvas, int y, int x, const std::string& text, Rgb color, int scale) {
  for (char ch : text) {
    if (const Glyph* g = glyph(ch)) {
      for (int r = 0; r < 5; ++r)
        for (int col = 0; col < 3; ++col) {
          if (!(g->rows[r] & (4 >> col))) continue;
          for (int dy = 0; dy < scale; ++dy)
            for (int dx = 0; dx < scale; ++dx) {
              int py = y + r * scale + dy, px = x + col * scale + dx;
              if (py >= 0 && py < canvas.height && px >= 0 && px < canvas.width)
                std::copy(color.begin(), color.end(), canvas.at(py, px));
            }
        }
    }
    x += 4 * scale;
  }
}

RgbImage comparison_panel(const Tensor& image, const Tensor& gt_fine, const Tensor& pred_fine) {
  if (gt_fine.channels() != pred_fine.channels()) throw DataError("comparison_panel: category counts differ");
  constexpr int kScale = 2, kGap = 4;
  int k = gt_fine.channels();
  int caption = (5 * kScale + 4) * (k + 1);
  RgbImage left = density_overlay(image, gt_fine), right = density_overlay(image, pred_fine);
  RgbImage out(image.height() + caption, 2 * image.width() + kGap);
  auto paste = [&](const RgbImage& src, int x0) {
    for (int y = 0; y < src.height; ++y) std::copy(src.at(y, 0), src.at(y, 0) + 3 * src.width, out.at(y, x0));
  };
  paste(left, 0);
  paste(right, image.width() + kGap);
  const Rgb white{255, 255, 255};
  int line = 5 * kScale + 4;
  for (int side = 0; side < 2; ++side) {
    int x0 = side * (image.width() + kGap) + 2;
    int y0 = image.height() + 2;
    const Tensor& maps = side == 0 ? gt_fine : pred_fine;
    draw_text(out, y0, x0, side == 0 ? "GT" : "PRED", white, kScale);
    for (int c = 0; c < k; ++c) draw_text(out, y0 + (c + 1) * line, x0, format_count(maps.channel_sum(c)), category_color(c + 1), kScale);
  }
  return out;
}

}  // namespace finecount
