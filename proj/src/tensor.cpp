#include "finecount/tensor.hpp"

#include <algorithm>
#include <numeric>

#include "finecount/errors.hpp"

namespace finecount {

Tensor::Tensor(int channels, int height, int width, double fill)
    : c_(channels), h_(height), w_(width) {
  if (channels < 0 || height < 0 || width < 0) throw DataError("negative tensor dimension");
  v_.assign(static_cast<std::size_t>(channels) * height * width, fill);
}

double Tensor::sum() const { return std::accumulate(v_.begin(), v_.end(), 0.0); }

double Tensor::channel_sum(int c) const {
  auto ch = channel(c);
  return std::accumulate(ch.begin(), ch.end(), 0.0);
}

void Tensor::fill(double value) { std::fill(v_.begin(), v_.end(), value); }

Tensor Tensor::slice_channels(int first, int count) const {
  if (first < 0 || count < 0 || first + count > c_) throw DataError("channel slice out of range");
  Tensor out(count, h_, w_);
  std::copy_n(v_.begin() + first * plane(), count * plane(), out.v_.begin());
  return out;
}

Tensor Tensor::crop(int y0, int x0, int height, int width) const {
  Tensor out(c_, height, width);
  for (int c = 0; c < c_; ++c)
    for (int y = 0; y < height; ++y) {
      int sy = y0 + y;
      if (sy < 0 || sy >= h_) continue;
      for (int x = 0; x < width; ++x) {
        int sx = x0 + x;
        if (sx < 0 || sx >= w_) continue;
        out(c, y, x) = (*this)(c, sy, sx);
      }
    }
  return out;
}

Tensor Tensor::pad_to(int height, int width) const {
  if (height == h_ && width == w_) return *this;
  return crop(0, 0, height, width);
}

Tensor stack_channels(std::span<const Tensor> maps) {
  if (maps.empty()) return {};
  int h = maps[0].height(), w = maps[0].width();
  int total = 0;
  for (const auto& m : maps) {
    if (m.height() != h || m.width() != w) throw DataError("stack_channels: dimension mismatch");
    total += m.channels();
  }
  Tensor out(total, h, w);
  std::size_t off = 0;
  for (const auto& m : maps) {
    std::copy(m.data().begin(), m.data().end(), out.data().begin() + off);
    off += m.size();
  }
  return out;
}

Tensor clamp_min(const Tensor& t, double lo) {
  Tensor out = t;
  for (auto& v : out.data()) v = std::max(v, lo);
  return out;
}

}  // namespace finecount
