#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace finecount {

/// Dense channel-major (C x H x W) grid of doubles.
///
/// Used for images, density maps, segmentation maps, feature maps and
/// parameters alike. Element (c, y, x) lives at ((c * H) + y) * W + x.
class Tensor {
 public:
  Tensor() = default;
  Tensor(int channels, int height, int width, double fill = 0.0);

  int channels() const { return c_; }
  int height() const { return h_; }
  int width() const { return w_; }
  std::size_t size() const { return v_.size(); }
  std::size_t plane() const { return static_cast<std::size_t>(h_) * w_; }
  bool empty() const { return v_.empty(); }

  double& operator()(int c, int y, int x) { return v_[(static_cast<std::size_t>(c) * h_ + y) * w_ + x]; }
  double operator()(int c, int y, int x) const { return v_[(static_cast<std::size_t>(c) * h_ + y) * w_ + x]; }
  double& operator[](std::size_t i) { return v_[i]; }
  double operator[](std::size_t i) const { return v_[i]; }

  std::span<double> data() { return v_; }
  std::span<const double> data() const { return v_; }
  std::span<double> channel(int c) { return std::span<double>(v_).subspan(c * plane(), plane()); }
  std::span<const double> channel(int c) const {
    return std::span<const double>(v_).subspan(c * plane(), plane());
  }

  bool same_shape(const Tensor& o) const { return c_ == o.c_ && h_ == o.h_ && w_ == o.w_; }
  bool same_plane(const Tensor& o) const { return h_ == o.h_ && w_ == o.w_; }

  double sum() const;
  double channel_sum(int c) const;
  void fill(double value);

  /// Copy of channels [first, first + count).
  Tensor slice_channels(int first, int count) const;
  /// Sub-window of every channel; out-of-range cells read as zero.
  Tensor crop(int y0, int x0, int height, int width) const;
  /// Zero-pad on the bottom/right up to the given size.
  Tensor pad_to(int height, int width) const;

  bool operator==(const Tensor& o) const { return same_shape(o) && v_ == o.v_; }

 private:
  int c_ = 0;
  int h_ = 0;
  int w_ = 0;
  std::vector<double> v_;
};

Tensor stack_channels(std::span<const Tensor> maps);
Tensor clamp_min(const Tensor& t, double lo);

}  // namespace finecount
