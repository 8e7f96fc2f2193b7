#include "finecount/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstring>

#include "finecount/errors.hpp"

namespace finecount {

namespace {

class PngImage {
 public:
  PngImage() {
    std::memset(&image_, 0, sizeof(image_));
    image_.version = PNG_IMAGE_VERSION;
  }
  ~PngImage() { png_image_free(&image_); }
  PngImage(const PngImage&) = delete;
  PngImage& operator=(const PngImage&) = delete;
  png_image* get() { return &image_; }

 private:
  png_image image_;
};

}  // namespace

Tensor read_png(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw DataError("image not found: " + path.string());
  PngImage png;
  if (!png_image_begin_read_from_file(png.get(), path.c_str()))
    throw DataError("cannot decode PNG " + path.string() + ": " + png.get()->message);
  bool color = (png.get()->format & PNG_FORMAT_FLAG_COLOR) != 0;
  png.get()->format = color ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  int h = static_cast<int>(png.get()->height);
  int w = static_cast<int>(png.get()->width);
  int c = color ? 3 : 1;
  std::vector<png_byte> buffer(PNG_IMAGE_SIZE(*png.get()));
  if (!png_image_finish_read(png.get(), nullptr, buffer.data(), 0, nullptr))
    throw DataError("cannot decode PNG " + path.string() + ": " + png.get()->message);
  Tensor out(c, h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int ch = 0; ch < c; ++ch)
        out(ch, y, x) = buffer[(static_cast<std::size_t>(y) * w + x) * c + ch] / 255.0;
  return out;
}

void write_png(const std::filesystem::path& path, const Tensor& image) {
  int c = image.channels();
  if (c != 1 && c != 3) throw DataError("write_png expects 1 or 3 channels");
  std::vector<png_byte> buffer(image.size());
  for (int y = 0; y < image.height(); ++y)
    for (int x = 0; x < image.width(); ++x)
      for (int ch = 0; ch < c; ++ch) {
        double v = std::clamp(image(ch, y, x), 0.0, 1.0);
        buffer[(static_cast<std::size_t>(y) * image.width() + x) * c + ch] =
            static_cast<png_byte>(std::lround(v * 255.0));
      }
  PngImage png;
  png.get()->width = image.width();
  png.get()->height = image.height();
  png.get()->format = c == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  if (!png_image_write_to_file(png.get(), path.c_str(), 0, buffer.data(), 0, nullptr))
    throw DataError("cannot write PNG " + path.string());
}

void write_png(const std::filesystem::path& path, const RgbImage& image) {
  PngImage png;
  png.get()->width = image.width;
  png.get()->height = image.height;
  png.get()->format = PNG_FORMAT_RGB;
  if (!png_image_write_to_file(png.get(), path.c_str(), 0, image.pixels.data(), 0, nullptr))
    throw DataError("cannot write PNG " + path.string());
}

Tensor resize_bilinear(const Tensor& image, int height, int width) {
  if (height < 1 || width < 1) throw DataError("resize target must be at least 1x1");
  if (image.height() == height && image.width() == width) return image;
  Tensor out(image.channels(), height, width);
  double sy = static_cast<double>(image.height()) / height;
  double sx = static_cast<double>(image.width()) / width;
  for (int y = 0; y < height; ++y) {
    double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, image.height() - 1.0);
    int y0 = static_cast<int>(fy);
    int y1 = std::min(y0 + 1, image.height() - 1);
    double ty = fy - y0;
    for (int x = 0; x < width; ++x) {
      double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, image.width() - 1.0);
      int x0 = static_cast<int>(fx);
      int x1 = std::min(x0 + 1, image.width() - 1);
      double tx = fx - x0;
      for (int c = 0; c < image.channels(); ++c) {
        double top = image(c, y0, x0) * (1 - tx) + image(c, y0, x1) * tx;
        double bot = image(c, y1, x0) * (1 - tx) + image(c, y1, x1) * tx;
        out(c, y, x) = top * (1 - ty) + bot * ty;
      }
    }
  }
  return out;
}

}  // namespace finecount
