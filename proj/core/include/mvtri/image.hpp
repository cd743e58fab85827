#pragma once

#include <cstdint>
#include <vector>

namespace mvtri {

// Row-major H x W x 3 image. Values live in [0,1] render space except where
// a function documents the [-1,1] diffusion space.
struct Image {
  int height = 0, width = 0;
  std::vector<double> rgb;

  Image() = default;
  Image(int h, int w) : height(h), width(w), rgb(static_cast<size_t>(h) * w * 3, 0.0) {}
  static Image constant(int h, int w, double r, double g, double b);

  double* px(int y, int x) { return rgb.data() + 3 * (static_cast<size_t>(y) * width + x); }
  const double* px(int y, int x) const {
    return rgb.data() + 3 * (static_cast<size_t>(y) * width + x);
  }
  int64_t pixel_count() const { return static_cast<int64_t>(height) * width; }
  bool same_shape(const Image& o) const { return height == o.height && width == o.width; }

  Image crop(int x0, int y0, int w, int h) const;
};

// 8-bit quantized image as stored on disk.
struct ImageU8 {
  int height = 0, width = 0;
  std::vector<uint8_t> rgb;
};

ImageU8 quantize(const Image& img);
Image dequantize(const ImageU8& img);

// [0,1] render space <-> [-1,1] diffusion space
Image to_diffusion_space(const Image& img);
Image to_render_space(const Image& img);

double image_mse(const Image& a, const Image& b);

}  // namespace mvtri
