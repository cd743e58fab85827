#include "mvtri/image.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace mvtri {

Image Image::constant(int h, int w, double r, double g, double b) {
  Image img(h, w);
  for (int64_t p = 0; p < img.pixel_count(); ++p) {
    img.rgb[3 * p + 0] = r;
    img.rgb[3 * p + 1] = g;
    img.rgb[3 * p + 2] = b;
  }
  return img;
}

Image Image::crop(int x0, int y0, int w, int h) const {
  if (x0 < 0 || y0 < 0 || x0 + w > width || y0 + h > height)
    throw std::out_of_range("image crop outside bounds");
  Image out(h, w);
  for (int y = 0; y < h; ++y)
    std::copy(px(y0 + y, x0), px(y0 + y, x0) + 3 * w, out.px(y, 0));
  return out;
}

ImageU8 quantize(const Image& img) {
  ImageU8 out;
  out.height = img.height;
  out.width = img.width;
  out.rgb.resize(img.rgb.size());
  for (size_t i = 0; i < img.rgb.size(); ++i) {
    double v = std::clamp(img.rgb[i], 0.0, 1.0);
    out.rgb[i] = static_cast<uint8_t>(std::lround(v * 255.0));
  }
  return out;
}

Image dequantize(const ImageU8& img) {
  Image out(img.height, img.width);
  for (size_t i = 0; i < img.rgb.size(); ++i) out.rgb[i] = img.rgb[i] / 255.0;
  return out;
}

Image to_diffusion_space(const Image& img) {
  Image out = img;
  for (double& v : out.rgb) v = 2.0 * v - 1.0;
  return out;
}

Image to_render_space(const Image& img) {
  Image out = img;
  for (double& v : out.rgb) v = 0.5 * (v + 1.0);
  return out;
}

double image_mse(const Image& a, const Image& b) {
  if (!a.same_shape(b)) throw std::invalid_argument("image_mse: shape mismatch");
  double acc = 0.0;
  for (size_t i = 0; i < a.rgb.size(); ++i) {
    double d = a.rgb[i] - b.rgb[i];
    acc += d * d;
  }
  return acc / static_cast<double>(a.rgb.size());
}

}  // namespace mvtri
