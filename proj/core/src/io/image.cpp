#include "polydeform/io/image.hpp"

#include <algorithm>
#include <cmath>

#include "polydeform/error.hpp"

namespace polydeform {

Image::Image(int h, int w, int c) : height(h), width(w), channels(c) {
  if (h < 1 || w < 1 || c < 1) throw ShapeError("Image: dimensions must be positive");
  data.assign(static_cast<std::size_t>(h) * w * c, 0.0f);
}

float Image::sample(double x, double y, int ch) const {
  const double u = std::clamp(x - 0.5, 0.0, static_cast<double>(width - 1));
  const double v = std::clamp(y - 0.5, 0.0, static_cast<double>(height - 1));
  const int c0 = static_cast<int>(std::floor(u));
  const int r0 = static_cast<int>(std::floor(v));
  const int c1 = std::min(c0 + 1, width - 1);
  const int r1 = std::min(r0 + 1, height - 1);
  const double fu = u - c0, fv = v - r0;
  const double top = (1 - fu) * at(r0, c0, ch) + fu * at(r0, c1, ch);
  const double bottom = (1 - fu) * at(r1, c0, ch) + fu * at(r1, c1, ch);
  return static_cast<float>((1 - fv) * top + fv * bottom);
}

void Image::quantize_8bit() {
  for (auto& v : data) v = std::round(std::clamp(v, 0.0f, 1.0f) * 255.0f) / 255.0f;
}

Image crop_resize(const Image& image, const geometry::Box& box, int out_h, int out_w) {
  Image out(out_h, out_w, image.channels);
  const double sx = box.width() / out_w;
  const double sy = box.height() / out_h;
  for (int r = 0; r < out_h; ++r) {
    const double y = box.y0 + (r + 0.5) * sy;
    for (int c = 0; c < out_w; ++c) {
      const double x = box.x0 + (c + 0.5) * sx;
      for (int ch = 0; ch < image.channels; ++ch) out.at(r, c, ch) = image.sample(x, y, ch);
    }
  }
  return out;
}

geometry::BinaryMask crop_resize_mask(const geometry::BinaryMask& mask, const geometry::Box& box,
                                      int out_h, int out_w) {
  geometry::BinaryMask out(out_h, out_w);
  const double sx = box.width() / out_w;
  const double sy = box.height() / out_h;
  for (int r = 0; r < out_h; ++r) {
    const int src_r = static_cast<int>(std::floor(box.y0 + (r + 0.5) * sy));
    for (int c = 0; c < out_w; ++c) {
      const int src_c = static_cast<int>(std::floor(box.x0 + (c + 0.5) * sx));
      out.set(r, c, mask.get_or_false(src_r, src_c));
    }
  }
  return out;
}

Image flip_horizontal(const Image& image) {
  Image out = image;
  for (int r = 0; r < image.height; ++r) {
    for (int c = 0; c < image.width; ++c) {
      for (int ch = 0; ch < image.channels; ++ch) {
        out.at(r, c, ch) = image.at(r, image.width - 1 - c, ch);
      }
    }
  }
  return out;
}

}  // namespace polydeform
