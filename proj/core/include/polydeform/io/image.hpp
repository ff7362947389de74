#pragma once

#include <cstddef>
#include <vector>

#include "polydeform/geometry/types.hpp"

namespace polydeform {

/// Float image in [0, 1], interleaved HWC.
struct Image {
  int height = 0;
  int width = 0;
  int channels = 3;
  std::vector<float> data;

  Image() = default;
  Image(int h, int w, int c);

  float& at(int row, int col, int ch) {
    return data[(static_cast<std::size_t>(row) * width + col) * channels + ch];
  }
  float at(int row, int col, int ch) const {
    return data[(static_cast<std::size_t>(row) * width + col) * channels + ch];
  }

  /// Bilinear sample at continuous coordinates with border clamping.
  float sample(double x, double y, int ch) const;

  /// Rounds every value to the nearest 8-bit level.
  void quantize_8bit();

  friend bool operator==(const Image&, const Image&) = default;
};

/// Crops `box` out of `image` and resizes it to out_h x out_w by bilinear
/// sampling at the output pixel centers.
Image crop_resize(const Image& image, const geometry::Box& box, int out_h, int out_w);

/// Same mapping for a mask: output pixel is set when the input pixel under
/// its center is set.
geometry::BinaryMask crop_resize_mask(const geometry::BinaryMask& mask, const geometry::Box& box,
                                      int out_h, int out_w);

Image flip_horizontal(const Image& image);

}  // namespace polydeform
