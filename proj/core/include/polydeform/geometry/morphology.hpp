#pragma once

#include <vector>

#include "polydeform/geometry/types.hpp"

namespace polydeform::geometry {

/// Exact squared Euclidean distance from every pixel to the nearest pixel
/// where `seeds` is set (Felzenszwalb–Huttenlocher). Pixels are infinitely
/// far when there are no seeds.
std::vector<double> squared_distance_transform(const BinaryMask& seeds);

/// Foreground pixels with a 4-neighbour in the background; the area outside
/// the image counts as background.
BinaryMask boundary_pixels(const BinaryMask& mask);

/// Morphology with a (2r+1) x (2r+1) square structuring element.
BinaryMask dilate_square(const BinaryMask& mask, int radius);
BinaryMask erode_square(const BinaryMask& mask, int radius);

/// 8-connected component labels: 0 for background, 1..count otherwise, in
/// raster order of first appearance.
struct Components {
  std::vector<int> labels;
  int count = 0;
};
Components connected_components(const BinaryMask& mask);

BinaryMask mask_and(const BinaryMask& a, const BinaryMask& b);
BinaryMask mask_or(const BinaryMask& a, const BinaryMask& b);
BinaryMask mask_and_not(const BinaryMask& a, const BinaryMask& b);

}  // namespace polydeform::geometry
