#pragma once

#include <vector>

#include "polydeform/geometry/types.hpp"

namespace polydeform::geometry {

/// Suzuki–Abe border following on 8-connectivity. Returns the outer border
/// of every foreground component in raster-scan order of discovery; hole
/// borders are followed (so labelling stays correct) but not returned.
std::vector<PixelChain> trace_outer_borders(const BinaryMask& mask);

/// Closed arc length of a pixel chain measured through pixel centers.
double chain_length(const PixelChain& chain);

/// Picks chain points roughly `spacing` apart along the contour, starting at
/// chain[0]. Never returns fewer than 3 vertices.
///
/// Throws DegenerateError when the chain has fewer than 3 points and
/// ContractError when spacing < 1.
Polygon resample_contour(const PixelChain& chain, double spacing);

/// One polygon per outer border. Contours shorter than 3*spacing keep every
/// contour pixel; contours with fewer than 3 distinct pixels are dropped.
std::vector<Polygon> extract_polygons(const BinaryMask& mask, double spacing);

}  // namespace polydeform::geometry
