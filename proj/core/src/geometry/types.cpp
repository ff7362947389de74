#include "polydeform/geometry/types.hpp"

#include <algorithm>
#include <string>

#include "polydeform/error.hpp"

namespace polydeform::geometry {

BinaryMask::BinaryMask(int height, int width)
    : BinaryMask(height, width,
                 std::vector<std::uint8_t>(static_cast<std::size_t>(std::max(height, 0)) *
                                           static_cast<std::size_t>(std::max(width, 0)))) {}

BinaryMask::BinaryMask(int height, int width, std::vector<std::uint8_t> data)
    : height_(height), width_(width), data_(std::move(data)) {
  if (height < 1 || width < 1) {
    throw ShapeError("BinaryMask: dimensions must be >= 1, got " + std::to_string(height) + "x" +
                     std::to_string(width));
  }
  if (data_.size() != static_cast<std::size_t>(height) * static_cast<std::size_t>(width)) {
    throw ShapeError("BinaryMask: data length " + std::to_string(data_.size()) +
                     " does not match " + std::to_string(height) + "x" + std::to_string(width));
  }
  for (auto& v : data_) v = v ? 1 : 0;
}

std::size_t BinaryMask::count() const {
  return static_cast<std::size_t>(std::count(data_.begin(), data_.end(), std::uint8_t{1}));
}

Polygon::Polygon(std::vector<Vec2> vertices) : vertices_(std::move(vertices)) {
  if (vertices_.size() < 3) {
    throw ContractError("Polygon: need at least 3 vertices, got " +
                        std::to_string(vertices_.size()));
  }
  for (const auto& v : vertices_) {
    if (!std::isfinite(v.x) || !std::isfinite(v.y)) {
      throw NumericalError("Polygon: non-finite vertex coordinate");
    }
  }
}

double Polygon::perimeter() const {
  double total = 0.0;
  for (std::size_t i = 0; i < vertices_.size(); ++i) {
    total += distance(vertices_[i], vertices_[(i + 1) % vertices_.size()]);
  }
  return total;
}

double Polygon::signed_area() const {
  double acc = 0.0;
  for (std::size_t i = 0; i < vertices_.size(); ++i) {
    const Vec2& a = vertices_[i];
    const Vec2& b = vertices_[(i + 1) % vertices_.size()];
    acc += a.x * b.y - b.x * a.y;
  }
  return 0.5 * acc;
}

}  // namespace polydeform::geometry
