#pragma once

// Core geometric value types. Pixel (row i, col j) has its center at
// (x = j + 0.5, y = i + 0.5); every continuous coordinate in the library
// lives in that frame.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace polydeform::geometry {

struct Vec2 {
  double x = 0.0;
  double y = 0.0;

  friend Vec2 operator+(Vec2 a, Vec2 b) { return {a.x + b.x, a.y + b.y}; }
  friend Vec2 operator-(Vec2 a, Vec2 b) { return {a.x - b.x, a.y - b.y}; }
  friend Vec2 operator*(double s, Vec2 a) { return {s * a.x, s * a.y}; }
  friend bool operator==(Vec2 a, Vec2 b) = default;
};

inline double norm(Vec2 v) { return std::hypot(v.x, v.y); }
inline double squared_norm(Vec2 v) { return v.x * v.x + v.y * v.y; }
inline double distance(Vec2 a, Vec2 b) { return norm(a - b); }

struct Pixel {
  int row = 0;
  int col = 0;

  Vec2 center() const { return {col + 0.5, row + 0.5}; }
  friend bool operator==(Pixel a, Pixel b) = default;
};

/// Ordered pixel chain produced by border following; implicitly closed.
using PixelChain = std::vector<Pixel>;

class BinaryMask {
 public:
  BinaryMask(int height, int width);
  BinaryMask(int height, int width, std::vector<std::uint8_t> data);

  int height() const { return height_; }
  int width() const { return width_; }

  bool at(int row, int col) const {
    return data_[static_cast<std::size_t>(row) * width_ + col] != 0;
  }
  void set(int row, int col, bool value) {
    data_[static_cast<std::size_t>(row) * width_ + col] = value ? 1 : 0;
  }
  bool in_bounds(int row, int col) const {
    return row >= 0 && row < height_ && col >= 0 && col < width_;
  }
  /// Out-of-bounds reads as background.
  bool get_or_false(int row, int col) const { return in_bounds(row, col) && at(row, col); }

  std::size_t count() const;
  bool empty() const { return count() == 0; }

  std::span<const std::uint8_t> data() const { return data_; }

  friend bool operator==(const BinaryMask&, const BinaryMask&) = default;

 private:
  int height_;
  int width_;
  std::vector<std::uint8_t> data_;
};

/// Axis-aligned box in continuous pixel coordinates.
struct Box {
  double x0 = 0.0;
  double y0 = 0.0;
  double x1 = 1.0;
  double y1 = 1.0;

  double width() const { return x1 - x0; }
  double height() const { return y1 - y0; }
  double area() const { return width() * height(); }
  bool valid() const { return x1 > x0 && y1 > y0; }

  friend bool operator==(const Box&, const Box&) = default;
};

/// Closed polygon (last vertex connects to the first). At least three
/// vertices, all finite.
class Polygon {
 public:
  explicit Polygon(std::vector<Vec2> vertices);

  std::size_t size() const { return vertices_.size(); }
  const std::vector<Vec2>& vertices() const { return vertices_; }
  const Vec2& operator[](std::size_t i) const { return vertices_[i]; }

  /// Sum of closed-edge lengths.
  double perimeter() const;
  /// Shoelace area; sign follows vertex orientation.
  double signed_area() const;

  friend bool operator==(const Polygon&, const Polygon&) = default;

 private:
  std::vector<Vec2> vertices_;
};

/// Samples lying on polygon edges, used by the Chamfer loss.
struct EdgePixelSet {
  std::vector<Vec2> points;
};

}  // namespace polydeform::geometry
