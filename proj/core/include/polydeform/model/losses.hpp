#pragma once

#include <cstddef>
#include <vector>

#include <nlohmann/json.hpp>

#include "polydeform/autodiff/graph.hpp"
#include "polydeform/autodiff/tensor.hpp"
#include "polydeform/geometry/types.hpp"

namespace polydeform::model {

using autodiff::Graph;
using autodiff::Tensor;

struct LossConfig {
  double w_chamfer = 1.0;
  double w_std = 0.1;
  /// Samples whose nearest-neighbour distance is below this contribute
  /// nothing (0 disables masking).
  double chamfer_mask_px = 0.0;
  double edge_sample_step = 1.0;

  void validate() const;
};

nlohmann::json to_json(const LossConfig& cfg);
LossConfig loss_config_from_json(const nlohmann::json& j);

/// Uniform-grid nearest-neighbour index over 2-D points. Ties go to the
/// lowest point index; small sets and far queries use a linear scan.
class NearestIndex {
 public:
  struct Hit {
    std::size_t index = 0;
    double squared_distance = 0.0;
  };

  explicit NearestIndex(std::vector<geometry::Vec2> points);

  Hit nearest(geometry::Vec2 query) const;
  Hit nearest_brute(geometry::Vec2 query) const;
  std::size_t size() const { return points_.size(); }

 private:
  std::vector<geometry::Vec2> points_;
  double cell_ = 1.0;
  double x0_ = 0.0, y0_ = 0.0;
  int cols_ = 0, rows_ = 0;
  std::vector<std::size_t> cell_start_;
  std::vector<std::size_t> cell_items_;
};

/// Symmetric Chamfer distance between the edge samples of P (vertices [N,2],
/// differentiable) and of the fixed polygons Q. With masking enabled, terms
/// in either direction whose nearest distance is below chamfer_mask_px are
/// dropped (value and gradient).
///
/// Throws DegenerateError when all vertices of P coincide or Q is empty.
template <typename T>
Tensor<T> chamfer_loss(Graph<T>& g, const Tensor<T>& P, const std::vector<geometry::Polygon>& Q,
                       const LossConfig& cfg);

/// Population standard deviation of closed-edge lengths, sqrt(var + 1e-8).
template <typename T>
Tensor<T> std_loss(Graph<T>& g, const Tensor<T>& P);

template <typename T>
struct LossBreakdown {
  Tensor<T> total;
  double chamfer = 0.0;
  double std = 0.0;
  double weighted_chamfer = 0.0;
  double weighted_std = 0.0;
};

/// total = w_chamfer * chamfer + w_std * std. A zero weight removes its term
/// from the graph.
template <typename T>
LossBreakdown<T> total_loss(Graph<T>& g, const Tensor<T>& P, const std::vector<geometry::Polygon>& Q,
                            const LossConfig& cfg);

/// Untracked double-precision Chamfer distance between two polygon sets.
double chamfer_distance(const std::vector<geometry::Polygon>& P, const std::vector<geometry::Polygon>& Q,
                        const LossConfig& cfg);

}  // namespace polydeform::model
