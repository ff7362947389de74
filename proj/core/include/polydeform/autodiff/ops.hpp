#pragma once

// Differentiable primitives. Each op computes its forward value eagerly and,
// when any input requires gradients, records a backward closure on the
// graph. Shapes must match exactly; the only broadcast is scalar-with-tensor
// (add_scalar, scale). Shape mismatches throw ShapeError naming the op.

#include <cstddef>
#include <vector>

#include "polydeform/autodiff/graph.hpp"
#include "polydeform/autodiff/tensor.hpp"

namespace polydeform::autodiff::ops {

template <typename T> Tensor<T> add(Graph<T>& g, const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> sub(Graph<T>& g, const Tensor<T>& a, const Tensor<T>& b);
/// Elementwise product.
template <typename T> Tensor<T> mul(Graph<T>& g, const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> scale(Graph<T>& g, const Tensor<T>& a, T factor);
/// x + s where s has exactly one element.
template <typename T> Tensor<T> add_scalar(Graph<T>& g, const Tensor<T>& x, const Tensor<T>& s);

template <typename T> Tensor<T> relu(Graph<T>& g, const Tensor<T>& x);
/// sqrt(x + eps), elementwise.
template <typename T> Tensor<T> sqrt_eps(Graph<T>& g, const Tensor<T>& x, T eps = T(1e-8));
/// Elementwise clamp; gradient is zero where the value was clipped.
template <typename T> Tensor<T> clamp(Graph<T>& g, const Tensor<T>& x, T lo, T hi);

/// Reductions to a shape-[1] tensor.
template <typename T> Tensor<T> sum(Graph<T>& g, const Tensor<T>& x);
template <typename T> Tensor<T> mean(Graph<T>& g, const Tensor<T>& x);

/// [N,K] x [K,M] -> [N,M]
template <typename T> Tensor<T> matmul(Graph<T>& g, const Tensor<T>& a, const Tensor<T>& b);
/// [N,K] x [M,K]^T -> [N,M]
template <typename T> Tensor<T> matmul_nt(Graph<T>& g, const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> transpose(Graph<T>& g, const Tensor<T>& a);
/// x [N,I], weight [O,I], bias [O] (may be undefined) -> [N,O]
template <typename T>
Tensor<T> linear(Graph<T>& g, const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias);

/// Row-wise softmax of a [N,M] tensor.
template <typename T> Tensor<T> softmax_rows(Graph<T>& g, const Tensor<T>& x);
/// Normalizes each row of x [N,D], then applies gamma [D] and beta [D].
template <typename T>
Tensor<T> layer_norm(Graph<T>& g, const Tensor<T>& x, const Tensor<T>& gamma,
                     const Tensor<T>& beta, T eps = T(1e-5));

/// x [C,H,W], weight [O,C,k,k], bias [O] (may be undefined), zero padding.
template <typename T>
Tensor<T> conv2d(Graph<T>& g, const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias,
                 int stride, int padding);

/// Bilinear resize of x [C,H,W] to [C,out_h,out_w] with pixel-center
/// alignment (half-pixel offsets, border clamped).
template <typename T>
Tensor<T> upsample_bilinear(Graph<T>& g, const Tensor<T>& x, std::size_t out_h, std::size_t out_w);

/// Concatenation along axis 0; trailing dimensions must match.
template <typename T> Tensor<T> concat(Graph<T>& g, const std::vector<Tensor<T>>& parts);

/// Bilinear point sampling. fmap [C,H,W]; points [N,2] holding (x, y) in
/// the map's pixel frame (center of pixel (i,j) at (j+0.5, i+0.5)).
/// Coordinates outside the centers' hull are clamped to the border; the
/// gradient w.r.t. a clamped coordinate is zero. Returns [N,C].
template <typename T>
Tensor<T> grid_sample(Graph<T>& g, const Tensor<T>& fmap, const Tensor<T>& points);

/// Closed-polygon edge lengths: vertices [N,2] -> [N], edge k from vertex k
/// to vertex (k+1) mod N. Zero-length edges get zero gradient.
template <typename T> Tensor<T> edge_lengths(Graph<T>& g, const Tensor<T>& vertices);

}  // namespace polydeform::autodiff::ops
