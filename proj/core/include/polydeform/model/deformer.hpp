#pragma once

#include <cstddef>
#include <vector>

#include "polydeform/autodiff/graph.hpp"
#include "polydeform/autodiff/parameters.hpp"
#include "polydeform/autodiff/tensor.hpp"
#include "polydeform/model/config.hpp"

namespace polydeform::model {

using autodiff::Graph;
using autodiff::ParameterSet;
using autodiff::Tensor;

/// Attention weights captured during a forward pass: weights[layer][head]
/// is an [N,N] row-stochastic matrix.
template <typename T>
struct AttentionTrace {
  std::vector<std::vector<Tensor<T>>> weights;
};

/// Self-attention stack over vertex embeddings with an offset head.
///
/// Each block: a = softmax(Q(x) K(x)^T / sqrt(d_k)) V(x), then
/// x = LN(x + a), x = LN(x + FFN(x)). The output head's last layer starts at
/// zero, so a fresh model predicts zero offsets.
template <typename T>
class Deformer {
 public:
  /// Registers parameters under "deformer.".
  Deformer(const DeformerConfig& cfg, std::size_t in_channels, ParameterSet<T>& params);

  /// z [N, in_channels] -> x [N, d_model]
  Tensor<T> project(Graph<T>& g, const Tensor<T>& z) const;
  Tensor<T> attention_block(Graph<T>& g, std::size_t layer, const Tensor<T>& x,
                            AttentionTrace<T>* trace = nullptr) const;
  /// z [N, in_channels] -> offsets [N, 2]
  Tensor<T> offsets(Graph<T>& g, const Tensor<T>& z, AttentionTrace<T>* trace = nullptr) const;

  const DeformerConfig& config() const { return cfg_; }

 private:
  struct Head {
    Tensor<T> q, k, v;
  };
  struct Block {
    std::vector<Head> heads;
    Tensor<T> ln1_gamma, ln1_beta;
    Tensor<T> ffn0_w, ffn0_b, ffn1_w, ffn1_b;
    Tensor<T> ln2_gamma, ln2_beta;
  };

  DeformerConfig cfg_;
  Tensor<T> in_w_, in_b_;
  std::vector<Block> blocks_;
  Tensor<T> head0_w_, head0_b_, head1_w_, head1_b_;
};

}  // namespace polydeform::model
