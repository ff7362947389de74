#include "polydeform/model/deformer.hpp"

#include <cmath>
#include <string>

#include "polydeform/autodiff/ops.hpp"
#include "polydeform/error.hpp"

namespace polydeform::model {

namespace ops = autodiff::ops;

template <typename T>
Deformer<T>::Deformer(const DeformerConfig& cfg, std::size_t in_channels, ParameterSet<T>& params) : cfg_(cfg) {
  const auto dm = static_cast<std::size_t>(cfg.d_model);
  const auto heads = static_cast<std::size_t>(cfg.heads);
  const std::size_t dk = static_cast<std::size_t>(cfg.d_k) / heads;
  const std::size_t dv = dm / heads;
  const auto ffn = static_cast<std::size_t>(cfg.ffn_width);
  const auto hidden = static_cast<std::size_t>(cfg.head_hidden);

  in_w_ = params.add("deformer.input.weight", Tensor<T>::zeros({dm, in_channels}));
  in_b_ = params.add("deformer.input.bias", Tensor<T>::zeros({dm}));
  for (int b = 0; b < cfg.layers; ++b) {
    const std::string base = "deformer.block" + std::to_string(b);
    Block blk;
    for (std::size_t h = 0; h < heads; ++h) {
      const std::string hb = base + ".head" + std::to_string(h);
      blk.heads.push_back({params.add(hb + ".query.weight", Tensor<T>::zeros({dk, dm})),
                           params.add(hb + ".key.weight", Tensor<T>::zeros({dk, dm})),
                           params.add(hb + ".value.weight", Tensor<T>::zeros({dv, dm}))});
    }
    blk.ln1_gamma = params.add(base + ".norm1.gamma", Tensor<T>::full({dm}, T{1}));
    blk.ln1_beta = params.add(base + ".norm1.beta", Tensor<T>::zeros({dm}));
    blk.ffn0_w = params.add(base + ".ffn0.weight", Tensor<T>::zeros({ffn, dm}));
    blk.ffn0_b = params.add(base + ".ffn0.bias", Tensor<T>::zeros({ffn}));
    blk.ffn1_w = params.add(base + ".ffn1.weight", Tensor<T>::zeros({dm, ffn}));
    blk.ffn1_b = params.add(base + ".ffn1.bias", Tensor<T>::zeros({dm}));
    blk.ln2_gamma = params.add(base + ".norm2.gamma", Tensor<T>::full({dm}, T{1}));
    blk.ln2_beta = params.add(base + ".norm2.beta", Tensor<T>::zeros({dm}));
    blocks_.push_back(std::move(blk));
  }
  head0_w_ = params.add("deformer.head.hidden.weight", Tensor<T>::zeros({hidden, dm}));
  head0_b_ = params.add("deformer.head.hidden.bias", Tensor<T>::zeros({hidden}));
  head1_w_ = params.add("deformer.head.out.weight", Tensor<T>::zeros({2, hidden}));
  head1_b_ = params.add("deformer.head.out.bias", Tensor<T>::zeros({2}));
}

template <typename T>
Tensor<T> Deformer<T>::project(Graph<T>& g, const Tensor<T>& z) const {
  if (z.rank() != 2 || z.dim(1) != in_w_.dim(1)) {
    throw ShapeError("deformer: embeddings have shape " + autodiff::shape_string(z.shape()) + ", expected [N," +
                     std::to_string(in_w_.dim(1)) + "]");
  }
  return ops::linear(g, z, in_w_, in_b_);
}

template <typename T>
Tensor<T> Deformer<T>::attention_block(Graph<T>& g, std::size_t layer, const Tensor<T>& x,
                                       AttentionTrace<T>* trace) const {
  const Block& blk = blocks_.at(layer);
  const Tensor<T> none;
  std::vector<Tensor<T>> head_out;
  std::vector<Tensor<T>> weights;
  for (const Head& h : blk.heads) {
    auto q = ops::linear(g, x, h.q, none);
    auto k = ops::linear(g, x, h.k, none);
    auto v = ops::linear(g, x, h.v, none);
    const T inv_sqrt_dk = T{1} / std::sqrt(static_cast<T>(q.dim(1)));
    auto w = ops::softmax_rows(g, ops::scale(g, ops::matmul_nt(g, q, k), inv_sqrt_dk));
    weights.push_back(w);
    head_out.push_back(ops::matmul(g, w, v));
  }
  Tensor<T> att;
  if (head_out.size() == 1) {
    att = head_out[0];
  } else {
    std::vector<Tensor<T>> cols;
    for (auto& h : head_out) cols.push_back(ops::transpose(g, h));
    att = ops::transpose(g, ops::concat(g, cols));
  }
  if (trace != nullptr) {
    if (trace->weights.size() <= layer) trace->weights.resize(layer + 1);
    trace->weights[layer] = std::move(weights);
  }
  auto y = ops::layer_norm(g, ops::add(g, x, att), blk.ln1_gamma, blk.ln1_beta);
  auto f = ops::linear(g, ops::relu(g, ops::linear(g, y, blk.ffn0_w, blk.ffn0_b)), blk.ffn1_w, blk.ffn1_b);
  return ops::layer_norm(g, ops::add(g, y, f), blk.ln2_gamma, blk.ln2_beta);
}

template <typename T>
Tensor<T> Deformer<T>::offsets(Graph<T>& g, const Tensor<T>& z, AttentionTrace<T>* trace) const {
  auto x = project(g, z);
  for (std::size_t b = 0; b < blocks_.size(); ++b) x = attention_block(g, b, x, trace);
  auto h = ops::relu(g, ops::linear(g, x, head0_w_, head0_b_));
  auto out = ops::linear(g, h, head1_w_, head1_b_);
  if (cfg_.offset_scale != 1.0f) out = ops::scale(g, out, static_cast<T>(cfg_.offset_scale));
  return out;
}

template class Deformer<float>;
template class Deformer<double>;

}  // namespace polydeform::model
