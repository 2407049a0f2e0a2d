#pragma once

#include "translution/geometry.hpp"
#include "translution/ops.hpp"
#include "translution/tensor.hpp"

namespace translution {

/// Shared q/k/v projections. Biases are optional (undefined tensors mean no
/// bias); all three matrices share C and C'.
template <typename T>
struct ProjectionSet {
  Tensor<T> wq, wk, wv;
  Tensor<T> bq, bk, bv;

  std::size_t in_dim() const { return wq.extent(0); }
  std::size_t out_dim() const { return wq.extent(1); }
};

template <typename T>
struct PosEmbedTable {
  Tensor<T> table;  // [N_max, C], learnable
};

template <typename T>
Tensor<T> project(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b) {
  Tensor<T> y = matmul(x, w);
  return b.defined() ? add_rowvec(y, b) : y;
}

/// out[i] = x[i] + table[i]; the table must cover the sequence. With batch > 1
/// x is [B*N, C] and each sample gets the same table prefix.
template <typename T>
Tensor<T> absolute_position_embed(const Tensor<T>& x, const PosEmbedTable<T>& table,
                                  std::size_t batch = 1);

/// Multi-head scaled dot-product attention over [B*N, C] tokens; per-head
/// width C'/heads, optional causal mask.
template <typename T>
Tensor<T> self_attention(const Tensor<T>& f, const ProjectionSet<T>& proj, std::size_t heads,
                         bool causal, std::size_t batch = 1);

/// Same-size 2D convolution with zero padding; fmap: [H,W,C],
/// kernel: [h,w,C,C'], odd extents.
template <typename T>
Tensor<T> conv2d(const Tensor<T>& fmap, const Tensor<T>& kernel);

}  // namespace translution
