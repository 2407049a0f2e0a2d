#pragma once

#include "translution/attention.hpp"
#include "translution/geometry.hpp"

namespace translution {

/// Learnable relative positional vectors, one row per offset.
template <typename T>
struct RelVectorTable {
  Tensor<T> r;  // [(2H-1)(2W-1), C']
};

/// Learnable relative positional scalars.
template <typename T>
struct RelScalarTable {
  Tensor<T> b;  // [(2H-1)(2W-1)]
};

/// Gated positional attention state: per-head gate, an embedding vector and a
/// table of distance embeddings indexed by bucketed squared grid distance.
template <typename T>
struct GateState {
  Tensor<T> lambda;  // [heads]
  Tensor<T> w;       // [E]
  Tensor<T> r_norm;  // [distance buckets, E]
};

/// Index tables whose q_index holds the bucket of ||delta||^2 per pair, plus
/// the bucket count. Buckets enumerate the distinct squared distances of the
/// offset box in increasing order.
struct DistanceBuckets {
  PairTables tables;
  std::size_t count = 0;
};

DistanceBuckets distance_buckets(const Grid2D& grid);
DistanceBuckets distance_buckets_1d(std::size_t n);

/// k_j = f_j . Wk + r_delta; the rest is standard attention.
template <typename T>
Tensor<T> attn_relative_key_vector(const Tensor<T>& f, const ProjectionSet<T>& proj,
                                   const RelVectorTable<T>& r, const Grid2D& grid,
                                   std::size_t heads, std::size_t batch = 1);

/// v_j = f_j . Wv + r_delta; values become pair-dependent through delta.
template <typename T>
Tensor<T> attn_relative_value_vector(const Tensor<T>& f, const ProjectionSet<T>& proj,
                                     const RelVectorTable<T>& r, const Grid2D& grid,
                                     std::size_t heads, std::size_t batch = 1);

/// a_{i,j} = q.k^T / sqrt(d_h) + b_delta.
template <typename T>
Tensor<T> attn_relative_scalar_bias(const Tensor<T>& f, const ProjectionSet<T>& proj,
                                    const RelScalarTable<T>& b, const Grid2D& grid,
                                    std::size_t heads, std::size_t batch = 1);

/// Content softmax alpha, position softmax beta over w . r_{||delta||},
/// per-head gated mix, renormalized, then the weighted sum.
template <typename T>
Tensor<T> attn_gated_positional(const Tensor<T>& f, const ProjectionSet<T>& proj,
                                const GateState<T>& gate, const Grid2D& grid, std::size_t heads,
                                std::size_t batch = 1);

/// Rotations applied to q and k before the dot product; grid mode splits each
/// head's pairs between the row and column indices.
template <typename T>
Tensor<T> attn_rotary(const Tensor<T>& f, const ProjectionSet<T>& proj, const Grid2D& grid,
                      std::size_t heads, std::size_t batch = 1);

/// 1D rotary over a plain sequence (optionally causal, for language models).
template <typename T>
Tensor<T> attn_rotary_seq(const Tensor<T>& f, const ProjectionSet<T>& proj, std::size_t n,
                          std::size_t heads, bool causal, std::size_t batch = 1);

}  // namespace translution
