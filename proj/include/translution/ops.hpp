#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "translution/autodiff.hpp"
#include "translution/tensor.hpp"

namespace translution {

// ---------------------------------------------------------------------------
// Elementwise and dense linear algebra.

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b);

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);

template <typename T>
Tensor<T> scale(const Tensor<T>& a, T s);

/// a: [R,C], v: [C]; adds v to every row.
template <typename T>
Tensor<T> add_rowvec(const Tensor<T>& a, const Tensor<T>& v);

/// c[i,j] = sum_t a[i,t] * b[t,j]
template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b);

template <typename T>
Tensor<T> reshape(const Tensor<T>& a, std::vector<std::size_t> shape);

template <typename T>
Tensor<T> slice_rows(const Tensor<T>& a, std::size_t start, std::size_t len);

template <typename T>
Tensor<T> concat_rows(const Tensor<T>& a, const Tensor<T>& b);

/// out[i] = table[idx[i]]; rows gathered from a [V,C] table.
template <typename T>
Tensor<T> gather_rows(const Tensor<T>& table, const std::vector<std::int64_t>& idx);

template <typename T>
Tensor<T> sum_all(const Tensor<T>& a);

template <typename T>
Tensor<T> gelu(const Tensor<T>& a);

/// Row softmax over the last axis with optional additive {0, -inf} mask of the
/// same shape. Masked entries come out exactly 0; a fully masked row is an
/// error ("empty attention row"). Uses row-max subtraction; -inf is clamped to
/// the most negative finite value before exponentiation.
template <typename T>
Tensor<T> softmax_rows(const Tensor<T>& a, const Tensor<T>* mask = nullptr);

/// a: [R,C]; per-row normalization to zero mean / unit variance, then affine.
template <typename T>
Tensor<T> layernorm(const Tensor<T>& a, const Tensor<T>& gain, const Tensor<T>& bias, T eps);

/// Mean over the batch of -log softmax(logits)[target].
template <typename T>
Tensor<T> cross_entropy_loss(const Tensor<T>& logits, const std::vector<std::int64_t>& targets);

// ---------------------------------------------------------------------------
// Attention-structured kernels. Token tensors are [B*N, C] row-major with the
// batch outermost; attention maps are [B, H, N, N].

/// Pairwise index tables driving offset-bank lookups. Entry -1 marks a masked
/// pair (no logit, no value). q_index is used for query and value lookups,
/// k_index for the (negated-offset) key lookup.
struct PairTables {
  std::size_t n = 0;  // tokens per sample
  std::vector<std::int32_t> q_index;  // [n*n]
  std::vector<std::int32_t> k_index;  // [n*n]
};

/// Scaled per-head content logits: q_i . k_j / (1/scale is sqrt(d_h) at call
/// sites). causal masks j > i with -inf.
template <typename T>
Tensor<T> attn_logits(const Tensor<T>& q, const Tensor<T>& k, std::size_t batch, std::size_t n,
                      std::size_t heads, T scale, bool causal);

/// alpha: [B,H,N,N], v: [B*N,C']; out_i = sum_j alpha[h,i,j] * v_j (head h
/// reads its C'/H column slice).
template <typename T>
Tensor<T> attn_apply(const Tensor<T>& alpha, const Tensor<T>& v, std::size_t batch, std::size_t n,
                     std::size_t heads);

/// Projects rows through every bank slice: out[k] = x . bank[k];
/// x: [R,C], bank: [K,C,D], out: [K,R,D].
template <typename T>
Tensor<T> bank_project(const Tensor<T>& x, const Tensor<T>& bank);

/// Relative logits from per-offset projections.
/// pq, pk: [K, B*N, D]; logit[b,h,i,j] = pq[qidx(i,j)][b,i] . pk[kidx(i,j)][b,j]
/// over head h's slice of D, times scale. Masked pairs give -inf.
template <typename T>
Tensor<T> pair_logits(const Tensor<T>& pq, const Tensor<T>& pk, const PairTables& tables,
                      std::size_t batch, std::size_t heads, T scale);

/// Offset-bank value path: out_i = sum_j alpha[h,i,j] * pv[qidx(i,j)][b,j]
/// with head h reading its column slice of D. Masked pairs contribute nothing.
template <typename T>
Tensor<T> pair_weighted_sum(const Tensor<T>& alpha, const Tensor<T>& pv, const PairTables& tables,
                            std::size_t batch, std::size_t heads);

/// Materializes the pair tensor R[b,i,j] = x[b,j] . bank[qidx(i,j)];
/// x: [B*N, C1], bank: [K,C1,C2], out: [B,N,N,C2] (masked pairs zero).
template <typename T>
Tensor<T> pair_project(const Tensor<T>& x, const Tensor<T>& bank, const PairTables& tables,
                       std::size_t batch);

/// S[b,h,i] = sum_j alpha[b,h,i,j] * r[b,i,j]; r: [B,N,N,D], out: [B,H,N,D].
template <typename T>
Tensor<T> pair_contract(const Tensor<T>& alpha, const Tensor<T>& r, std::size_t batch,
                        std::size_t n, std::size_t heads);

/// out[b,i, head h slice] = sum_j alpha[b,h,i,j] * v[b,j, slice]  (optional)
///                        + s[b,h,i] . w2[:, slice]
/// Fuses the shared and factorized value branches so no [N,N,C'] intermediate
/// exists. v may be null (factorized branch only); then alpha may be null too.
template <typename T>
Tensor<T> alpha_value_combine(const Tensor<T>* alpha, const Tensor<T>* v, const Tensor<T>& s,
                              const Tensor<T>& w2, std::size_t batch, std::size_t n,
                              std::size_t heads);

/// Composes per-offset matrices m[k] = left . bank[k] . right (+ shared).
/// left: [C,C1], bank: [K,C1,C2], right: [C2,C'], shared: [C,C'] or null.
template <typename T>
Tensor<T> bank_compose(const Tensor<T>& left, const Tensor<T>& bank, const Tensor<T>& right,
                       const Tensor<T>* shared);

/// out_i[slice h] = sum_j alpha[b,h,i,j] * vp[b,i,j,slice h]; vp: [B,N,N,C'].
template <typename T>
Tensor<T> pair_apply(const Tensor<T>& alpha, const Tensor<T>& vp, std::size_t batch,
                     std::size_t heads);

/// Additive relative-vector logits: q_i . r[qidx(i,j)] over head slices.
template <typename T>
Tensor<T> relvec_logits(const Tensor<T>& q, const Tensor<T>& r, const PairTables& tables,
                        std::size_t batch, std::size_t heads, T scale);

/// out_i[slice h] += sum_j alpha[b,h,i,j] * r[qidx(i,j)][slice h].
template <typename T>
Tensor<T> relvec_apply(const Tensor<T>& alpha, const Tensor<T>& r, const PairTables& tables,
                       std::size_t batch, std::size_t heads);

/// Broadcasts a per-offset scalar to every head: out[b,h,i,j] = bias[qidx(i,j)].
template <typename T>
Tensor<T> pairbias_logits(const Tensor<T>& bias, const PairTables& tables, std::size_t batch,
                          std::size_t heads);

/// Gated blend c = (1 - sigmoid(lambda_h)) * alpha + sigmoid(lambda_h) * beta.
template <typename T>
Tensor<T> gate_mix(const Tensor<T>& alpha, const Tensor<T>& beta, const Tensor<T>& lambda,
                   std::size_t batch, std::size_t n, std::size_t heads);

/// Rows rescaled to sum to one (plain normalization, not softmax).
template <typename T>
Tensor<T> row_normalize(const Tensor<T>& a);

/// In-plane rotations applied per head: pair t of head h rotates by
/// angle theta_t * position, theta_t = 10000^(-2t/d_h). With ypos present the
/// first half of each head's pairs follows xpos and the second half ypos.
template <typename T>
Tensor<T> rotary_rotate(const Tensor<T>& x, const std::vector<std::int32_t>& xpos,
                        const std::vector<std::int32_t>& ypos, std::size_t batch,
                        std::size_t heads);

/// rows of x selected at b*stride + pos for each sample b; x: [B*stride, C].
template <typename T>
Tensor<T> select_token_rows(const Tensor<T>& x, std::size_t batch, std::size_t stride,
                            std::size_t pos);

/// [row; x_b] per sample: row: [1,C], x: [B*N,C], out: [B*(N+1),C].
template <typename T>
Tensor<T> prepend_row(const Tensor<T>& row, const Tensor<T>& x, std::size_t batch, std::size_t n);

}  // namespace translution
