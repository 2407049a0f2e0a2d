#pragma once

#include <functional>

#include "translution/attention.hpp"
#include "translution/geometry.hpp"
#include "translution/ops.hpp"
#include "translution/tensor.hpp"

namespace translution {

enum class BankRole { Query, Key, Value };

/// Per-displacement weight matrices, first extent indexed by offset_index2d
/// (plus optional CLS slots appended by the model layer). Key banks are read
/// at the negated offset; the pair tables encode that.
template <typename T>
struct OffsetBank {
  Tensor<T> mats;  // [K, C_in, C_out]
  BankRole role = BankRole::Query;
};

/// Factorized relative weights plus the retained shared projections.
/// The per-offset matrices live in a reduced [dim1, dim2] space sandwiched by
/// w1 (per role) and, on the value path, w2.
template <typename T>
struct AlphaFactors {
  Tensor<T> wq1, wk1, wv1;              // [C, dim1]
  Tensor<T> qbank, kbank, vbank;        // [K, dim1, dim2]
  Tensor<T> wv2;                        // [dim2, C']
  ProjectionSet<T> shared;              // used when use_shared

  std::size_t dim1() const { return qbank.defined() ? qbank.extent(1) : 0; }
  std::size_t dim2() const { return qbank.defined() ? qbank.extent(2) : 0; }
};

// ---------------------------------------------------------------------------
// Pairwise kernels shared by the 2D, 1D and absolute-pair operators. The pair
// tables decide which bank slice each ordered pair reads.

template <typename T>
Tensor<T> translution_pairwise(const Tensor<T>& f, const Tensor<T>& qmats, const Tensor<T>& kmats,
                               const Tensor<T>& vmats, const PairTables& tables, std::size_t batch,
                               std::size_t heads);

template <typename T>
Tensor<T> alpha_translution_pairwise(const Tensor<T>& f, const AlphaFactors<T>& factors,
                                     const PairTables& tables, std::size_t batch, std::size_t heads,
                                     bool use_shared, bool efficient);

// ---------------------------------------------------------------------------
// Public operators.

/// Eq-style 2D operator on a CLS-free grid: q_{i,j} = f_i . Wq_d,
/// k_{j,i} = f_j . Wk_{-d}, per-head scaled dot-product softmax over j,
/// v_{i,j} = f_j . Wv_d, weighted sum.
template <typename T>
Tensor<T> translution2d(const Tensor<T>& f, const OffsetBank<T>& q, const OffsetBank<T>& k,
                        const OffsetBank<T>& v, const Grid2D& grid, std::size_t heads);

/// Fixed 0/1 attention plus a value bank that reproduce a convolution through
/// the weighted-sum form. The indicator is deliberately not normalized.
template <typename T>
struct ConvAsTranslution {
  Tensor<T> indicator;    // [N,N] of {0,1}
  OffsetBank<T> value;    // kernel slices at matching offsets, zeros elsewhere
};

template <typename T>
ConvAsTranslution<T> conv_as_translution(const Tensor<T>& kernel, const Grid2D& grid);

/// Weighted sum under a fixed (unnormalized) attention map; used to evaluate
/// the conv_as_translution pair against conv2d.
template <typename T>
Tensor<T> fixed_attention_apply(const Tensor<T>& attention, const Tensor<T>& f,
                                const OffsetBank<T>& value, const Grid2D& grid);

/// Factorized operator (optionally with the shared q/k/v terms and an input
/// position table). `efficient` selects the reordered value path that never
/// materializes an [N,N,C'] tensor.
template <typename T>
Tensor<T> alpha_translution2d(const Tensor<T>& f, const AlphaFactors<T>& factors,
                              const Grid2D& grid, std::size_t heads, bool use_shared,
                              const PosEmbedTable<T>* input_pos_embed = nullptr,
                              bool efficient = false);

template <typename T>
Tensor<T> alpha_translution2d_efficient(const Tensor<T>& f, const AlphaFactors<T>& factors,
                                        const Grid2D& grid, std::size_t heads, bool use_shared,
                                        const PosEmbedTable<T>* input_pos_embed = nullptr);

/// Ablation variant: one matrix per ordered token pair, indexed i*N+j (and
/// j*N+i on the key path).
template <typename T>
Tensor<T> translution2d_absolute_pairs(const Tensor<T>& f, const OffsetBank<T>& q,
                                       const OffsetBank<T>& k, const OffsetBank<T>& v,
                                       std::size_t heads);

/// Peak-intermediate accounting of the factorized value path, comparing the
/// direct [N,N,C'] materialization against the reordered evaluation. Inputs
/// (features, attention map, weights) are allocated outside the metered
/// region; the composed per-offset matrices of the naive path count as weight
/// preprocessing and sit outside it too. Runs single-head with C = C'.
struct MemBenchResult {
  long long metered_peak = 0;
  long long predicted = 0;  // N*C' + N^2*C2 (efficient) or N^2*C' (naive)
};

MemBenchResult mem_bench_value_path(bool efficient, std::size_t n, std::size_t cprime,
                                    std::size_t c2);

// ---------------------------------------------------------------------------
// Interface form: score and value as functions of (displacement, features).
// Discrete operators must be expressible through it; the adapter is checked
// for exact agreement against the direct implementation.

template <typename T>
struct GeneralTranslution {
  // pre-softmax score for the ordered pair (i, j)
  std::function<T(const Offset2D&, const T* fi, const T* fj, std::size_t c)> score;
  // encoded value contributed by j to i
  std::function<std::vector<T>(const Offset2D&, const T* fj, std::size_t c)> value;
  std::size_t out_dim = 0;
};

template <typename T>
Tensor<T> general_translution_apply(const Tensor<T>& f, const Grid2D& grid,
                                    const GeneralTranslution<T>& fns);

}  // namespace translution
