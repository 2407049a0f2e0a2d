#pragma once

#include "translution/translution.hpp"

namespace translution {

/// 1D offset bank. Full banks hold 2*n_max-1 matrices indexed by
/// delta + n_max - 1; causal banks hold n_max matrices indexed by
/// delta = i - j >= 0 (the key bank stores the -delta matrices at slot delta).
template <typename T>
struct OffsetBank1D {
  Tensor<T> mats;  // [2*n_max-1 | n_max, C, C']
  bool causal = false;
  std::size_t n_max = 0;
  BankRole role = BankRole::Query;
};

/// Sequence operator; shorter sequences than n_max index a centered sub-range
/// of a full bank (prefix of a causal one). Masked causal pairs are skipped
/// entirely, never computed.
template <typename T>
Tensor<T> translution1d(const Tensor<T>& f, const OffsetBank1D<T>& q, const OffsetBank1D<T>& k,
                        const OffsetBank1D<T>& v, std::size_t heads, bool causal,
                        std::size_t batch = 1);

}  // namespace translution
