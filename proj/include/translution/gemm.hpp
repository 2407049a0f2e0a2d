#pragma once

#include <cstddef>

namespace translution {

/// c[i,j] (+)= sum_t a[i,t] * b[t,j], row-major.
/// The double kernel accumulates strictly in ascending t order so results are
/// bit-identical to an explicit dot-product loop; the float kernel is the
/// fast path used for training.
template <typename T>
void gemm(std::size_t m, std::size_t k, std::size_t n, const T* a, const T* b, T* c,
          bool accumulate = false);

/// c[i,j] (+)= sum_t a[t,i] * b[t,j]  (a transposed), row-major.
template <typename T>
void gemm_tn(std::size_t m, std::size_t k, std::size_t n, const T* a, const T* b, T* c,
             bool accumulate = false);

/// c[i,j] (+)= sum_t a[i,t] * b[j,t]  (b transposed), row-major.
template <typename T>
void gemm_nt(std::size_t m, std::size_t k, std::size_t n, const T* a, const T* b, T* c,
             bool accumulate = false);

}  // namespace translution
