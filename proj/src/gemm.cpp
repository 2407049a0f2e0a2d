#include "translution/gemm.hpp"

#include <Eigen/Dense>

namespace translution {

namespace {

using MapF = Eigen::Map<Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>,
                        Eigen::Unaligned>;
using CMapF = Eigen::Map<const Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>,
                         Eigen::Unaligned>;

// Ascending-t accumulation; the summation order per output element matches a
// plain dot-product loop exactly.
void dgemm_ordered(std::size_t m, std::size_t k, std::size_t n, const double* a, const double* b,
                   double* c, bool accumulate) {
  for (std::size_t i = 0; i < m; ++i) {
    double* ci = c + i * n;
    if (!accumulate)
      for (std::size_t j = 0; j < n; ++j) ci[j] = 0.0;
    const double* ai = a + i * k;
    for (std::size_t t = 0; t < k; ++t) {
      const double av = ai[t];
      const double* bt = b + t * n;
      for (std::size_t j = 0; j < n; ++j) ci[j] += av * bt[j];
    }
  }
}

}  // namespace

template <>
void gemm<float>(std::size_t m, std::size_t k, std::size_t n, const float* a, const float* b,
                 float* c, bool accumulate) {
  CMapF A(a, static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(k));
  CMapF B(b, static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(n));
  MapF C(c, static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(n));
  if (accumulate)
    C.noalias() += A * B;
  else
    C.noalias() = A * B;
}

template <>
void gemm<double>(std::size_t m, std::size_t k, std::size_t n, const double* a, const double* b,
                  double* c, bool accumulate) {
  dgemm_ordered(m, k, n, a, b, c, accumulate);
}

template <>
void gemm_tn<float>(std::size_t m, std::size_t k, std::size_t n, const float* a, const float* b,
                    float* c, bool accumulate) {
  CMapF A(a, static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(m));
  CMapF B(b, static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(n));
  MapF C(c, static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(n));
  if (accumulate)
    C.noalias() += A.transpose() * B;
  else
    C.noalias() = A.transpose() * B;
}

template <>
void gemm_tn<double>(std::size_t m, std::size_t k, std::size_t n, const double* a, const double* b,
                     double* c, bool accumulate) {
  for (std::size_t i = 0; i < m; ++i) {
    double* ci = c + i * n;
    if (!accumulate)
      for (std::size_t j = 0; j < n; ++j) ci[j] = 0.0;
    for (std::size_t t = 0; t < k; ++t) {
      const double av = a[t * m + i];
      const double* bt = b + t * n;
      for (std::size_t j = 0; j < n; ++j) ci[j] += av * bt[j];
    }
  }
}

template <>
void gemm_nt<float>(std::size_t m, std::size_t k, std::size_t n, const float* a, const float* b,
                    float* c, bool accumulate) {
  CMapF A(a, static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(k));
  CMapF B(b, static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(k));
  MapF C(c, static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(n));
  if (accumulate)
    C.noalias() += A * B.transpose();
  else
    C.noalias() = A * B.transpose();
}

template <>
void gemm_nt<double>(std::size_t m, std::size_t k, std::size_t n, const double* a, const double* b,
                     double* c, bool accumulate) {
  for (std::size_t i = 0; i < m; ++i) {
    double* ci = c + i * n;
    const double* ai = a + i * k;
    for (std::size_t j = 0; j < n; ++j) {
      double acc = accumulate ? ci[j] : 0.0;
      const double* bj = b + j * k;
      for (std::size_t t = 0; t < k; ++t) acc += ai[t] * bj[t];
      ci[j] = acc;
    }
  }
}

}  // namespace translution
