#include "translution/geometry.hpp"

#include <limits>
#include <string>

namespace translution {

Offset2D displacement2d(std::size_t i, std::size_t j, const Grid2D& grid) {
  const std::size_t n = grid.grid_tokens();
  if (i >= n || j >= n)
    throw Error("displacement2d: token outside the grid; CLS pairs go through cls_direction");
  const std::int64_t xi = static_cast<std::int64_t>(i / grid.width);
  const std::int64_t yi = static_cast<std::int64_t>(i % grid.width);
  const std::int64_t xj = static_cast<std::int64_t>(j / grid.width);
  const std::int64_t yj = static_cast<std::int64_t>(j % grid.width);
  return {xi - xj, yi - yj};
}

std::size_t offset_index2d(const Offset2D& o, std::size_t height, std::size_t width) {
  const std::int64_t h = static_cast<std::int64_t>(height);
  const std::int64_t w = static_cast<std::int64_t>(width);
  if (o.dx < -(h - 1) || o.dx > h - 1 || o.dy < -(w - 1) || o.dy > w - 1)
    throw Error("offset_index2d: offset (" + std::to_string(o.dx) + "," + std::to_string(o.dy) +
                ") outside box for " + std::to_string(height) + "x" + std::to_string(width) + " grid");
  return static_cast<std::size_t>((o.dx + h - 1) * (2 * w - 1) + (o.dy + w - 1));
}

std::size_t offset_index1d(std::int64_t delta, std::size_t n) {
  const std::int64_t nn = static_cast<std::int64_t>(n);
  if (delta < -(nn - 1) || delta > nn - 1)
    throw Error("offset_index1d: delta " + std::to_string(delta) + " outside [-(N-1),N-1] for N=" +
                std::to_string(n));
  return static_cast<std::size_t>(delta + nn - 1);
}

std::size_t offset_index1d_causal(std::int64_t delta, std::size_t n) {
  if (delta < 0) throw Error("masked offset has no value bank entry");
  if (delta > static_cast<std::int64_t>(n) - 1)
    throw Error("offset_index1d: delta " + std::to_string(delta) + " outside [0,N-1] for N=" +
                std::to_string(n));
  return static_cast<std::size_t>(delta);
}

ClsDirection cls_direction(std::size_t i, std::size_t j, const Grid2D& grid) {
  if (!grid.has_cls) throw Error("cls_direction: grid has no CLS slot");
  const bool i_cls = (i == 0);
  const bool j_cls = (j == 0);
  if (i_cls && j_cls) return ClsDirection::InPlace;
  if (i_cls) return ClsDirection::In;
  if (j_cls) return ClsDirection::Out;
  return ClsDirection::GridPair;
}

PairTables grid_pair_tables(const Grid2D& grid) {
  const std::size_t n = grid.grid_tokens();
  PairTables t;
  t.n = n;
  t.q_index.resize(n * n);
  t.k_index.resize(n * n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      const Offset2D d = displacement2d(i, j, grid);
      t.q_index[i * n + j] = static_cast<std::int32_t>(offset_index2d(d, grid.height, grid.width));
      t.k_index[i * n + j] =
          static_cast<std::int32_t>(offset_index2d(d.negate(), grid.height, grid.width));
    }
  return t;
}

PairTables grid_pair_tables_with_cls(const Grid2D& grid) {
  if (!grid.has_cls) throw Error("grid_pair_tables_with_cls: grid has no CLS slot");
  const std::size_t ng = grid.grid_tokens();
  const std::size_t n = ng + 1;
  const std::int32_t base = static_cast<std::int32_t>(grid.offset_count());
  PairTables t;
  t.n = n;
  t.q_index.resize(n * n);
  t.k_index.resize(n * n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      std::int32_t qi, ki;
      switch (cls_direction(i, j, grid)) {
        case ClsDirection::In:
          qi = ki = base + 0;
          break;
        case ClsDirection::InPlace:
          qi = ki = base + 1;
          break;
        case ClsDirection::Out:
          qi = ki = base + 2;
          break;
        case ClsDirection::GridPair: {
          const Offset2D d = displacement2d(i - 1, j - 1, grid);
          qi = static_cast<std::int32_t>(offset_index2d(d, grid.height, grid.width));
          ki = static_cast<std::int32_t>(offset_index2d(d.negate(), grid.height, grid.width));
          break;
        }
      }
      t.q_index[i * n + j] = qi;
      t.k_index[i * n + j] = ki;
    }
  return t;
}

PairTables seq_pair_tables(std::size_t n, std::size_t n_max, bool causal) {
  if (n > n_max)
    throw Error("seq_pair_tables: sequence length " + std::to_string(n) + " exceeds bank size " +
                std::to_string(n_max));
  PairTables t;
  t.n = n;
  t.q_index.resize(n * n);
  t.k_index.resize(n * n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      const std::int64_t delta = static_cast<std::int64_t>(i) - static_cast<std::int64_t>(j);
      if (causal) {
        if (delta < 0) {
          t.q_index[i * n + j] = -1;
          t.k_index[i * n + j] = -1;
        } else {
          // causal key banks store the matrices for -delta at index delta
          const std::int32_t idx = static_cast<std::int32_t>(offset_index1d_causal(delta, n_max));
          t.q_index[i * n + j] = idx;
          t.k_index[i * n + j] = idx;
        }
      } else {
        t.q_index[i * n + j] = static_cast<std::int32_t>(offset_index1d(delta, n_max));
        t.k_index[i * n + j] = static_cast<std::int32_t>(offset_index1d(-delta, n_max));
      }
    }
  return t;
}

PairTables absolute_pair_tables(std::size_t n) {
  PairTables t;
  t.n = n;
  t.q_index.resize(n * n);
  t.k_index.resize(n * n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      t.q_index[i * n + j] = static_cast<std::int32_t>(i * n + j);
      t.k_index[i * n + j] = static_cast<std::int32_t>(j * n + i);
    }
  return t;
}

template <typename T>
Tensor<T> causal_mask(std::size_t n) {
  if (n < 1) throw Error("causal_mask: need n >= 1");
  Tensor<T> m = Tensor<T>::zeros({n, n});
  T* p = m.data();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) p[i * n + j] = -std::numeric_limits<T>::infinity();
  return m;
}

template Tensor<float> causal_mask<float>(std::size_t);
template Tensor<double> causal_mask<double>(std::size_t);

}  // namespace translution
