#pragma once

#include <cstdint>
#include <cstdlib>

#include "translution/ops.hpp"
#include "translution/tensor.hpp"

namespace translution {

/// Patch grid geometry. Grid token t (0-based, after the optional CLS slot at
/// sequence position 0) sits at row x = t / W, column y = t % W.
struct Grid2D {
  std::size_t height = 1;  // patches per column
  std::size_t width = 1;   // patches per row
  bool has_cls = false;

  std::size_t grid_tokens() const { return height * width; }
  std::size_t tokens() const { return grid_tokens() + (has_cls ? 1 : 0); }
  std::size_t offset_count() const { return (2 * height - 1) * (2 * width - 1); }
};

struct Offset2D {
  std::int64_t dx = 0;
  std::int64_t dy = 0;

  Offset2D negate() const { return {-dx, -dy}; }
  bool operator==(const Offset2D&) const = default;
};

enum class ClsDirection { In, InPlace, Out, GridPair };

/// Displacement between two grid tokens: (x_i - x_j, y_i - y_j).
/// Token indices are grid indices (CLS excluded); with a CLS slot present,
/// callers index grid tokens 0..H*W-1 and route CLS pairs via cls_direction.
Offset2D displacement2d(std::size_t i, std::size_t j, const Grid2D& grid);

/// Row-major linearization of the offset box:
/// (dx + H - 1) * (2W - 1) + (dy + W - 1). Bijective over the box.
std::size_t offset_index2d(const Offset2D& o, std::size_t height, std::size_t width);

/// Full 1D variant: delta in [-(N-1), N-1] -> delta + N - 1.
std::size_t offset_index1d(std::int64_t delta, std::size_t n);

/// Causal 1D variant: delta = i - j >= 0 indexes directly; negative deltas are
/// masked pairs and have no bank entry.
std::size_t offset_index1d_causal(std::int64_t delta, std::size_t n);

/// Classifies an ordered pair of sequence positions (CLS occupies slot 0).
ClsDirection cls_direction(std::size_t i, std::size_t j, const Grid2D& grid);

// ---------------------------------------------------------------------------
// Pair-table builders for the offset-bank kernels. q_index drives query and
// value lookups; k_index drives the negated-offset key lookup.

/// Grid-only tables: q_index(i,j) = offset_index2d(disp(i,j)),
/// k_index(i,j) = offset_index2d(-disp(i,j)).
PairTables grid_pair_tables(const Grid2D& grid);

/// Tables over the full sequence including the CLS slot. Grid pairs use the
/// offset box; CLS pairs use three extra bank slots appended after it:
/// base + 0 = In (CLS gathers from grid), base + 1 = InPlace, base + 2 = Out.
PairTables grid_pair_tables_with_cls(const Grid2D& grid);

/// 1D tables for a sequence of n tokens over banks sized for n_max >= n.
/// Full: centered sub-range of the 2*n_max-1 offsets. Causal: delta = i - j,
/// pairs with j > i masked.
PairTables seq_pair_tables(std::size_t n, std::size_t n_max, bool causal);

/// Absolute per-pair tables: q_index(i,j) = i*n + j, k_index(i,j) = j*n + i.
PairTables absolute_pair_tables(std::size_t n);

/// {0, -inf} additive mask, strict upper triangle masked.
template <typename T>
Tensor<T> causal_mask(std::size_t n);

}  // namespace translution
