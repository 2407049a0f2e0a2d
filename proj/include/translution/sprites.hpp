#pragma once

#include <string>

#include "translution/data.hpp"

namespace translution {

/// Synthetic 28x28 glyph sprites in ten shape classes (ring, bars, diagonals,
/// cross, saltire, solid and hollow squares, tee) with seeded per-sample
/// jitter in size, position, thickness and intensity. A deterministic
/// stand-in corpus for the handwritten-digit protocol; written through the
/// same IDX format the real files use.
IdxImages make_sprites(std::size_t count, std::uint64_t seed);

/// Writes train/test IDX pairs using the conventional file names
/// (train-images-idx3-ubyte, train-labels-idx1-ubyte, t10k-...).
void write_sprite_idx(const std::string& dir, std::size_t train_count, std::size_t test_count,
                      std::uint64_t seed);

}  // namespace translution
