#pragma once

#include <cstdint>
#include <string>
#include <variant>
#include <vector>

#include "translution/tensor.hpp"

namespace translution {

/// One named tensor of either precision.
struct CheckpointEntry {
  std::string name;
  std::variant<Tensor<float>, Tensor<double>> tensor;

  std::size_t scalar_count() const {
    return std::visit([](const auto& t) { return t.size(); }, tensor);
  }
};

/// Container layout (all integers little-endian): magic "TLSN", u32 version,
/// u64 entry count; per entry u32 name length, name bytes, u32 rank,
/// u64 extents, u32 dtype tag (0 = f32, 1 = f64); then the raw row-major
/// payloads in manifest order.
void write_checkpoint(const std::string& path, const std::vector<CheckpointEntry>& entries);

std::vector<CheckpointEntry> read_checkpoint(const std::string& path);

}  // namespace translution
