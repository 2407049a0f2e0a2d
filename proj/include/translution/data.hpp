#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "translution/rng.hpp"
#include "translution/tensor.hpp"

namespace translution {

/// Labeled image set synthesized by placing sprites on a larger canvas.
/// Static mode centers every sprite; dynamic mode draws the top-left corner
/// uniformly per sample from the valid range, seeded per index.
struct CanvasDataset {
  Tensor<float> images;  // [M, canvas, canvas] in [0,1]
  std::vector<std::int64_t> labels;
  std::string mode = "static";  // "static" | "dynamic"
  std::uint64_t seed = 0;

  std::size_t count() const { return labels.size(); }
  std::size_t canvas() const { return images.defined() ? images.extent(1) : 0; }
};

struct IdxImages {
  Tensor<float> images;  // [M, rows, cols], bytes scaled to [0,1]
  std::vector<std::int64_t> labels;
};

/// IDX readers; magic 0x00000803 for images, 0x00000801 for labels,
/// dimensions big-endian.
Tensor<float> read_idx_images(const std::string& path);
std::vector<std::int64_t> read_idx_labels(const std::string& path);
IdxImages read_idx(const std::string& image_path, const std::string& label_path);

void write_idx_images(const std::string& path, const Tensor<float>& images);
void write_idx_labels(const std::string& path, const std::vector<std::int64_t>& labels);

/// 2x2 mean pooling, used by the mini profile (28x28 sprites -> 14x14).
Tensor<float> downsample2x(const Tensor<float>& images);

CanvasDataset synth_canvas(const Tensor<float>& sprites, const std::vector<std::int64_t>& labels,
                           const std::string& mode, std::size_t canvas, std::uint64_t seed);

/// Dataset container plus a JSON sidecar (mode, canvas, seed) at path+".json".
void save_dataset(const CanvasDataset& ds, const std::string& path);
CanvasDataset load_dataset(const std::string& path);

/// Copy-task batches: first half random tokens, second half repeats it;
/// targets are the inputs shifted by one.
struct CopyBatch {
  std::vector<std::int64_t> inputs;   // [batch * seq_len]
  std::vector<std::int64_t> targets;  // [batch * seq_len]
};

CopyBatch lm_task_copy(std::uint64_t seed, std::size_t seq_len, std::size_t vocab,
                       std::size_t batch);

/// exp(mean token cross-entropy) over aligned logit/target streams.
template <typename T>
double perplexity(const Tensor<T>& logits, const std::vector<std::int64_t>& targets);

/// Perplexity over the second (determined) half of copy-task positions.
template <typename T>
double perplexity_second_half(const Tensor<T>& logits, const std::vector<std::int64_t>& targets,
                              std::size_t seq_len);

}  // namespace translution
