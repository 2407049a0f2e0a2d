#pragma once

#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "translution/attention.hpp"
#include "translution/autodiff.hpp"
#include "translution/encoding_zoo.hpp"
#include "translution/geometry.hpp"
#include "translution/sequence.hpp"
#include "translution/translution.hpp"

namespace translution {

enum class VariantKind {
  SelfAttention,
  Translution,
  AlphaTranslution,
  TranslutionAbsolute,
  RelKeyVector,
  RelValueVector,
  RelScalarBias,
  GatedPositional,
  Rotary,
};

std::string variant_name(VariantKind v);
VariantKind variant_from_name(const std::string& name);

struct ArchConfig {
  std::size_t depth = 6;
  std::size_t embed_dim = 192;
  std::size_t heads = 3;
  std::size_t mlp_dim = 768;
};

/// Named presets: A = (6,192,3,768), B = (12,192,3,768), C = (12,384,6,1536).
ArchConfig arch_preset(const std::string& name);

struct ModelFlags {
  bool use_shared = true;      // keep the shared q/k/v terms in the factorized variant
  bool input_pos_embed = false;  // learned absolute table added to the input
  bool cls_relative = true;    // dedicated in / in-place / out CLS weights
  bool tied_init = false;      // one draw shared across every offset slot
};

/// Full architecture description. `c1`/`c2` are per-head relative encoding
/// dims; the stored factor width is c1*heads (resp. c2*heads), which is what
/// reproduces the published parameter counts.
struct ModelSpec {
  std::string arch_name = "A";  // "A" | "B" | "C" | "custom"
  ArchConfig arch;
  std::string task = "classify";  // "classify" | "lm"
  std::size_t canvas = 0;
  std::size_t patch = 0;
  std::size_t channels = 1;
  std::size_t classes = 10;
  std::size_t vocab = 0;
  std::size_t seq_len = 0;
  VariantKind variant = VariantKind::SelfAttention;
  ModelFlags flags;
  std::size_t c1 = 8;
  std::size_t c2 = 8;
  std::uint64_t seed = 0;

  std::size_t grid_side() const { return patch == 0 ? 0 : canvas / patch; }
  std::size_t tokens() const;  // sequence length seen by the blocks
  Grid2D grid() const { return Grid2D{grid_side(), grid_side(), task == "classify"}; }
  bool translution_family() const {
    return variant == VariantKind::Translution || variant == VariantKind::AlphaTranslution ||
           variant == VariantKind::TranslutionAbsolute;
  }

  std::string to_json() const;
  static ModelSpec from_json(const std::string& text);
  void validate() const;
};

struct ParamCount {
  long long embed = 0;       // patch/token embedding (+ CLS token)
  long long pos_table = 0;
  long long attention = 0;   // per-layer variant weights, all layers
  long long cls_weights = 0; // dedicated CLS relative weights, all layers
  long long mlp = 0;         // feedforward, all layers
  long long norms = 0;       // layer norms (incl. final)
  long long head = 0;        // output projection per block + classifier/LM head
  long long total = 0;

  std::string to_json() const;
  std::string to_text() const;
};

/// Symbolic count; allocates nothing. Matches the materialized model exactly.
ParamCount count_params(const ModelSpec& spec);

template <typename T>
class Model {
 public:
  explicit Model(const ModelSpec& spec);

  const ModelSpec& spec() const { return spec_; }
  const std::vector<Param<T>*>& params() const { return order_; }
  Param<T>& at(const std::string& name);
  const Param<T>& at(const std::string& name) const;
  std::size_t scalar_count() const;

  /// classify: images [B, canvas, canvas] -> logits [B, classes]
  /// lm: tokens row-major [B, seq] -> logits [B*seq, vocab]
  Tensor<T> forward(const Tensor<T>& images) const;
  Tensor<T> forward_tokens(const std::vector<std::int64_t>& tokens, std::size_t batch) const;

 private:
  Tensor<T> blocks(Tensor<T> x, std::size_t batch, std::size_t n, bool causal) const;
  Tensor<T> attention(const Tensor<T>& h, std::size_t layer, std::size_t batch, std::size_t n,
                      bool causal) const;

  ModelSpec spec_;
  std::vector<std::unique_ptr<Param<T>>> storage_;
  std::vector<Param<T>*> order_;
  std::map<std::string, Param<T>*> by_name_;
  PairTables tables_;       // offset/pair tables for the block token layout
  DistanceBuckets dist_;    // gated variant buckets
  std::vector<std::int32_t> rot_x_, rot_y_;  // rotary positions per token

  Param<T>* add_param(const std::string& name, std::vector<std::size_t> shape);
};

template <typename T>
void save_model(const Model<T>& model, const std::string& path);

/// Restores weights into a freshly built model; shape or name mismatches
/// (e.g. a checkpoint from a different grid) raise with expected vs actual.
template <typename T>
std::unique_ptr<Model<T>> load_model(const std::string& path);

}  // namespace translution
