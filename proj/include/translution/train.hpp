#pragma once

#include <optional>
#include <string>

#include "translution/data.hpp"
#include "translution/model.hpp"

namespace translution {

struct AdamConfig {
  double lr = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

template <typename T>
class Adam {
 public:
  Adam(const std::vector<Param<T>*>& params, AdamConfig cfg);
  void step(const std::vector<Param<T>*>& params, const GradTable<T>& grads);

 private:
  AdamConfig cfg_;
  std::size_t t_ = 0;
  std::vector<Tensor<T>> m_, v_;
};

/// Everything a run needs, with defaults materialized on load and the full
/// config serialized next to the outputs for provenance.
struct RunConfig {
  ModelSpec model;
  AdamConfig optimizer;
  std::size_t epochs = 3;   // classify
  std::size_t steps = 200;  // lm
  std::size_t batch = 64;
  std::uint64_t seed = 0;
  bool deterministic = true;
  std::string train_data;   // dataset container (classify)
  std::string eval_data;
  std::string data_kind = "canvas";  // "canvas" | "copy"
  std::size_t copy_vocab = 64;
  std::size_t copy_seq = 32;
  std::string out_dir;
  std::size_t log_every = 50;  // lm metric cadence

  std::string to_json() const;
  static RunConfig from_json(const std::string& text);
};

struct EvalMetrics {
  double loss = 0;
  double top1 = 0;
  double top5 = 0;
  std::size_t count = 0;
};

EvalMetrics evaluate_classifier(const Model<float>& model, const CanvasDataset& data,
                                std::size_t batch);

struct TrainResult {
  std::string final_ckpt;
  std::string best_ckpt;
  std::string metrics_path;
  EvalMetrics final_eval;
  double final_perplexity = 0;  // lm runs: second-half perplexity
};

TrainResult run_training(const RunConfig& cfg);

}  // namespace translution
