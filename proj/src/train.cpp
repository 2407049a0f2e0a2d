#include "translution/train.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

namespace translution {

using nlohmann::json;

template <typename T>
Adam<T>::Adam(const std::vector<Param<T>*>& params, AdamConfig cfg) : cfg_(cfg) {
  m_.reserve(params.size());
  v_.reserve(params.size());
  for (const Param<T>* p : params) {
    m_.push_back(Tensor<T>::zeros(p->value().shape()));
    v_.push_back(Tensor<T>::zeros(p->value().shape()));
  }
}

template <typename T>
void Adam<T>::step(const std::vector<Param<T>*>& params, const GradTable<T>& grads) {
  if (params.size() != m_.size()) throw Error("Adam: parameter list changed");
  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (std::size_t p = 0; p < params.size(); ++p) {
    const Tensor<T>& g = grads.at(*params[p]);
    T* w = params[p]->value().data();
    T* m = m_[p].data();
    T* v = v_[p].data();
    const T* gd = g.data();
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double gi = static_cast<double>(gd[i]);
      const double mi = cfg_.beta1 * static_cast<double>(m[i]) + (1.0 - cfg_.beta1) * gi;
      const double vi = cfg_.beta2 * static_cast<double>(v[i]) + (1.0 - cfg_.beta2) * gi * gi;
      m[i] = static_cast<T>(mi);
      v[i] = static_cast<T>(vi);
      const double mhat = mi / bc1;
      const double vhat = vi / bc2;
      w[i] = static_cast<T>(static_cast<double>(w[i]) - cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps));
    }
  }
}

template class Adam<float>;
template class Adam<double>;

std::string RunConfig::to_json() const {
  json j;
  j["model"] = json::parse(model.to_json());
  j["optimizer"] = {{"kind", "adam"},
                    {"lr", optimizer.lr},
                    {"beta1", optimizer.beta1},
                    {"beta2", optimizer.beta2},
                    {"eps", optimizer.eps}};
  j["epochs"] = epochs;
  j["steps"] = steps;
  j["batch"] = batch;
  j["seed"] = seed;
  j["deterministic"] = deterministic;
  j["data"] = {{"kind", data_kind},    {"train", train_data},   {"eval", eval_data},
               {"copy_vocab", copy_vocab}, {"copy_seq", copy_seq}};
  j["out_dir"] = out_dir;
  j["log_every"] = log_every;
  return j.dump(2);
}

RunConfig RunConfig::from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw Error(std::string("run config JSON: ") + e.what());
  }
  RunConfig c;
  if (!j.contains("model")) throw Error("run config: missing 'model'");
  c.model = ModelSpec::from_json(j["model"].dump());
  if (j.contains("optimizer")) {
    const json& o = j["optimizer"];
    const std::string kind = o.value("kind", "adam");
    if (kind != "adam") throw Error("run config: unknown optimizer '" + kind + "'");
    c.optimizer.lr = o.value("lr", c.optimizer.lr);
    c.optimizer.beta1 = o.value("beta1", c.optimizer.beta1);
    c.optimizer.beta2 = o.value("beta2", c.optimizer.beta2);
    c.optimizer.eps = o.value("eps", c.optimizer.eps);
  }
  c.epochs = j.value("epochs", c.epochs);
  c.steps = j.value("steps", c.steps);
  c.batch = j.value("batch", c.batch);
  c.seed = j.value("seed", c.seed);
  c.deterministic = j.value("deterministic", c.deterministic);
  if (j.contains("data")) {
    const json& d = j["data"];
    c.data_kind = d.value("kind", c.data_kind);
    c.train_data = d.value("train", c.train_data);
    c.eval_data = d.value("eval", c.eval_data);
    c.copy_vocab = d.value("copy_vocab", c.copy_vocab);
    c.copy_seq = d.value("copy_seq", c.copy_seq);
  }
  c.out_dir = j.value("out_dir", c.out_dir);
  c.log_every = j.value("log_every", c.log_every);
  if (c.data_kind != "canvas" && c.data_kind != "copy")
    throw Error("run config: data kind must be 'canvas' or 'copy'");
  if (c.data_kind == "copy" && c.model.task != "lm")
    throw Error("run config: copy task needs an lm model");
  if (c.data_kind == "canvas" && c.model.task != "classify")
    throw Error("run config: canvas data needs a classify model");
  return c;
}

namespace {

Tensor<float> gather_images(const CanvasDataset& data, const std::vector<std::size_t>& idx,
                            std::size_t from, std::size_t count) {
  const std::size_t s = data.canvas();
  Tensor<float> batch({count, s, s});
  for (std::size_t b = 0; b < count; ++b)
    std::copy(data.images.data() + idx[from + b] * s * s,
              data.images.data() + (idx[from + b] + 1) * s * s, batch.data() + b * s * s);
  return batch;
}

struct TopCounts {
  std::size_t top1 = 0, top5 = 0;
};

TopCounts count_topk(const Tensor<float>& logits, const std::vector<std::int64_t>& labels) {
  const std::size_t b = logits.extent(0), k = logits.extent(1);
  TopCounts out;
  for (std::size_t i = 0; i < b; ++i) {
    const float* row = logits.data() + i * k;
    const float target_score = row[labels[i]];
    std::size_t above = 0, ties_before = 0;
    for (std::size_t j = 0; j < k; ++j) {
      if (row[j] > target_score) ++above;
      else if (row[j] == target_score && j < static_cast<std::size_t>(labels[i])) ++ties_before;
    }
    const std::size_t rank = above + ties_before;  // deterministic tie-break by index
    if (rank == 0) ++out.top1;
    if (rank < 5) ++out.top5;
  }
  return out;
}

}  // namespace

EvalMetrics evaluate_classifier(const Model<float>& model, const CanvasDataset& data,
                                std::size_t batch) {
  NoGradGuard ng;
  EvalMetrics m;
  m.count = data.count();
  std::vector<std::size_t> idx(data.count());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  double loss_sum = 0;
  std::size_t top1 = 0, top5 = 0;
  for (std::size_t from = 0; from < idx.size(); from += batch) {
    const std::size_t count = std::min(batch, idx.size() - from);
    Tensor<float> images = gather_images(data, idx, from, count);
    std::vector<std::int64_t> labels(data.labels.begin() + from,
                                     data.labels.begin() + from + count);
    Tensor<float> logits = model.forward(images);
    loss_sum += static_cast<double>(cross_entropy_loss(logits, labels).item()) * count;
    const TopCounts tc = count_topk(logits, labels);
    top1 += tc.top1;
    top5 += tc.top5;
  }
  m.loss = loss_sum / static_cast<double>(m.count);
  m.top1 = 100.0 * static_cast<double>(top1) / static_cast<double>(m.count);
  m.top5 = 100.0 * static_cast<double>(top5) / static_cast<double>(m.count);
  return m;
}

namespace {

TrainResult train_classifier(const RunConfig& cfg) {
  if (cfg.train_data.empty() || cfg.eval_data.empty())
    throw Error("train: canvas runs need data.train and data.eval paths");
  const CanvasDataset train = load_dataset(cfg.train_data);
  const CanvasDataset eval = load_dataset(cfg.eval_data);
  const std::size_t canvas = train.canvas();
  if (canvas != cfg.model.canvas)
    throw Error("train: dataset canvas " + std::to_string(canvas) + " vs model canvas " +
                std::to_string(cfg.model.canvas));

  Model<float> model(cfg.model);
  Adam<float> adam(model.params(), cfg.optimizer);

  std::filesystem::create_directories(cfg.out_dir);
  {
    std::ofstream cfg_out(cfg.out_dir + "/config.json", std::ios::trunc);
    cfg_out << cfg.to_json() << "\n";
  }
  std::ofstream metrics(cfg.out_dir + "/metrics.jsonl", std::ios::trunc);
  auto log_eval = [&](std::size_t epoch, const EvalMetrics& m) {
    json j{{"epoch", epoch}, {"split", "eval"}, {"loss", m.loss}, {"top1", m.top1}, {"top5", m.top5}};
    metrics << j.dump() << "\n";
    metrics.flush();
  };

  TrainResult result;
  result.metrics_path = cfg.out_dir + "/metrics.jsonl";
  result.final_ckpt = cfg.out_dir + "/final.tlsn";
  result.best_ckpt = cfg.out_dir + "/best.tlsn";

  EvalMetrics ev = evaluate_classifier(model, eval, cfg.batch);
  log_eval(0, ev);
  double best_top1 = ev.top1;
  save_model(model, result.best_ckpt);

  std::vector<std::size_t> order(train.count());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  const std::size_t s = canvas;

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    Rng shuffle_rng(cfg.seed ^ (0xE0C0ULL + epoch));
    for (std::size_t i = order.size(); i > 1; --i) {
      const std::size_t j = static_cast<std::size_t>(shuffle_rng.below(i));
      std::swap(order[i - 1], order[j]);
    }
    double loss_sum = 0;
    std::size_t seen = 0, top1 = 0, top5 = 0;
    for (std::size_t from = 0; from < order.size(); from += cfg.batch) {
      const std::size_t count = std::min(cfg.batch, order.size() - from);
      Tensor<float> images({count, s, s});
      std::vector<std::int64_t> labels(count);
      for (std::size_t b = 0; b < count; ++b) {
        std::copy(train.images.data() + order[from + b] * s * s,
                  train.images.data() + (order[from + b] + 1) * s * s,
                  images.data() + b * s * s);
        labels[b] = train.labels[order[from + b]];
      }
      Tensor<float> logits = model.forward(images);
      Tensor<float> loss = cross_entropy_loss(logits, labels);
      GradTable<float> grads = backward(loss, model.params());
      adam.step(model.params(), grads);
      loss_sum += static_cast<double>(loss.item()) * count;
      seen += count;
      const TopCounts tc = count_topk(logits, labels);
      top1 += tc.top1;
      top5 += tc.top5;
    }
    json j{{"epoch", epoch},
           {"split", "train"},
           {"loss", loss_sum / static_cast<double>(seen)},
           {"top1", 100.0 * static_cast<double>(top1) / static_cast<double>(seen)},
           {"top5", 100.0 * static_cast<double>(top5) / static_cast<double>(seen)}};
    metrics << j.dump() << "\n";
    metrics.flush();

    ev = evaluate_classifier(model, eval, cfg.batch);
    log_eval(epoch, ev);
    if (ev.top1 >= best_top1) {
      best_top1 = ev.top1;
      save_model(model, result.best_ckpt);
    }
  }
  save_model(model, result.final_ckpt);
  result.final_eval = ev;
  return result;
}

TrainResult train_lm(const RunConfig& cfg) {
  if (cfg.model.seq_len != cfg.copy_seq || cfg.model.vocab != cfg.copy_vocab)
    throw Error("train: copy task dims must match the model (vocab, seq_len)");
  Model<float> model(cfg.model);
  Adam<float> adam(model.params(), cfg.optimizer);

  std::filesystem::create_directories(cfg.out_dir);
  {
    std::ofstream cfg_out(cfg.out_dir + "/config.json", std::ios::trunc);
    cfg_out << cfg.to_json() << "\n";
  }
  std::ofstream metrics(cfg.out_dir + "/metrics.jsonl", std::ios::trunc);

  TrainResult result;
  result.metrics_path = cfg.out_dir + "/metrics.jsonl";
  result.final_ckpt = cfg.out_dir + "/final.tlsn";
  result.best_ckpt = result.final_ckpt;

  const std::uint64_t eval_seed = cfg.seed ^ 0xEEEEULL;
  auto eval_ppl = [&]() {
    NoGradGuard ng;
    const CopyBatch eb = lm_task_copy(eval_seed, cfg.copy_seq, cfg.copy_vocab, 16);
    Tensor<float> logits = model.forward_tokens(eb.inputs, 16);
    return perplexity_second_half(logits, eb.targets, cfg.copy_seq);
  };

  double ppl = eval_ppl();
  metrics << json{{"step", 0}, {"split", "eval"}, {"perplexity", ppl}}.dump() << "\n";

  for (std::size_t step = 1; step <= cfg.steps; ++step) {
    const CopyBatch cb = lm_task_copy(cfg.seed ^ (step * 0x9E37ULL), cfg.copy_seq, cfg.copy_vocab,
                                      cfg.batch);
    Tensor<float> logits = model.forward_tokens(cb.inputs, cfg.batch);
    Tensor<float> loss = cross_entropy_loss(logits, cb.targets);
    GradTable<float> grads = backward(loss, model.params());
    adam.step(model.params(), grads);
    if (step % cfg.log_every == 0 || step == cfg.steps) {
      ppl = eval_ppl();
      metrics << json{{"step", step},
                      {"split", "train"},
                      {"loss", static_cast<double>(loss.item())},
                      {"perplexity", ppl}}
                     .dump()
              << "\n";
      metrics.flush();
    }
  }
  ppl = eval_ppl();
  metrics << json{{"step", cfg.steps}, {"split", "eval"}, {"perplexity", ppl}}.dump() << "\n";
  save_model(model, result.final_ckpt);
  result.final_perplexity = ppl;
  return result;
}

}  // namespace

TrainResult run_training(const RunConfig& cfg) {
  if (cfg.out_dir.empty()) throw Error("train: out_dir required");
  return cfg.data_kind == "canvas" ? train_classifier(cfg) : train_lm(cfg);
}

}  // namespace translution
