#include "translution/capi.h"

#include <json.hpp>

#include <cstring>
#include <memory>
#include <string>

#include "translution/data.hpp"
#include "translution/gradcheck.hpp"
#include "translution/model.hpp"
#include "translution/sprites.hpp"
#include "translution/train.hpp"
#include "translution/translution.hpp"

namespace {

thread_local std::string g_last_error;
bool g_deterministic = true;

char* dup_string(const std::string& s) {
  char* out = new char[s.size() + 1];
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

tl_status fail(tl_status code, const std::string& message) {
  g_last_error = message;
  return code;
}

template <typename Fn>
tl_status guarded(Fn&& fn) {
  try {
    return fn();
  } catch (const translution::Error& e) {
    return fail(TL_ERR_ARGUMENT, e.what());
  } catch (const std::exception& e) {
    return fail(TL_ERR_INTERNAL, e.what());
  }
}

}  // namespace

struct tl_dataset {
  translution::CanvasDataset data;
};

struct tl_model {
  std::unique_ptr<translution::Model<float>> model;
};

extern "C" {

const char* tl_version(void) { return "1.0.0"; }

const char* tl_last_error(void) { return g_last_error.c_str(); }

void tl_free_string(char* s) { delete[] s; }

tl_status tl_set_deterministic(int enabled) {
  g_deterministic = enabled != 0;
  return TL_OK;
}

tl_status tl_gen_sprites(const char* dir, long long train_count, long long test_count,
                         unsigned long long seed) {
  if (!dir || train_count <= 0 || test_count <= 0)
    return fail(TL_ERR_ARGUMENT, "gen_sprites: dir and positive counts required");
  return guarded([&] {
    translution::write_sprite_idx(dir, static_cast<std::size_t>(train_count),
                                  static_cast<std::size_t>(test_count), seed);
    return TL_OK;
  });
}

tl_status tl_gen_canvas(const char* idx_images, const char* idx_labels, const char* mode,
                        long long canvas, long long sprite, unsigned long long seed,
                        long long limit, const char* out_path) {
  if (!idx_images || !idx_labels || !mode || !out_path || canvas <= 0 || sprite <= 0)
    return fail(TL_ERR_ARGUMENT, "gen_canvas: paths, mode, canvas and sprite required");
  return guarded([&] {
    translution::IdxImages src = translution::read_idx(idx_images, idx_labels);
    if (limit > 0 && static_cast<std::size_t>(limit) < src.labels.size()) {
      const std::size_t keep = static_cast<std::size_t>(limit);
      translution::Tensor<float> images(
          {keep, src.images.extent(1), src.images.extent(2)});
      std::copy(src.images.data(), src.images.data() + images.size(), images.data());
      src.images = images;
      src.labels.resize(keep);
    }
    const std::size_t native = src.images.extent(1);
    const std::size_t target = static_cast<std::size_t>(sprite);
    translution::Tensor<float> sprites = src.images;
    if (target != native) {
      if (native % target != 0 || native / target != 2)
        throw translution::Error("gen_canvas: sprite " + std::to_string(target) +
                                 " requires 2x pooling of the native " + std::to_string(native));
      sprites = translution::downsample2x(src.images);
    }
    translution::CanvasDataset ds = translution::synth_canvas(
        sprites, src.labels, mode, static_cast<std::size_t>(canvas), seed);
    translution::save_dataset(ds, out_path);
    return TL_OK;
  });
}

tl_status tl_dataset_open(tl_dataset** out, const char* path) {
  if (!out || !path) return fail(TL_ERR_ARGUMENT, "dataset_open: handle and path required");
  return guarded([&] {
    auto d = std::make_unique<tl_dataset>();
    d->data = translution::load_dataset(path);
    *out = d.release();
    return TL_OK;
  });
}

tl_status tl_dataset_info(tl_dataset* d, char** json_out) {
  if (!d || !json_out) return fail(TL_ERR_ARGUMENT, "dataset_info: handle required");
  return guarded([&] {
    nlohmann::json j{{"count", d->data.count()},
                     {"canvas", d->data.canvas()},
                     {"mode", d->data.mode},
                     {"seed", d->data.seed}};
    *json_out = dup_string(j.dump(2));
    return TL_OK;
  });
}

void tl_dataset_close(tl_dataset* d) { delete d; }

tl_status tl_model_create(tl_model** out, const char* spec_json) {
  if (!out || !spec_json) return fail(TL_ERR_ARGUMENT, "model_create: handle and spec required");
  return guarded([&] {
    auto m = std::make_unique<tl_model>();
    m->model = std::make_unique<translution::Model<float>>(
        translution::ModelSpec::from_json(spec_json));
    *out = m.release();
    return TL_OK;
  });
}

tl_status tl_model_open(tl_model** out, const char* ckpt_path) {
  if (!out || !ckpt_path) return fail(TL_ERR_ARGUMENT, "model_open: handle and path required");
  return guarded([&] {
    auto m = std::make_unique<tl_model>();
    m->model = translution::load_model<float>(ckpt_path);
    *out = m.release();
    return TL_OK;
  });
}

tl_status tl_model_save(tl_model* m, const char* ckpt_path) {
  if (!m || !ckpt_path) return fail(TL_ERR_ARGUMENT, "model_save: handle and path required");
  return guarded([&] {
    translution::save_model(*m->model, ckpt_path);
    return TL_OK;
  });
}

tl_status tl_model_spec(tl_model* m, char** json_out) {
  if (!m || !json_out) return fail(TL_ERR_ARGUMENT, "model_spec: handle required");
  return guarded([&] {
    *json_out = dup_string(m->model->spec().to_json());
    return TL_OK;
  });
}

void tl_model_close(tl_model* m) { delete m; }

tl_status tl_count_params(const char* spec_json, char** json_out) {
  if (!spec_json || !json_out) return fail(TL_ERR_ARGUMENT, "count_params: spec required");
  return guarded([&] {
    const translution::ModelSpec spec = translution::ModelSpec::from_json(spec_json);
    *json_out = dup_string(translution::count_params(spec).to_json());
    return TL_OK;
  });
}

tl_status tl_train(const char* run_config_json, char** summary_json_out) {
  if (!run_config_json) return fail(TL_ERR_ARGUMENT, "train: config required");
  return guarded([&] {
    translution::RunConfig cfg = translution::RunConfig::from_json(run_config_json);
    cfg.deterministic = cfg.deterministic || g_deterministic;
    const translution::TrainResult res = translution::run_training(cfg);
    nlohmann::json j{{"final_ckpt", res.final_ckpt},
                     {"best_ckpt", res.best_ckpt},
                     {"metrics", res.metrics_path}};
    if (cfg.data_kind == "canvas") {
      j["eval"] = {{"loss", res.final_eval.loss},
                   {"top1", res.final_eval.top1},
                   {"top5", res.final_eval.top5}};
    } else {
      j["perplexity"] = res.final_perplexity;
    }
    if (summary_json_out) *summary_json_out = dup_string(j.dump(2));
    return TL_OK;
  });
}

tl_status tl_eval(const char* ckpt_path, const char* data_path, long long batch,
                  char** metrics_json_out) {
  if (!ckpt_path || !data_path || !metrics_json_out)
    return fail(TL_ERR_ARGUMENT, "eval: checkpoint, data and output required");
  return guarded([&] {
    auto model = translution::load_model<float>(ckpt_path);
    const translution::CanvasDataset data = translution::load_dataset(data_path);
    if (model->spec().canvas != data.canvas())
      throw translution::Error("eval: model canvas " + std::to_string(model->spec().canvas) +
                               " vs dataset canvas " + std::to_string(data.canvas()));
    const translution::EvalMetrics m = translution::evaluate_classifier(
        *model, data, batch > 0 ? static_cast<std::size_t>(batch) : 64);
    nlohmann::json j{{"count", m.count}, {"loss", m.loss}, {"top1", m.top1}, {"top5", m.top5}};
    *metrics_json_out = dup_string(j.dump(2));
    return TL_OK;
  });
}

tl_status tl_gradcheck(const char* op_name, double* out_max_rel_err) {
  if (!op_name || !out_max_rel_err)
    return fail(TL_ERR_ARGUMENT, "gradcheck: operator name and output required");
  return guarded([&] {
    *out_max_rel_err = translution::gradcheck_operator(op_name);
    return TL_OK;
  });
}

tl_status tl_bench_mem(const char* variant, long long n, long long cprime, long long c2,
                       char** json_out) {
  if (!variant || !json_out || n <= 0 || cprime <= 0 || c2 <= 0)
    return fail(TL_ERR_ARGUMENT, "bench_mem: variant and positive dims required");
  const std::string v = variant;
  if (v != "naive" && v != "efficient")
    return fail(TL_ERR_ARGUMENT, "bench_mem: variant must be 'naive' or 'efficient'");
  return guarded([&] {
    const translution::MemBenchResult res = translution::mem_bench_value_path(
        v == "efficient", static_cast<std::size_t>(n), static_cast<std::size_t>(cprime),
        static_cast<std::size_t>(c2));
    nlohmann::json j{{"variant", v},
                     {"n", n},
                     {"cprime", cprime},
                     {"c2", c2},
                     {"metered_peak_elements", res.metered_peak},
                     {"predicted_elements", res.predicted}};
    *json_out = dup_string(j.dump(2));
    return TL_OK;
  });
}

}  // extern "C"
