// Command-line front end; everything routes through the C API in
// translution/capi.h.

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include "translution/capi.h"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitInternal = 1;
constexpr int kExitUser = 2;

int status_to_exit(tl_status s) {
  switch (s) {
    case TL_OK: return kExitOk;
    case TL_ERR_ARGUMENT:
    case TL_ERR_IO: return kExitUser;
    default: return kExitInternal;
  }
}

int report(tl_status s) {
  if (s != TL_OK) std::cerr << "error: " << tl_last_error() << "\n";
  return status_to_exit(s);
}

std::string read_file(const std::string& path, bool& ok) {
  std::ifstream is(path);
  if (!is) {
    ok = false;
    return {};
  }
  std::stringstream ss;
  ss << is.rdbuf();
  ok = true;
  return ss.str();
}

struct OwnedString {
  char* ptr = nullptr;
  ~OwnedString() { tl_free_string(ptr); }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"translution operator laboratory"};
  app.require_subcommand(1);

  // gen-sprites
  auto* sprites = app.add_subcommand("gen-sprites", "write synthetic glyph IDX files");
  std::string sprites_out = "data/idx";
  long long sprites_train = 4000, sprites_test = 1000;
  unsigned long long sprites_seed = 1;
  sprites->add_option("--out", sprites_out, "output directory");
  sprites->add_option("--train", sprites_train, "training sprite count");
  sprites->add_option("--test", sprites_test, "test sprite count");
  sprites->add_option("--seed", sprites_seed, "generation seed");

  // gen-mnist
  auto* gen = app.add_subcommand("gen-mnist", "place digit sprites on a canvas dataset");
  std::string gen_mode = "static", gen_idx_dir, gen_out, gen_split = "train";
  long long gen_canvas = 84, gen_sprite = 28, gen_limit = 0;
  unsigned long long gen_seed = 0;
  gen->add_option("--mode", gen_mode, "static | dynamic")->check(CLI::IsMember({"static", "dynamic"}));
  gen->add_option("--canvas", gen_canvas, "canvas side in pixels");
  gen->add_option("--sprite", gen_sprite, "sprite side (half the native side pools 2x)");
  gen->add_option("--seed", gen_seed, "placement seed");
  gen->add_option("--idx-dir", gen_idx_dir, "directory holding the IDX files")->required();
  gen->add_option("--out", gen_out, "output dataset path (.tlsn)")->required();
  gen->add_option("--split", gen_split, "train | test")->check(CLI::IsMember({"train", "test"}));
  gen->add_option("--limit", gen_limit, "keep only the first N sprites (0 = all)");

  // train
  auto* train = app.add_subcommand("train", "run a training job from a config document");
  std::string train_config;
  train->add_option("--config", train_config, "run config JSON file")->required();

  // eval
  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on a dataset");
  std::string eval_ckpt, eval_data, eval_split;
  long long eval_batch = 64;
  eval->add_option("--ckpt", eval_ckpt, "checkpoint path (.tlsn)")->required();
  eval->add_option("--data", eval_data, "dataset path, or a directory when --split is given")
      ->required();
  eval->add_option("--split", eval_split, "resolve --data as <data>/<split>.tlsn");
  eval->add_option("--batch", eval_batch, "evaluation batch size");

  // count-params
  auto* count = app.add_subcommand("count-params", "symbolic parameter count for a model spec");
  std::string count_config;
  bool count_json_only = false;
  count->add_option("--config", count_config, "model spec JSON file")->required();
  count->add_flag("--json-only", count_json_only, "suppress the aligned text table");

  // gradcheck
  auto* grad = app.add_subcommand("gradcheck", "finite-difference gradient verification");
  std::string grad_op = "all";
  grad->add_option("--op", grad_op, "operator name, or 'all'");

  // bench-mem
  auto* bench = app.add_subcommand("bench-mem", "value-path peak-memory accounting");
  std::string bench_variant = "efficient";
  long long bench_n = 16, bench_cprime = 64, bench_c2 = 8;
  bench->add_option("--variant", bench_variant, "naive | efficient")
      ->check(CLI::IsMember({"naive", "efficient"}));
  bench->add_option("--n", bench_n, "token count");
  bench->add_option("--cprime", bench_cprime, "value width C'");
  bench->add_option("--c2", bench_c2, "factorized width C2");

  bool deterministic = true;
  app.add_flag("--deterministic,!--no-deterministic", deterministic,
               "single-threaded reproducible compute (default on)");

  CLI11_PARSE(app, argc, argv);
  tl_set_deterministic(deterministic ? 1 : 0);

  if (sprites->parsed())
    return report(tl_gen_sprites(sprites_out.c_str(), sprites_train, sprites_test, sprites_seed));

  if (gen->parsed()) {
    const std::string prefix = gen_split == "train" ? "train" : "t10k";
    const std::string images = gen_idx_dir + "/" + prefix + "-images-idx3-ubyte";
    const std::string labels = gen_idx_dir + "/" + prefix + "-labels-idx1-ubyte";
    {
      std::ifstream probe(images);
      if (!probe) {
        std::cerr << "error: missing IDX file " << images << "\n";
        return kExitUser;
      }
    }
    return report(tl_gen_canvas(images.c_str(), labels.c_str(), gen_mode.c_str(), gen_canvas,
                                gen_sprite, gen_seed, gen_limit, gen_out.c_str()));
  }

  if (train->parsed()) {
    bool ok = false;
    const std::string cfg = read_file(train_config, ok);
    if (!ok) {
      std::cerr << "error: cannot read config " << train_config << "\n";
      return kExitUser;
    }
    OwnedString summary;
    const tl_status s = tl_train(cfg.c_str(), &summary.ptr);
    if (s == TL_OK) std::cout << summary.ptr << "\n";
    return report(s);
  }

  if (eval->parsed()) {
    const std::string data =
        eval_split.empty() ? eval_data : eval_data + "/" + eval_split + ".tlsn";
    OwnedString metrics;
    const tl_status s = tl_eval(eval_ckpt.c_str(), data.c_str(), eval_batch, &metrics.ptr);
    if (s == TL_OK) std::cout << metrics.ptr << "\n";
    return report(s);
  }

  if (count->parsed()) {
    bool ok = false;
    const std::string spec = read_file(count_config, ok);
    if (!ok) {
      std::cerr << "error: cannot read config " << count_config << "\n";
      return kExitUser;
    }
    OwnedString breakdown;
    const tl_status s = tl_count_params(spec.c_str(), &breakdown.ptr);
    if (s != TL_OK) return report(s);
    std::cout << breakdown.ptr << "\n";
    if (!count_json_only) {
      const nlohmann::json j = nlohmann::json::parse(breakdown.ptr);
      for (const char* key :
           {"embed", "pos_table", "attention", "cls_weights", "mlp", "norms", "head", "total"})
        std::printf("%-12s %lld\n", key, j[key].get<long long>());
    }
    return kExitOk;
  }

  if (grad->parsed()) {
    std::vector<std::string> ops;
    if (grad_op == "all") {
      ops = {"matmul",        "softmax",        "layernorm",
             "cross_entropy", "gelu",           "self_attention",
             "self_attention_causal", "conv2d", "translution2d",
             "translution1d", "translution1d_causal", "alpha",
             "alpha_efficient",       "alpha_noshared", "absolute_pairs",
             "rel_key",       "rel_value",      "rel_scalar",
             "gated",         "rotary",         "vit_micro",
             "gpt_micro"};
    } else {
      ops.push_back(grad_op);
    }
    bool all_pass = true;
    for (const std::string& op : ops) {
      double err = 0;
      const tl_status s = tl_gradcheck(op.c_str(), &err);
      if (s != TL_OK) return report(s);
      const bool pass = err < 1e-4;
      all_pass = all_pass && pass;
      std::cout << nlohmann::json{{"op", op}, {"max_rel_err", err}, {"pass", pass}}.dump() << "\n";
    }
    return all_pass ? kExitOk : kExitInternal;
  }

  if (bench->parsed()) {
    OwnedString out;
    const tl_status s =
        tl_bench_mem(bench_variant.c_str(), bench_n, bench_cprime, bench_c2, &out.ptr);
    if (s == TL_OK) std::cout << out.ptr << "\n";
    return report(s);
  }

  return kExitUser;
}
