#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>

#include "translution/data.hpp"
#include "translution/sprites.hpp"

using namespace translution;

TEST_CASE("idx round trip and error paths") {
  IdxImages sprites = make_sprites(2, 9);
  const std::string img_path = "/tmp/tl_idx_test_images";
  const std::string lbl_path = "/tmp/tl_idx_test_labels";
  write_idx_images(img_path, sprites.images);
  write_idx_labels(lbl_path, sprites.labels);

  IdxImages loaded = read_idx(img_path, lbl_path);
  CHECK(loaded.images.shape() == std::vector<std::size_t>{2, 28, 28});
  CHECK(loaded.labels == sprites.labels);
  for (std::size_t i = 0; i < loaded.images.size(); ++i) {
    CHECK(loaded.images.data()[i] >= 0.0f);
    CHECK(loaded.images.data()[i] <= 1.0f);
  }

  // truncated payload reports expected vs found byte counts
  {
    std::ifstream in(img_path, std::ios::binary);
    std::vector<char> bytes((std::istreambuf_iterator<char>(in)), {});
    bytes.resize(bytes.size() - 100);
    std::ofstream out(img_path + ".trunc", std::ios::binary);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  }
  CHECK_THROWS_WITH_AS(read_idx_images(img_path + ".trunc"), doctest::Contains("expected"), Error);

  // bad magic
  {
    std::ofstream out(img_path + ".bad", std::ios::binary);
    const char junk[8] = {0, 0, 9, 9, 0, 0, 0, 1};
    out.write(junk, 8);
  }
  CHECK_THROWS_WITH_AS(read_idx_images(img_path + ".bad"), doctest::Contains("magic"), Error);

  // label count mismatch
  write_idx_labels(lbl_path + ".short", {1});
  CHECK_THROWS_AS(read_idx(img_path, lbl_path + ".short"), Error);

  for (const char* suffix : {"", ".trunc", ".bad"}) std::remove((img_path + suffix).c_str());
  std::remove(lbl_path.c_str());
  std::remove((lbl_path + ".short").c_str());
}

TEST_CASE("static placement centers every sprite and ignores the seed") {
  IdxImages sprites = make_sprites(6, 11);
  CanvasDataset a = synth_canvas(sprites.images, sprites.labels, "static", 84, 1);
  CanvasDataset b = synth_canvas(sprites.images, sprites.labels, "static", 84, 2);
  REQUIRE(a.images.size() == b.images.size());
  for (std::size_t i = 0; i < a.images.size(); ++i)
    CHECK(a.images.data()[i] == b.images.data()[i]);  // bit-equal across seeds

  // the sprite occupies exactly the centered 28x28 window
  for (std::size_t i = 0; i < 6; ++i)
    for (std::size_t x = 0; x < 84; ++x)
      for (std::size_t y = 0; y < 84; ++y) {
        const float v = a.images.data()[(i * 84 + x) * 84 + y];
        const bool inside = x >= 28 && x < 56 && y >= 28 && y < 56;
        if (!inside) CHECK(v == 0.0f);
        if (inside)
          CHECK(v == sprites.images.data()[(i * 28 + (x - 28)) * 28 + (y - 28)]);
      }
}

TEST_CASE("dynamic placement is deterministic and never clips") {
  IdxImages sprites = make_sprites(64, 21);
  CanvasDataset a = synth_canvas(sprites.images, sprites.labels, "dynamic", 84, 7);
  CanvasDataset b = synth_canvas(sprites.images, sprites.labels, "dynamic", 84, 7);
  for (std::size_t i = 0; i < a.images.size(); ++i)
    CHECK(a.images.data()[i] == b.images.data()[i]);

  // nonzero pixels always sit inside the canvas (never clipped) and each
  // sprite's mass is preserved
  for (std::size_t i = 0; i < 64; ++i) {
    double canvas_sum = 0, sprite_sum = 0;
    for (std::size_t p = 0; p < 84 * 84; ++p) canvas_sum += a.images.data()[i * 84 * 84 + p];
    for (std::size_t p = 0; p < 28 * 28; ++p) sprite_sum += sprites.images.data()[i * 28 * 28 + p];
    CHECK(canvas_sum == doctest::Approx(sprite_sum).epsilon(1e-6));
  }
}

TEST_CASE("dynamic top-left marginals are uniform (chi-square)") {
  // 10000 samples over 57 possible offsets per axis; threshold is the 0.99
  // quantile of chi-square with 56 degrees of freedom
  const std::size_t count = 10000;
  Tensor<float> sprites = Tensor<float>::zeros({count, 28, 28});
  for (std::size_t i = 0; i < count; ++i) sprites.data()[i * 28 * 28] = 1.0f;  // corner marker
  std::vector<std::int64_t> labels(count, 0);
  CanvasDataset ds = synth_canvas(sprites, labels, "dynamic", 84, 123);

  std::vector<std::size_t> count_x(57, 0), count_y(57, 0);
  for (std::size_t i = 0; i < count; ++i) {
    bool found = false;
    for (std::size_t x = 0; x < 84 && !found; ++x)
      for (std::size_t y = 0; y < 84 && !found; ++y)
        if (ds.images.data()[(i * 84 + x) * 84 + y] > 0.5f) {
          ++count_x[x];
          ++count_y[y];
          found = true;
        }
    REQUIRE(found);
  }
  const double expected = static_cast<double>(count) / 57.0;
  double chi_x = 0, chi_y = 0;
  for (std::size_t k = 0; k < 57; ++k) {
    chi_x += (count_x[k] - expected) * (count_x[k] - expected) / expected;
    chi_y += (count_y[k] - expected) * (count_y[k] - expected) / expected;
  }
  const double crit = 83.513;  // chi2.ppf(0.99, 56)
  CHECK(chi_x < crit);
  CHECK(chi_y < crit);
}

TEST_CASE("sprite oversize and canvas equality edge") {
  IdxImages sprites = make_sprites(3, 31);
  CHECK_THROWS_AS(synth_canvas(sprites.images, sprites.labels, "dynamic", 20, 0), Error);
  // canvas == sprite leaves a single placement: dynamic degenerates to static
  CanvasDataset dyn = synth_canvas(sprites.images, sprites.labels, "dynamic", 28, 9);
  CanvasDataset sta = synth_canvas(sprites.images, sprites.labels, "static", 28, 1);
  for (std::size_t i = 0; i < dyn.images.size(); ++i)
    CHECK(dyn.images.data()[i] == sta.images.data()[i]);
}

TEST_CASE("dataset container round trip") {
  IdxImages sprites = make_sprites(5, 41);
  CanvasDataset ds = synth_canvas(downsample2x(sprites.images), sprites.labels, "dynamic", 28, 3);
  const std::string path = "/tmp/tl_ds_test.tlsn";
  save_dataset(ds, path);
  CanvasDataset back = load_dataset(path);
  CHECK(back.mode == "dynamic");
  CHECK(back.seed == 3);
  CHECK(back.labels == ds.labels);
  for (std::size_t i = 0; i < ds.images.size(); ++i)
    CHECK(back.images.data()[i] == ds.images.data()[i]);
  std::remove(path.c_str());
  std::remove((path + ".json").c_str());
}

TEST_CASE("copy task construction") {
  CopyBatch b = lm_task_copy(5, 8, 16, 3);
  REQUIRE(b.inputs.size() == 24);
  for (std::size_t s = 0; s < 3; ++s) {
    const std::int64_t* row = b.inputs.data() + s * 8;
    for (std::size_t t = 0; t < 4; ++t) CHECK(row[t + 4] == row[t]);  // second half repeats
    for (std::size_t t = 0; t + 1 < 8; ++t) CHECK(b.targets[s * 8 + t] == row[t + 1]);
  }
  CopyBatch again = lm_task_copy(5, 8, 16, 3);
  CHECK(again.inputs == b.inputs);

  CHECK_THROWS_AS(lm_task_copy(5, 7, 16, 1), Error);  // odd length
}

TEST_CASE("perplexity examples") {
  // uniform logits over K classes -> perplexity K
  Tensor<double> uniform = Tensor<double>::zeros({6, 10});
  std::vector<std::int64_t> targets{0, 1, 2, 3, 4, 5};
  CHECK(perplexity(uniform, targets) == doctest::Approx(10.0).epsilon(1e-6));

  // perfect predictions -> 1
  Tensor<double> hot = Tensor<double>::zeros({4, 5});
  std::vector<std::int64_t> t2{0, 2, 4, 1};
  for (std::size_t i = 0; i < 4; ++i) hot.data()[i * 5 + t2[i]] = 1000.0;
  CHECK(perplexity(hot, t2) == doctest::Approx(1.0).epsilon(1e-9));

  CHECK_THROWS_AS(perplexity(Tensor<double>({0, 5}), {}), Error);

  // random fixture equals exp(mean(CE)) composed by hand
  std::mt19937_64 rng(7);
  std::normal_distribution<double> dist(0, 1);
  Tensor<double> logits({5, 7});
  for (std::size_t i = 0; i < logits.size(); ++i) logits.data()[i] = dist(rng);
  std::vector<std::int64_t> t3{1, 0, 6, 3, 2};
  double ce = 0;
  for (std::size_t i = 0; i < 5; ++i) {
    double denom = 0;
    for (std::size_t j = 0; j < 7; ++j) denom += std::exp(logits.data()[i * 7 + j]);
    ce += -std::log(std::exp(logits.data()[i * 7 + t3[i]]) / denom);
  }
  CHECK(perplexity(logits, t3) == doctest::Approx(std::exp(ce / 5)).epsilon(1e-10));
}

TEST_CASE("copy-task information content at the optimum") {
  // a perfect predictor on the determined half reaches 1.0; a clueless one on
  // the first half pays the full vocabulary
  const std::size_t seq = 8, vocab = 16;
  CopyBatch b = lm_task_copy(3, seq, vocab, 2);
  Tensor<double> logits = Tensor<double>::zeros({2 * seq, vocab});
  for (std::size_t s = 0; s < 2; ++s)
    for (std::size_t t = seq / 2 - 1; t + 1 < seq; ++t)
      logits.data()[(s * seq + t) * vocab + b.targets[s * seq + t]] = 1000.0;
  CHECK(perplexity_second_half(logits, b.targets, seq) == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("sprites cover all ten classes with deterministic output") {
  IdxImages a = make_sprites(300, 17);
  IdxImages b = make_sprites(300, 17);
  for (std::size_t i = 0; i < a.images.size(); ++i)
    CHECK(a.images.data()[i] == b.images.data()[i]);
  std::vector<std::size_t> counts(10, 0);
  for (std::int64_t l : a.labels) ++counts[static_cast<std::size_t>(l)];
  for (std::size_t c = 0; c < 10; ++c) CHECK(counts[c] > 0);
}
