#include "translution/data.hpp"

#include <json.hpp>

#include <cmath>
#include <fstream>

#include "translution/checkpoint.hpp"

namespace translution {

namespace {

std::uint32_t read_be32(std::ifstream& is, const std::string& path) {
  unsigned char b[4];
  if (!is.read(reinterpret_cast<char*>(b), 4)) throw Error("idx " + path + ": truncated header");
  return (std::uint32_t(b[0]) << 24) | (std::uint32_t(b[1]) << 16) | (std::uint32_t(b[2]) << 8) |
         std::uint32_t(b[3]);
}

void write_be32(std::ofstream& os, std::uint32_t v) {
  const unsigned char b[4] = {static_cast<unsigned char>(v >> 24),
                              static_cast<unsigned char>(v >> 16),
                              static_cast<unsigned char>(v >> 8), static_cast<unsigned char>(v)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

}  // namespace

Tensor<float> read_idx_images(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("idx: cannot open " + path);
  const std::uint32_t magic = read_be32(is, path);
  if (magic != 0x00000803u)
    throw Error("idx " + path + ": bad magic for image file");
  const std::uint32_t count = read_be32(is, path);
  const std::uint32_t rows = read_be32(is, path);
  const std::uint32_t cols = read_be32(is, path);
  const std::size_t expected = std::size_t(count) * rows * cols;
  std::vector<unsigned char> bytes(expected);
  is.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(expected));
  const std::size_t got = static_cast<std::size_t>(is.gcount());
  if (got != expected)
    throw Error("idx " + path + ": expected " + std::to_string(expected) + " bytes, found " +
                std::to_string(got));
  Tensor<float> out({count, rows, cols});
  for (std::size_t i = 0; i < expected; ++i) out.data()[i] = static_cast<float>(bytes[i]) / 255.0f;
  return out;
}

std::vector<std::int64_t> read_idx_labels(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("idx: cannot open " + path);
  const std::uint32_t magic = read_be32(is, path);
  if (magic != 0x00000801u)
    throw Error("idx " + path + ": bad magic for label file");
  const std::uint32_t count = read_be32(is, path);
  std::vector<unsigned char> bytes(count);
  is.read(reinterpret_cast<char*>(bytes.data()), count);
  const std::size_t got = static_cast<std::size_t>(is.gcount());
  if (got != count)
    throw Error("idx " + path + ": expected " + std::to_string(count) + " bytes, found " +
                std::to_string(got));
  return std::vector<std::int64_t>(bytes.begin(), bytes.end());
}

IdxImages read_idx(const std::string& image_path, const std::string& label_path) {
  IdxImages out;
  out.images = read_idx_images(image_path);
  out.labels = read_idx_labels(label_path);
  if (out.images.extent(0) != out.labels.size())
    throw Error("idx: " + std::to_string(out.images.extent(0)) + " images but " +
                std::to_string(out.labels.size()) + " labels");
  return out;
}

void write_idx_images(const std::string& path, const Tensor<float>& images) {
  if (images.rank() != 3) throw ShapeError("write_idx_images: images must be [M,rows,cols]");
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw Error("idx: cannot open " + path + " for writing");
  write_be32(os, 0x00000803u);
  write_be32(os, static_cast<std::uint32_t>(images.extent(0)));
  write_be32(os, static_cast<std::uint32_t>(images.extent(1)));
  write_be32(os, static_cast<std::uint32_t>(images.extent(2)));
  for (std::size_t i = 0; i < images.size(); ++i) {
    const float v = std::min(1.0f, std::max(0.0f, images.data()[i]));
    const unsigned char b = static_cast<unsigned char>(std::lround(v * 255.0f));
    os.write(reinterpret_cast<const char*>(&b), 1);
  }
}

void write_idx_labels(const std::string& path, const std::vector<std::int64_t>& labels) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw Error("idx: cannot open " + path + " for writing");
  write_be32(os, 0x00000801u);
  write_be32(os, static_cast<std::uint32_t>(labels.size()));
  for (std::int64_t l : labels) {
    const unsigned char b = static_cast<unsigned char>(l);
    os.write(reinterpret_cast<const char*>(&b), 1);
  }
}

Tensor<float> downsample2x(const Tensor<float>& images) {
  if (images.rank() != 3 || images.extent(1) % 2 != 0 || images.extent(2) % 2 != 0)
    throw ShapeError("downsample2x: images must be [M,2r,2c]");
  const std::size_t m = images.extent(0), r = images.extent(1) / 2, c = images.extent(2) / 2;
  Tensor<float> out({m, r, c});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t x = 0; x < r; ++x)
      for (std::size_t y = 0; y < c; ++y) {
        const float* base = images.data() + (i * 2 * r + 2 * x) * 2 * c + 2 * y;
        out.data()[(i * r + x) * c + y] =
            (base[0] + base[1] + base[2 * c] + base[2 * c + 1]) / 4.0f;
      }
  return out;
}

CanvasDataset synth_canvas(const Tensor<float>& sprites, const std::vector<std::int64_t>& labels,
                           const std::string& mode, std::size_t canvas, std::uint64_t seed) {
  if (sprites.rank() != 3) throw ShapeError("synth_canvas: sprites must be [M,s,s]");
  if (mode != "static" && mode != "dynamic")
    throw Error("synth_canvas: mode must be 'static' or 'dynamic'");
  const std::size_t m = sprites.extent(0);
  const std::size_t sr = sprites.extent(1), sc = sprites.extent(2);
  if (labels.size() != m) throw Error("synth_canvas: label count mismatch");
  if (sr > canvas || sc > canvas)
    throw Error("synth_canvas: sprite " + std::to_string(sr) + "x" + std::to_string(sc) +
                " exceeds canvas " + std::to_string(canvas));

  CanvasDataset ds;
  ds.mode = mode;
  ds.seed = seed;
  ds.labels = labels;
  ds.images = Tensor<float>::zeros({m, canvas, canvas});
  const std::size_t range_x = canvas - sr + 1;
  const std::size_t range_y = canvas - sc + 1;
  for (std::size_t i = 0; i < m; ++i) {
    std::size_t top, left;
    if (mode == "static") {
      top = (canvas - sr) / 2;
      left = (canvas - sc) / 2;
    } else {
      // per-index derived stream keeps generation order-independent
      Rng rng(seed ^ static_cast<std::uint64_t>(i));
      top = static_cast<std::size_t>(rng.below(range_x));
      left = static_cast<std::size_t>(rng.below(range_y));
    }
    for (std::size_t x = 0; x < sr; ++x)
      for (std::size_t y = 0; y < sc; ++y)
        ds.images.data()[(i * canvas + top + x) * canvas + left + y] =
            sprites.data()[(i * sr + x) * sc + y];
  }
  return ds;
}

void save_dataset(const CanvasDataset& ds, const std::string& path) {
  std::vector<CheckpointEntry> entries;
  entries.push_back({"images", ds.images.clone()});
  Tensor<float> labels({ds.labels.size()});
  for (std::size_t i = 0; i < ds.labels.size(); ++i)
    labels.data()[i] = static_cast<float>(ds.labels[i]);
  entries.push_back({"labels", std::move(labels)});
  write_checkpoint(path, entries);

  nlohmann::json side{{"mode", ds.mode}, {"canvas", ds.canvas()}, {"seed", ds.seed}};
  std::ofstream os(path + ".json", std::ios::trunc);
  if (!os) throw Error("save_dataset: cannot write " + path + ".json");
  os << side.dump(2) << "\n";
}

CanvasDataset load_dataset(const std::string& path) {
  std::vector<CheckpointEntry> entries = read_checkpoint(path);
  CanvasDataset ds;
  for (CheckpointEntry& e : entries) {
    if (e.name == "images") ds.images = std::get<Tensor<float>>(e.tensor);
    if (e.name == "labels") {
      const Tensor<float>& l = std::get<Tensor<float>>(e.tensor);
      ds.labels.resize(l.size());
      for (std::size_t i = 0; i < l.size(); ++i)
        ds.labels[i] = static_cast<std::int64_t>(std::lround(l.data()[i]));
    }
  }
  if (!ds.images.defined() || ds.labels.empty())
    throw Error("load_dataset: " + path + " lacks images/labels entries");
  std::ifstream side(path + ".json");
  if (side) {
    nlohmann::json j;
    side >> j;
    ds.mode = j.value("mode", ds.mode);
    ds.seed = j.value("seed", ds.seed);
  }
  return ds;
}

CopyBatch lm_task_copy(std::uint64_t seed, std::size_t seq_len, std::size_t vocab,
                       std::size_t batch) {
  if (seq_len % 2 != 0) throw Error("lm_task_copy: seq_len must be even");
  if (vocab < 2) throw Error("lm_task_copy: vocab too small");
  CopyBatch out;
  out.inputs.resize(batch * seq_len);
  out.targets.resize(batch * seq_len);
  const std::size_t half = seq_len / 2;
  for (std::size_t b = 0; b < batch; ++b) {
    Rng rng(seed ^ static_cast<std::uint64_t>(b));
    std::int64_t* row = out.inputs.data() + b * seq_len;
    for (std::size_t t = 0; t < half; ++t) row[t] = static_cast<std::int64_t>(rng.below(vocab));
    for (std::size_t t = half; t < seq_len; ++t) row[t] = row[t - half];
    std::int64_t* tgt = out.targets.data() + b * seq_len;
    for (std::size_t t = 0; t + 1 < seq_len; ++t) tgt[t] = row[t + 1];
    tgt[seq_len - 1] = row[0];  // wrap; the final position is excluded from metrics
  }
  return out;
}

template <typename T>
double perplexity(const Tensor<T>& logits, const std::vector<std::int64_t>& targets) {
  if (logits.rank() != 2) throw ShapeError("perplexity: logits must be [N,K]");
  const std::size_t n = logits.extent(0), k = logits.extent(1);
  if (targets.size() != n) throw Error("perplexity: stream length mismatch");
  if (n == 0) throw Error("perplexity: empty stream");
  double ce = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const T* row = logits.data() + i * k;
    double mx = row[0];
    for (std::size_t j = 1; j < k; ++j) mx = std::max(mx, static_cast<double>(row[j]));
    double sum = 0;
    for (std::size_t j = 0; j < k; ++j) sum += std::exp(static_cast<double>(row[j]) - mx);
    ce += mx + std::log(sum) - static_cast<double>(row[targets[i]]);
  }
  return std::exp(ce / static_cast<double>(n));
}

template <typename T>
double perplexity_second_half(const Tensor<T>& logits, const std::vector<std::int64_t>& targets,
                              std::size_t seq_len) {
  const std::size_t n = logits.extent(0), k = logits.extent(1);
  if (targets.size() != n || n % seq_len != 0)
    throw Error("perplexity_second_half: stream length mismatch");
  const std::size_t half = seq_len / 2;
  // positions half-1 .. seq_len-2 predict the repeated half
  std::vector<std::size_t> keep;
  for (std::size_t b = 0; b < n / seq_len; ++b)
    for (std::size_t t = half - 1; t + 1 < seq_len; ++t) keep.push_back(b * seq_len + t);
  Tensor<T> sel({keep.size(), k});
  std::vector<std::int64_t> sel_t(keep.size());
  for (std::size_t i = 0; i < keep.size(); ++i) {
    std::copy(logits.data() + keep[i] * k, logits.data() + (keep[i] + 1) * k, sel.data() + i * k);
    sel_t[i] = targets[keep[i]];
  }
  return perplexity(sel, sel_t);
}

template double perplexity<float>(const Tensor<float>&, const std::vector<std::int64_t>&);
template double perplexity<double>(const Tensor<double>&, const std::vector<std::int64_t>&);
template double perplexity_second_half<float>(const Tensor<float>&,
                                              const std::vector<std::int64_t>&, std::size_t);
template double perplexity_second_half<double>(const Tensor<double>&,
                                               const std::vector<std::int64_t>&, std::size_t);

}  // namespace translution
