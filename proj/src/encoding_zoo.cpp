#include "translution/encoding_zoo.hpp"

#include <algorithm>
#include <cmath>
#include <map>

namespace translution {

namespace {

template <typename T>
struct QKV {
  Tensor<T> q, k, v;
  std::size_t batch, n;
  T scl;
};

template <typename T>
QKV<T> project_qkv(const char* op, const Tensor<T>& f, const ProjectionSet<T>& proj,
                   std::size_t tokens, std::size_t heads, std::size_t batch) {
  if (f.rank() != 2 || batch == 0 || f.extent(0) != batch * tokens)
    throw ShapeError(std::string(op) + ": f must be [B*N, C]");
  const std::size_t cp = proj.out_dim();
  if (heads == 0 || cp % heads != 0)
    throw ShapeError(std::string(op) + ": width " + std::to_string(cp) + " not divisible by " +
                     std::to_string(heads) + " heads");
  QKV<T> out;
  out.q = project(f, proj.wq, proj.bq);
  out.k = project(f, proj.wk, proj.bk);
  out.v = project(f, proj.wv, proj.bv);
  out.batch = batch;
  out.n = tokens;
  out.scl = T(1) / std::sqrt(T(cp / heads));
  return out;
}

template <typename T>
void check_table_rows(const char* op, std::size_t rows, const Grid2D& grid) {
  if (rows != grid.offset_count())
    throw ShapeError(std::string(op) + ": table holds " + std::to_string(rows) +
                     " offsets, grid box has " + std::to_string(grid.offset_count()));
}

}  // namespace

DistanceBuckets distance_buckets(const Grid2D& grid) {
  const std::size_t n = grid.grid_tokens();
  std::map<std::int64_t, std::int32_t> bucket_of;
  const std::int64_t h = static_cast<std::int64_t>(grid.height);
  const std::int64_t w = static_cast<std::int64_t>(grid.width);
  for (std::int64_t dx = -(h - 1); dx <= h - 1; ++dx)
    for (std::int64_t dy = -(w - 1); dy <= w - 1; ++dy) bucket_of[dx * dx + dy * dy] = 0;
  std::int32_t next = 0;
  for (auto& [dist, idx] : bucket_of) idx = next++;

  DistanceBuckets out;
  out.count = bucket_of.size();
  out.tables.n = n;
  out.tables.q_index.resize(n * n);
  out.tables.k_index.resize(n * n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      const Offset2D d = displacement2d(i, j, grid);
      const std::int32_t b = bucket_of.at(d.dx * d.dx + d.dy * d.dy);
      out.tables.q_index[i * n + j] = b;
      out.tables.k_index[i * n + j] = b;
    }
  return out;
}

DistanceBuckets distance_buckets_1d(std::size_t n) {
  DistanceBuckets out;
  out.count = n;  // |delta| in [0, n-1]
  out.tables.n = n;
  out.tables.q_index.resize(n * n);
  out.tables.k_index.resize(n * n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      const std::int32_t b = static_cast<std::int32_t>(std::llabs(
          static_cast<std::int64_t>(i) - static_cast<std::int64_t>(j)));
      out.tables.q_index[i * n + j] = b;
      out.tables.k_index[i * n + j] = b;
    }
  return out;
}

template <typename T>
Tensor<T> attn_relative_key_vector(const Tensor<T>& f, const ProjectionSet<T>& proj,
                                   const RelVectorTable<T>& r, const Grid2D& grid,
                                   std::size_t heads, std::size_t batch) {
  check_table_rows<T>("attn_relative_key_vector", r.r.extent(0), grid);
  QKV<T> qkv = project_qkv("attn_relative_key_vector", f, proj, grid.grid_tokens(), heads, batch);
  const PairTables tables = grid_pair_tables(grid);
  Tensor<T> logits = attn_logits(qkv.q, qkv.k, batch, qkv.n, heads, qkv.scl, false);
  logits = add(logits, relvec_logits(qkv.q, r.r, tables, batch, heads, qkv.scl));
  Tensor<T> alpha = softmax_rows(logits);
  return attn_apply(alpha, qkv.v, batch, qkv.n, heads);
}

template <typename T>
Tensor<T> attn_relative_value_vector(const Tensor<T>& f, const ProjectionSet<T>& proj,
                                     const RelVectorTable<T>& r, const Grid2D& grid,
                                     std::size_t heads, std::size_t batch) {
  check_table_rows<T>("attn_relative_value_vector", r.r.extent(0), grid);
  QKV<T> qkv = project_qkv("attn_relative_value_vector", f, proj, grid.grid_tokens(), heads, batch);
  const PairTables tables = grid_pair_tables(grid);
  Tensor<T> logits = attn_logits(qkv.q, qkv.k, batch, qkv.n, heads, qkv.scl, false);
  Tensor<T> alpha = softmax_rows(logits);
  Tensor<T> out = attn_apply(alpha, qkv.v, batch, qkv.n, heads);
  return add(out, relvec_apply(alpha, r.r, tables, batch, heads));
}

template <typename T>
Tensor<T> attn_relative_scalar_bias(const Tensor<T>& f, const ProjectionSet<T>& proj,
                                    const RelScalarTable<T>& b, const Grid2D& grid,
                                    std::size_t heads, std::size_t batch) {
  check_table_rows<T>("attn_relative_scalar_bias", b.b.extent(0), grid);
  QKV<T> qkv = project_qkv("attn_relative_scalar_bias", f, proj, grid.grid_tokens(), heads, batch);
  const PairTables tables = grid_pair_tables(grid);
  Tensor<T> logits = attn_logits(qkv.q, qkv.k, batch, qkv.n, heads, qkv.scl, false);
  logits = add(logits, pairbias_logits(b.b, tables, batch, heads));
  Tensor<T> alpha = softmax_rows(logits);
  return attn_apply(alpha, qkv.v, batch, qkv.n, heads);
}

template <typename T>
Tensor<T> attn_gated_positional(const Tensor<T>& f, const ProjectionSet<T>& proj,
                                const GateState<T>& gate, const Grid2D& grid, std::size_t heads,
                                std::size_t batch) {
  QKV<T> qkv = project_qkv("attn_gated_positional", f, proj, grid.grid_tokens(), heads, batch);
  const DistanceBuckets dist = distance_buckets(grid);
  if (gate.r_norm.extent(0) != dist.count)
    throw ShapeError("attn_gated_positional: r_norm holds " + std::to_string(gate.r_norm.extent(0)) +
                     " buckets, grid needs " + std::to_string(dist.count));
  Tensor<T> alpha = softmax_rows(attn_logits(qkv.q, qkv.k, batch, qkv.n, heads, qkv.scl, false));
  Tensor<T> bvec = reshape(matmul(gate.r_norm, reshape(gate.w, {gate.w.extent(0), 1})),
                           {dist.count});
  Tensor<T> beta = softmax_rows(pairbias_logits(bvec, dist.tables, batch, heads));
  Tensor<T> mixed = gate_mix(alpha, beta, gate.lambda, batch, qkv.n, heads);
  Tensor<T> xi = row_normalize(mixed);
  return attn_apply(xi, qkv.v, batch, qkv.n, heads);
}

template <typename T>
Tensor<T> attn_rotary(const Tensor<T>& f, const ProjectionSet<T>& proj, const Grid2D& grid,
                      std::size_t heads, std::size_t batch) {
  QKV<T> qkv = project_qkv("attn_rotary", f, proj, grid.grid_tokens(), heads, batch);
  const std::size_t n = grid.grid_tokens();
  std::vector<std::int32_t> xpos(n), ypos(n);
  for (std::size_t t = 0; t < n; ++t) {
    xpos[t] = static_cast<std::int32_t>(t / grid.width);
    ypos[t] = static_cast<std::int32_t>(t % grid.width);
  }
  Tensor<T> qr = rotary_rotate(qkv.q, xpos, ypos, batch, heads);
  Tensor<T> kr = rotary_rotate(qkv.k, xpos, ypos, batch, heads);
  Tensor<T> alpha = softmax_rows(attn_logits(qr, kr, batch, n, heads, qkv.scl, false));
  return attn_apply(alpha, qkv.v, batch, n, heads);
}

template <typename T>
Tensor<T> attn_rotary_seq(const Tensor<T>& f, const ProjectionSet<T>& proj, std::size_t n,
                          std::size_t heads, bool causal, std::size_t batch) {
  QKV<T> qkv = project_qkv("attn_rotary_seq", f, proj, n, heads, batch);
  std::vector<std::int32_t> pos(n);
  for (std::size_t t = 0; t < n; ++t) pos[t] = static_cast<std::int32_t>(t);
  Tensor<T> qr = rotary_rotate(qkv.q, pos, {}, batch, heads);
  Tensor<T> kr = rotary_rotate(qkv.k, pos, {}, batch, heads);
  Tensor<T> alpha = softmax_rows(attn_logits(qr, kr, batch, n, heads, qkv.scl, causal));
  return attn_apply(alpha, qkv.v, batch, n, heads);
}

#define TRANSLUTION_INSTANTIATE(T)                                                                \
  template Tensor<T> attn_relative_key_vector<T>(const Tensor<T>&, const ProjectionSet<T>&,       \
                                                 const RelVectorTable<T>&, const Grid2D&,         \
                                                 std::size_t, std::size_t);                       \
  template Tensor<T> attn_relative_value_vector<T>(const Tensor<T>&, const ProjectionSet<T>&,     \
                                                   const RelVectorTable<T>&, const Grid2D&,       \
                                                   std::size_t, std::size_t);                     \
  template Tensor<T> attn_relative_scalar_bias<T>(const Tensor<T>&, const ProjectionSet<T>&,      \
                                                  const RelScalarTable<T>&, const Grid2D&,        \
                                                  std::size_t, std::size_t);                      \
  template Tensor<T> attn_gated_positional<T>(const Tensor<T>&, const ProjectionSet<T>&,          \
                                              const GateState<T>&, const Grid2D&, std::size_t,    \
                                              std::size_t);                                       \
  template Tensor<T> attn_rotary<T>(const Tensor<T>&, const ProjectionSet<T>&, const Grid2D&,     \
                                    std::size_t, std::size_t);                                    \
  template Tensor<T> attn_rotary_seq<T>(const Tensor<T>&, const ProjectionSet<T>&, std::size_t,   \
                                        std::size_t, bool, std::size_t);

TRANSLUTION_INSTANTIATE(float)
TRANSLUTION_INSTANTIATE(double)

#undef TRANSLUTION_INSTANTIATE

}  // namespace translution
