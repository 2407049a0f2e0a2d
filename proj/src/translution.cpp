#include "translution/translution.hpp"

#include <cmath>
#include <random>

namespace translution {

namespace {

template <typename T>
void check_bank(const char* op, const OffsetBank<T>& bank, std::size_t expected_k, std::size_t c) {
  if (bank.mats.rank() != 3)
    throw ShapeError(std::string(op) + ": bank must be [K,C,C'], got " + bank.mats.shape_str());
  if (bank.mats.extent(0) != expected_k)
    throw ShapeError(std::string(op) + ": bank holds " + std::to_string(bank.mats.extent(0)) +
                     " matrices, geometry needs " + std::to_string(expected_k));
  if (bank.mats.extent(1) != c)
    throw ShapeError(std::string(op) + ": bank input dim " + std::to_string(bank.mats.extent(1)) +
                     " vs features " + std::to_string(c));
}

}  // namespace

template <typename T>
Tensor<T> translution_pairwise(const Tensor<T>& f, const Tensor<T>& qmats, const Tensor<T>& kmats,
                               const Tensor<T>& vmats, const PairTables& tables, std::size_t batch,
                               std::size_t heads) {
  const std::size_t cp = qmats.extent(2);
  if (heads == 0 || cp % heads != 0)
    throw ShapeError("translution_pairwise: width " + std::to_string(cp) + " not divisible by " +
                     std::to_string(heads) + " heads");
  const T scl = T(1) / std::sqrt(T(cp / heads));
  Tensor<T> pq = bank_project(f, qmats);
  Tensor<T> pk = bank_project(f, kmats);
  Tensor<T> pv = bank_project(f, vmats);
  Tensor<T> logits = pair_logits(pq, pk, tables, batch, heads, scl);
  Tensor<T> alpha = softmax_rows(logits);
  return pair_weighted_sum(alpha, pv, tables, batch, heads);
}

template <typename T>
Tensor<T> translution2d(const Tensor<T>& f, const OffsetBank<T>& q, const OffsetBank<T>& k,
                        const OffsetBank<T>& v, const Grid2D& grid, std::size_t heads) {
  if (grid.has_cls)
    throw Error("translution2d: CLS slot present; the model layer owns CLS relative weights");
  if (f.rank() != 2 || f.extent(0) % grid.grid_tokens() != 0)
    throw ShapeError("translution2d: f must be [B*N, C] with N = H*W, got " + f.shape_str());
  const std::size_t batch = f.extent(0) / grid.grid_tokens();
  const std::size_t kk = grid.offset_count();
  check_bank("translution2d", q, kk, f.extent(1));
  check_bank("translution2d", k, kk, f.extent(1));
  check_bank("translution2d", v, kk, f.extent(1));
  const PairTables tables = grid_pair_tables(grid);
  return translution_pairwise(f, q.mats, k.mats, v.mats, tables, batch, heads);
}

template <typename T>
ConvAsTranslution<T> conv_as_translution(const Tensor<T>& kernel, const Grid2D& grid) {
  if (kernel.rank() != 4) throw ShapeError("conv_as_translution: kernel must be [h,w,C,C']");
  const std::size_t kh = kernel.extent(0), kw = kernel.extent(1);
  const std::size_t c = kernel.extent(2), cp = kernel.extent(3);
  if (kh % 2 == 0 || kw % 2 == 0)
    throw Error("conv_as_translution: even kernel extent");
  if (kh > 2 * grid.height - 1 || kw > 2 * grid.width - 1)
    throw Error("conv_as_translution: kernel " + std::to_string(kh) + "x" + std::to_string(kw) +
                " exceeds the offset box of a " + std::to_string(grid.height) + "x" +
                std::to_string(grid.width) + " grid");
  const std::int64_t rh = static_cast<std::int64_t>(kh) / 2;
  const std::int64_t rw = static_cast<std::int64_t>(kw) / 2;
  const std::size_t n = grid.grid_tokens();

  ConvAsTranslution<T> out;
  out.value.role = BankRole::Value;
  out.value.mats = Tensor<T>::zeros({grid.offset_count(), c, cp});
  // conv reads f at position + (dx,dy); the pair offset is pos_i - pos_j, so
  // the tap (dx,dy) lands in the bank at the negated offset.
  for (std::int64_t dx = -rh; dx <= rh; ++dx)
    for (std::int64_t dy = -rw; dy <= rw; ++dy) {
      const std::size_t slot = offset_index2d({-dx, -dy}, grid.height, grid.width);
      const T* src = kernel.data() +
                     ((static_cast<std::size_t>(dx + rh)) * kw + static_cast<std::size_t>(dy + rw)) * c * cp;
      std::copy(src, src + c * cp, out.value.mats.data() + slot * c * cp);
    }

  out.indicator = Tensor<T>::zeros({n, n});
  T* pi = out.indicator.data();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      const Offset2D d = displacement2d(i, j, grid);
      if (-d.dx >= -rh && -d.dx <= rh && -d.dy >= -rw && -d.dy <= rw) pi[i * n + j] = T(1);
    }
  return out;
}

template <typename T>
Tensor<T> fixed_attention_apply(const Tensor<T>& attention, const Tensor<T>& f,
                                const OffsetBank<T>& value, const Grid2D& grid) {
  const std::size_t n = grid.grid_tokens();
  if (attention.rank() != 2 || attention.extent(0) != n || attention.extent(1) != n)
    throw ShapeError("fixed_attention_apply: attention must be [N,N]");
  if (f.rank() != 2 || f.extent(0) != n)
    throw ShapeError("fixed_attention_apply: f must be [N,C]");
  check_bank("fixed_attention_apply", value, grid.offset_count(), f.extent(1));
  const PairTables tables = grid_pair_tables(grid);
  Tensor<T> pv = bank_project(f, value.mats);
  Tensor<T> alpha = reshape(attention, {1, 1, n, n});
  return pair_weighted_sum(alpha, pv, tables, std::size_t(1), std::size_t(1));
}

template <typename T>
Tensor<T> alpha_translution_pairwise(const Tensor<T>& f, const AlphaFactors<T>& factors,
                                     const PairTables& tables, std::size_t batch, std::size_t heads,
                                     bool use_shared, bool efficient) {
  const std::size_t n = tables.n;
  const std::size_t d1 = factors.dim1();
  const std::size_t d2 = factors.dim2();
  const bool has_rel = d1 > 0 && d2 > 0;
  if (!use_shared && !has_rel) throw Error("degenerate operator has no parameters");

  const std::size_t cp = use_shared ? factors.shared.out_dim() : factors.wv2.extent(1);
  if (heads == 0 || cp % heads != 0)
    throw ShapeError("alpha_translution: width " + std::to_string(cp) + " not divisible by " +
                     std::to_string(heads) + " heads");
  const T scl = T(1) / std::sqrt(T(cp / heads));

  // attention logits: relative factor dot products plus (optionally) the
  // shared q/k terms, scaled as one sum
  Tensor<T> logits;
  if (has_rel) {
    Tensor<T> p1q = matmul(f, factors.wq1);
    Tensor<T> p1k = matmul(f, factors.wk1);
    Tensor<T> pq = bank_project(p1q, factors.qbank);
    Tensor<T> pk = bank_project(p1k, factors.kbank);
    logits = pair_logits(pq, pk, tables, batch, heads, scl);
  }
  if (use_shared) {
    Tensor<T> q = project(f, factors.shared.wq, factors.shared.bq);
    Tensor<T> k = project(f, factors.shared.wk, factors.shared.bk);
    Tensor<T> shared_logits = attn_logits(q, k, batch, n, heads, scl, false);
    logits = has_rel ? add(logits, shared_logits) : shared_logits;
  }
  Tensor<T> alpha = softmax_rows(logits);

  // value path
  if (!efficient) {
    if (has_rel) {
      const Tensor<T>* shared_w = use_shared ? &factors.shared.wv : nullptr;
      Tensor<T> composed = bank_compose(factors.wv1, factors.vbank, factors.wv2, shared_w);
      Tensor<T> vp = pair_project(f, composed, tables, batch);  // [B,N,N,C'] pair values
      Tensor<T> out = pair_apply(alpha, vp, batch, heads);
      if (use_shared && factors.shared.bv.defined()) out = add_rowvec(out, factors.shared.bv);
      return out;
    }
    Tensor<T> v = project(f, factors.shared.wv, factors.shared.bv);
    return attn_apply(alpha, v, batch, n, heads);
  }

  Tensor<T> out;
  if (has_rel) {
    Tensor<T> p1v = matmul(f, factors.wv1);
    Tensor<T> r = pair_project(p1v, factors.vbank, tables, batch);   // [B,N,N,d2]
    Tensor<T> s = pair_contract(alpha, r, batch, n, heads);          // [B,H,N,d2]
    if (use_shared) {
      Tensor<T> v = project(f, factors.shared.wv, factors.shared.bv);
      out = alpha_value_combine(&alpha, &v, s, factors.wv2, batch, n, heads);
    } else {
      out = alpha_value_combine<T>(nullptr, nullptr, s, factors.wv2, batch, n, heads);
    }
  } else {
    Tensor<T> v = project(f, factors.shared.wv, factors.shared.bv);
    out = attn_apply(alpha, v, batch, n, heads);
  }
  return out;
}

template <typename T>
Tensor<T> alpha_translution2d(const Tensor<T>& f, const AlphaFactors<T>& factors,
                              const Grid2D& grid, std::size_t heads, bool use_shared,
                              const PosEmbedTable<T>* input_pos_embed, bool efficient) {
  if (grid.has_cls) throw Error("alpha_translution2d: CLS slot is handled by the model layer");
  if (f.rank() != 2 || f.extent(0) % grid.grid_tokens() != 0)
    throw ShapeError("alpha_translution2d: f must be [B*N, C], got " + f.shape_str());
  const std::size_t batch = f.extent(0) / grid.grid_tokens();
  if (factors.dim1() > 0 && factors.qbank.extent(0) != grid.offset_count())
    throw ShapeError("alpha_translution2d: bank holds " + std::to_string(factors.qbank.extent(0)) +
                     " matrices, geometry needs " + std::to_string(grid.offset_count()));
  Tensor<T> x = f;
  if (input_pos_embed) x = absolute_position_embed(f, *input_pos_embed, batch);
  const PairTables tables = grid_pair_tables(grid);
  return alpha_translution_pairwise(x, factors, tables, batch, heads, use_shared, efficient);
}

template <typename T>
Tensor<T> alpha_translution2d_efficient(const Tensor<T>& f, const AlphaFactors<T>& factors,
                                        const Grid2D& grid, std::size_t heads, bool use_shared,
                                        const PosEmbedTable<T>* input_pos_embed) {
  return alpha_translution2d(f, factors, grid, heads, use_shared, input_pos_embed, true);
}

template <typename T>
Tensor<T> translution2d_absolute_pairs(const Tensor<T>& f, const OffsetBank<T>& q,
                                       const OffsetBank<T>& k, const OffsetBank<T>& v,
                                       std::size_t heads) {
  if (f.rank() != 2) throw ShapeError("translution2d_absolute_pairs: f must be [N,C]");
  const std::size_t n = f.extent(0);
  check_bank("translution2d_absolute_pairs", q, n * n, f.extent(1));
  check_bank("translution2d_absolute_pairs", k, n * n, f.extent(1));
  check_bank("translution2d_absolute_pairs", v, n * n, f.extent(1));
  const PairTables tables = absolute_pair_tables(n);
  return translution_pairwise(f, q.mats, k.mats, v.mats, tables, std::size_t(1), heads);
}

MemBenchResult mem_bench_value_path(bool efficient, std::size_t n, std::size_t cprime,
                                    std::size_t c2) {
  if (n < 1 || cprime < 1 || c2 < 1) throw Error("mem_bench_value_path: dims must be positive");
  using F = float;
  const std::size_t c = cprime;
  const PairTables tables = seq_pair_tables(n, n, false);
  const std::size_t kk = 2 * n - 1;

  std::mt19937_64 rng(7);
  auto fill = [&rng](Tensor<F>& t) {
    std::normal_distribution<double> dist(0.0, 0.25);
    for (std::size_t i = 0; i < t.size(); ++i) t.data()[i] = static_cast<F>(dist(rng));
  };
  Tensor<F> f({n, c});
  Tensor<F> wv({c, cprime});
  Tensor<F> wv1({c, c2});
  Tensor<F> vbank({kk, c2, c2});
  Tensor<F> wv2({c2, cprime});
  fill(f);
  fill(wv);
  fill(wv1);
  fill(vbank);
  fill(wv2);

  NoGradGuard ng;
  Tensor<F> alpha;
  {
    Tensor<F> logits({1, 1, n, n});
    fill(logits);
    alpha = softmax_rows(logits);
  }

  MemBenchResult result;
  if (!efficient) {
    Tensor<F> composed = bank_compose(wv1, vbank, wv2, &wv);  // weight preprocessing
    MeterScope scope;
    Tensor<F> out;
    {
      Tensor<F> vp = pair_project(f, composed, tables, 1);
      out = pair_apply(alpha, vp, 1, 1);
    }
    result.metered_peak = scope.peak();
    result.predicted = static_cast<long long>(n * n * cprime);
  } else {
    MeterScope scope;
    Tensor<F> s;
    {
      Tensor<F> r = pair_project(matmul(f, wv1), vbank, tables, 1);
      s = pair_contract(alpha, r, 1, n, 1);
    }
    Tensor<F> v = matmul(f, wv);
    Tensor<F> out = alpha_value_combine(&alpha, &v, s, wv2, 1, n, 1);
    result.metered_peak = scope.peak();
    result.predicted = static_cast<long long>(n * cprime + n * n * c2);
  }
  return result;
}

template <typename T>
Tensor<T> general_translution_apply(const Tensor<T>& f, const Grid2D& grid,
                                    const GeneralTranslution<T>& fns) {
  if (grid.has_cls) throw Error("general_translution_apply: grid only");
  if (f.rank() != 2 || f.extent(0) != grid.grid_tokens())
    throw ShapeError("general_translution_apply: f must be [N,C]");
  const std::size_t n = grid.grid_tokens();
  const std::size_t c = f.extent(1);
  const std::size_t cp = fns.out_dim;
  const T* pf = f.data();

  Tensor<T> logits({n, n});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      const Offset2D d = displacement2d(i, j, grid);
      logits.data()[i * n + j] = fns.score(d, pf + i * c, pf + j * c, c);
    }
  Tensor<T> alpha = softmax_rows(logits);

  Tensor<T> out = Tensor<T>::zeros({n, cp});
  for (std::size_t i = 0; i < n; ++i) {
    T* orow = out.data() + i * cp;
    for (std::size_t j = 0; j < n; ++j) {
      const T a = alpha.data()[i * n + j];
      if (a == T(0)) continue;
      const Offset2D d = displacement2d(i, j, grid);
      const std::vector<T> v = fns.value(d, pf + j * c, c);
      if (v.size() != cp) throw ShapeError("general_translution_apply: value dim mismatch");
      for (std::size_t t = 0; t < cp; ++t) orow[t] += a * v[t];
    }
  }
  return out;
}

#define TRANSLUTION_INSTANTIATE(T)                                                                 \
  template Tensor<T> translution_pairwise<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, \
                                             const Tensor<T>&, const PairTables&, std::size_t,     \
                                             std::size_t);                                         \
  template Tensor<T> translution2d<T>(const Tensor<T>&, const OffsetBank<T>&, const OffsetBank<T>&,\
                                      const OffsetBank<T>&, const Grid2D&, std::size_t);           \
  template ConvAsTranslution<T> conv_as_translution<T>(const Tensor<T>&, const Grid2D&);           \
  template Tensor<T> fixed_attention_apply<T>(const Tensor<T>&, const Tensor<T>&,                  \
                                              const OffsetBank<T>&, const Grid2D&);                \
  template Tensor<T> alpha_translution_pairwise<T>(const Tensor<T>&, const AlphaFactors<T>&,       \
                                                   const PairTables&, std::size_t, std::size_t,    \
                                                   bool, bool);                                    \
  template Tensor<T> alpha_translution2d<T>(const Tensor<T>&, const AlphaFactors<T>&,              \
                                            const Grid2D&, std::size_t, bool,                      \
                                            const PosEmbedTable<T>*, bool);                        \
  template Tensor<T> alpha_translution2d_efficient<T>(const Tensor<T>&, const AlphaFactors<T>&,    \
                                                      const Grid2D&, std::size_t, bool,            \
                                                      const PosEmbedTable<T>*);                    \
  template Tensor<T> translution2d_absolute_pairs<T>(const Tensor<T>&, const OffsetBank<T>&,       \
                                                     const OffsetBank<T>&, const OffsetBank<T>&,   \
                                                     std::size_t);                                 \
  template Tensor<T> general_translution_apply<T>(const Tensor<T>&, const Grid2D&,                 \
                                                  const GeneralTranslution<T>&);

TRANSLUTION_INSTANTIATE(float)
TRANSLUTION_INSTANTIATE(double)

#undef TRANSLUTION_INSTANTIATE

}  // namespace translution
