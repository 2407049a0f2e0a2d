#include "translution/attention.hpp"

#include <cmath>

namespace translution {

template <typename T>
Tensor<T> absolute_position_embed(const Tensor<T>& x, const PosEmbedTable<T>& table,
                                  std::size_t batch) {
  if (x.rank() != 2) throw ShapeError("absolute_position_embed: x must be [B*N, C]");
  if (batch == 0 || x.extent(0) % batch != 0) throw ShapeError("absolute_position_embed: bad batch");
  const std::size_t n = x.extent(0) / batch;
  if (table.table.rank() != 2 || table.table.extent(1) != x.extent(1))
    throw ShapeError(shapes_msg("absolute_position_embed", x.shape_str(), table.table.shape_str()));
  if (n > table.table.extent(0))
    throw Error("absolute_position_embed: sequence length " + std::to_string(n) +
                " exceeds table rows " + std::to_string(table.table.extent(0)));
  Tensor<T> prefix = slice_rows(table.table, 0, n);
  if (batch == 1) return add(x, prefix);
  // repeat the prefix per sample
  Tensor<T> rep = prefix;
  for (std::size_t b = 1; b < batch; ++b) rep = concat_rows(rep, prefix);
  return add(x, rep);
}

template <typename T>
Tensor<T> self_attention(const Tensor<T>& f, const ProjectionSet<T>& proj, std::size_t heads,
                         bool causal, std::size_t batch) {
  if (f.rank() != 2) throw ShapeError("self_attention: f must be [B*N, C]");
  if (batch == 0 || f.extent(0) % batch != 0) throw ShapeError("self_attention: bad batch");
  const std::size_t n = f.extent(0) / batch;
  const std::size_t cp = proj.out_dim();
  if (heads == 0 || cp % heads != 0)
    throw ShapeError("self_attention: width " + std::to_string(cp) + " not divisible by " +
                     std::to_string(heads) + " heads");
  const T scl = T(1) / std::sqrt(T(cp / heads));
  Tensor<T> q = project(f, proj.wq, proj.bq);
  Tensor<T> k = project(f, proj.wk, proj.bk);
  Tensor<T> v = project(f, proj.wv, proj.bv);
  Tensor<T> logits = attn_logits(q, k, batch, n, heads, scl, causal);
  Tensor<T> alpha = softmax_rows(logits);
  return attn_apply(alpha, v, batch, n, heads);
}

template <typename T>
Tensor<T> conv2d(const Tensor<T>& fmap, const Tensor<T>& kernel) {
  if (fmap.rank() != 3) throw ShapeError("conv2d: fmap must be [H,W,C]");
  if (kernel.rank() != 4) throw ShapeError("conv2d: kernel must be [h,w,C,C']");
  const std::size_t hh = fmap.extent(0), ww = fmap.extent(1), c = fmap.extent(2);
  const std::size_t kh = kernel.extent(0), kw = kernel.extent(1), cp = kernel.extent(3);
  if (kernel.extent(2) != c) throw ShapeError(shapes_msg("conv2d", fmap.shape_str(), kernel.shape_str()));
  if (kh % 2 == 0 || kw % 2 == 0)
    throw Error("conv2d: even kernel extent " + std::to_string(kh) + "x" + std::to_string(kw));
  const std::int64_t rh = static_cast<std::int64_t>(kh) / 2;
  const std::int64_t rw = static_cast<std::int64_t>(kw) / 2;

  Tensor<T> out = Tensor<T>::zeros({hh, ww, cp});
  const T* pf = fmap.data();
  const T* pk = kernel.data();
  T* po = out.data();
  for (std::size_t x = 0; x < hh; ++x)
    for (std::size_t y = 0; y < ww; ++y) {
      T* orow = po + (x * ww + y) * cp;
      for (std::int64_t dx = -rh; dx <= rh; ++dx)
        for (std::int64_t dy = -rw; dy <= rw; ++dy) {
          const std::int64_t sx = static_cast<std::int64_t>(x) + dx;
          const std::int64_t sy = static_cast<std::int64_t>(y) + dy;
          if (sx < 0 || sy < 0 || sx >= static_cast<std::int64_t>(hh) ||
              sy >= static_cast<std::int64_t>(ww))
            continue;  // zero padding
          const T* frow = pf + (static_cast<std::size_t>(sx) * ww + static_cast<std::size_t>(sy)) * c;
          const T* kmat = pk + ((static_cast<std::size_t>(dx + rh)) * kw + static_cast<std::size_t>(dy + rw)) * c * cp;
          // per-tap contribution rounded before accumulation, matching the
          // weighted-sum form bit for bit
          for (std::size_t u = 0; u < cp; ++u) {
            T acc = 0;
            for (std::size_t t = 0; t < c; ++t) acc += frow[t] * kmat[t * cp + u];
            orow[u] += acc;
          }
        }
    }
  if (any_tracked<T>({&fmap, &kernel})) {
    out.node = make_node<T>("conv2d", {fmap, kernel},
                            [fmap, kernel, hh, ww, c, kh, kw, cp, rh, rw](const Tensor<T>& g,
                                                                          GradSink<T>& sink) {
      const T* pf2 = fmap.data();
      const T* pk2 = kernel.data();
      const T* pg = g.data();
      Tensor<T> df = fmap.node ? Tensor<T>::zeros(fmap.shape()) : Tensor<T>();
      Tensor<T> dk = kernel.node ? Tensor<T>::zeros(kernel.shape()) : Tensor<T>();
      for (std::size_t x = 0; x < hh; ++x)
        for (std::size_t y = 0; y < ww; ++y) {
          const T* grow = pg + (x * ww + y) * cp;
          for (std::int64_t dx = -rh; dx <= rh; ++dx)
            for (std::int64_t dy = -rw; dy <= rw; ++dy) {
              const std::int64_t sx = static_cast<std::int64_t>(x) + dx;
              const std::int64_t sy = static_cast<std::int64_t>(y) + dy;
              if (sx < 0 || sy < 0 || sx >= static_cast<std::int64_t>(hh) ||
                  sy >= static_cast<std::int64_t>(ww))
                continue;
              const std::size_t fbase = (static_cast<std::size_t>(sx) * ww + static_cast<std::size_t>(sy)) * c;
              const std::size_t kbase = ((static_cast<std::size_t>(dx + rh)) * kw + static_cast<std::size_t>(dy + rw)) * c * cp;
              for (std::size_t t = 0; t < c; ++t) {
                if (df.defined()) {
                  T acc = 0;
                  for (std::size_t u = 0; u < cp; ++u) acc += grow[u] * pk2[kbase + t * cp + u];
                  df.data()[fbase + t] += acc;
                }
                if (dk.defined()) {
                  const T fv = pf2[fbase + t];
                  T* dkrow = dk.data() + kbase + t * cp;
                  for (std::size_t u = 0; u < cp; ++u) dkrow[u] += fv * grow[u];
                }
              }
            }
        }
      if (df.defined()) sink.add(fmap, df);
      if (dk.defined()) sink.add(kernel, dk);
    });
  }
  return out;
}

#define TRANSLUTION_INSTANTIATE(T)                                                                \
  template Tensor<T> absolute_position_embed<T>(const Tensor<T>&, const PosEmbedTable<T>&,        \
                                                std::size_t);                                     \
  template Tensor<T> self_attention<T>(const Tensor<T>&, const ProjectionSet<T>&, std::size_t,    \
                                       bool, std::size_t);                                        \
  template Tensor<T> conv2d<T>(const Tensor<T>&, const Tensor<T>&);

TRANSLUTION_INSTANTIATE(float)
TRANSLUTION_INSTANTIATE(double)

#undef TRANSLUTION_INSTANTIATE

}  // namespace translution
