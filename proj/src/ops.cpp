#include "translution/ops.hpp"

#include <cmath>
#include <cstring>
#include <limits>

#include "translution/gemm.hpp"

namespace translution {

namespace {

template <typename T>
void check_same_shape(const char* op, const Tensor<T>& a, const Tensor<T>& b) {
  if (!a.same_shape(b)) throw ShapeError(shapes_msg(op, a.shape_str(), b.shape_str()));
}

template <typename T>
void check_matrix(const char* op, const Tensor<T>& a) {
  if (a.rank() != 2) throw ShapeError(std::string(op) + ": expected rank-2 tensor, got " + a.shape_str());
}

// Last axis as the row width, everything before it flattened.
template <typename T>
std::pair<std::size_t, std::size_t> rows_cols(const Tensor<T>& a) {
  if (a.rank() == 0) throw ShapeError("expected rank >= 1");
  std::size_t c = a.shape().back();
  return {a.size() / c, c};
}

template <typename T>
std::size_t head_width(const char* op, std::size_t c, std::size_t heads) {
  if (heads == 0 || c % heads != 0)
    throw ShapeError(std::string(op) + ": width " + std::to_string(c) + " not divisible by " +
                     std::to_string(heads) + " heads");
  return c / heads;
}

template <typename T>
void check_tables(const char* op, const PairTables& tables, std::size_t n) {
  if (tables.n != n || tables.q_index.size() != n * n || tables.k_index.size() != n * n)
    throw ShapeError(std::string(op) + ": pair tables sized for " + std::to_string(tables.n) +
                     " tokens, sequence has " + std::to_string(n));
}

template <typename T>
constexpr T neg_inf() {
  return -std::numeric_limits<T>::infinity();
}

}  // namespace

// ---------------------------------------------------------------------------
// Elementwise and dense linear algebra.

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  check_same_shape("add", a, b);
  Tensor<T> out(a.shape());
  const T* pa = a.data();
  const T* pb = b.data();
  T* po = out.data();
  for (std::size_t i = 0; i < out.size(); ++i) po[i] = pa[i] + pb[i];
  if (any_tracked<T>({&a, &b})) {
    out.node = make_node<T>("add", {a, b}, [a, b](const Tensor<T>& g, GradSink<T>& sink) {
      sink.add(a, g);
      sink.add(b, g);
    });
  }
  return out;
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  check_same_shape("sub", a, b);
  Tensor<T> out(a.shape());
  const T* pa = a.data();
  const T* pb = b.data();
  T* po = out.data();
  for (std::size_t i = 0; i < out.size(); ++i) po[i] = pa[i] - pb[i];
  if (any_tracked<T>({&a, &b})) {
    out.node = make_node<T>("sub", {a, b}, [a, b](const Tensor<T>& g, GradSink<T>& sink) {
      sink.add(a, g);
      Tensor<T> ng(g.shape());
      const T* pg = g.data();
      T* pn = ng.data();
      for (std::size_t i = 0; i < ng.size(); ++i) pn[i] = -pg[i];
      sink.add(b, ng);
    });
  }
  return out;
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  check_same_shape("mul", a, b);
  Tensor<T> out(a.shape());
  const T* pa = a.data();
  const T* pb = b.data();
  T* po = out.data();
  for (std::size_t i = 0; i < out.size(); ++i) po[i] = pa[i] * pb[i];
  if (any_tracked<T>({&a, &b})) {
    out.node = make_node<T>("mul", {a, b}, [a, b](const Tensor<T>& g, GradSink<T>& sink) {
      const T* pg = g.data();
      if (a.node) {
        Tensor<T> da(a.shape());
        T* p = da.data();
        const T* pb2 = b.data();
        for (std::size_t i = 0; i < da.size(); ++i) p[i] = pg[i] * pb2[i];
        sink.add(a, da);
      }
      if (b.node) {
        Tensor<T> db(b.shape());
        T* p = db.data();
        const T* pa2 = a.data();
        for (std::size_t i = 0; i < db.size(); ++i) p[i] = pg[i] * pa2[i];
        sink.add(b, db);
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> scale(const Tensor<T>& a, T s) {
  Tensor<T> out(a.shape());
  const T* pa = a.data();
  T* po = out.data();
  for (std::size_t i = 0; i < out.size(); ++i) po[i] = pa[i] * s;
  if (any_tracked<T>({&a})) {
    out.node = make_node<T>("scale", {a}, [a, s](const Tensor<T>& g, GradSink<T>& sink) {
      Tensor<T> da(a.shape());
      const T* pg = g.data();
      T* p = da.data();
      for (std::size_t i = 0; i < da.size(); ++i) p[i] = pg[i] * s;
      sink.add(a, da);
    });
  }
  return out;
}

template <typename T>
Tensor<T> add_rowvec(const Tensor<T>& a, const Tensor<T>& v) {
  auto [r, c] = rows_cols(a);
  if (v.rank() != 1 || v.extent(0) != c)
    throw ShapeError(shapes_msg("add_rowvec", a.shape_str(), v.shape_str()));
  Tensor<T> out(a.shape());
  const T* pa = a.data();
  const T* pv = v.data();
  T* po = out.data();
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) po[i * c + j] = pa[i * c + j] + pv[j];
  if (any_tracked<T>({&a, &v})) {
    std::size_t rr = r, cc = c;
    out.node = make_node<T>("add_rowvec", {a, v}, [a, v, rr, cc](const Tensor<T>& g, GradSink<T>& sink) {
      sink.add(a, g);
      if (v.node) {
        Tensor<T> dv = Tensor<T>::zeros(v.shape());
        T* p = dv.data();
        const T* pg = g.data();
        for (std::size_t i = 0; i < rr; ++i)
          for (std::size_t j = 0; j < cc; ++j) p[j] += pg[i * cc + j];
        sink.add(v, dv);
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  check_matrix("matmul", a);
  check_matrix("matmul", b);
  if (a.extent(1) != b.extent(0)) throw ShapeError(shapes_msg("matmul", a.shape_str(), b.shape_str()));
  const std::size_t m = a.extent(0), k = a.extent(1), n = b.extent(1);
  Tensor<T> out({m, n});
  gemm<T>(m, k, n, a.data(), b.data(), out.data());
  if (any_tracked<T>({&a, &b})) {
    out.node = make_node<T>("matmul", {a, b}, [a, b, m, k, n](const Tensor<T>& g, GradSink<T>& sink) {
      if (a.node) {
        Tensor<T> da({m, k});
        gemm_nt<T>(m, n, k, g.data(), b.data(), da.data());
        sink.add(a, da);
      }
      if (b.node) {
        Tensor<T> db({k, n});
        gemm_tn<T>(k, m, n, a.data(), g.data(), db.data());
        sink.add(b, db);
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> reshape(const Tensor<T>& a, std::vector<std::size_t> shape) {
  Tensor<T> out = a.clone().reshaped(std::move(shape));
  if (any_tracked<T>({&a})) {
    out.node = make_node<T>("reshape", {a}, [a](const Tensor<T>& g, GradSink<T>& sink) {
      sink.add(a, g.reshaped(a.shape()));
    });
  }
  return out;
}

template <typename T>
Tensor<T> slice_rows(const Tensor<T>& a, std::size_t start, std::size_t len) {
  auto [r, c] = rows_cols(a);
  if (start + len > r)
    throw ShapeError("slice_rows: rows [" + std::to_string(start) + "," + std::to_string(start + len) +
                     ") out of " + std::to_string(r));
  Tensor<T> out({len, c});
  std::memcpy(out.data(), a.data() + start * c, len * c * sizeof(T));
  if (any_tracked<T>({&a})) {
    std::size_t cc = c;
    out.node = make_node<T>("slice_rows", {a}, [a, start, len, cc](const Tensor<T>& g, GradSink<T>& sink) {
      Tensor<T> da = Tensor<T>::zeros(a.shape());
      std::memcpy(da.data() + start * cc, g.data(), len * cc * sizeof(T));
      sink.add(a, da);
    });
  }
  return out;
}

template <typename T>
Tensor<T> concat_rows(const Tensor<T>& a, const Tensor<T>& b) {
  auto [ra, c] = rows_cols(a);
  auto [rb, cb] = rows_cols(b);
  if (c != cb) throw ShapeError(shapes_msg("concat_rows", a.shape_str(), b.shape_str()));
  Tensor<T> out({ra + rb, c});
  std::memcpy(out.data(), a.data(), ra * c * sizeof(T));
  std::memcpy(out.data() + ra * c, b.data(), rb * c * sizeof(T));
  if (any_tracked<T>({&a, &b})) {
    std::size_t raa = ra, rbb = rb, cc = c;
    out.node = make_node<T>("concat_rows", {a, b}, [a, b, raa, rbb, cc](const Tensor<T>& g, GradSink<T>& sink) {
      if (a.node) {
        Tensor<T> da({raa, cc});
        std::memcpy(da.data(), g.data(), raa * cc * sizeof(T));
        sink.add(a, da);
      }
      if (b.node) {
        Tensor<T> db({rbb, cc});
        std::memcpy(db.data(), g.data() + raa * cc, rbb * cc * sizeof(T));
        sink.add(b, db);
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> gather_rows(const Tensor<T>& table, const std::vector<std::int64_t>& idx) {
  check_matrix("gather_rows", table);
  const std::size_t v = table.extent(0), c = table.extent(1);
  for (std::int64_t i : idx)
    if (i < 0 || static_cast<std::size_t>(i) >= v)
      throw Error("gather_rows: index " + std::to_string(i) + " out of range [0," + std::to_string(v) + ")");
  Tensor<T> out({idx.size(), c});
  for (std::size_t i = 0; i < idx.size(); ++i)
    std::memcpy(out.data() + i * c, table.data() + static_cast<std::size_t>(idx[i]) * c, c * sizeof(T));
  if (any_tracked<T>({&table})) {
    std::size_t cc = c;
    out.node = make_node<T>("gather_rows", {table}, [table, idx, cc](const Tensor<T>& g, GradSink<T>& sink) {
      Tensor<T> dt = Tensor<T>::zeros(table.shape());
      const T* pg = g.data();
      T* p = dt.data();
      for (std::size_t i = 0; i < idx.size(); ++i) {
        T* row = p + static_cast<std::size_t>(idx[i]) * cc;
        for (std::size_t j = 0; j < cc; ++j) row[j] += pg[i * cc + j];
      }
      sink.add(table, dt);
    });
  }
  return out;
}

template <typename T>
Tensor<T> sum_all(const Tensor<T>& a) {
  Tensor<T> out = Tensor<T>::zeros({});
  const T* pa = a.data();
  T acc = 0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += pa[i];
  out.data()[0] = acc;
  if (any_tracked<T>({&a})) {
    out.node = make_node<T>("sum_all", {a}, [a](const Tensor<T>& g, GradSink<T>& sink) {
      sink.add(a, Tensor<T>::full(a.shape(), g.data()[0]));
    });
  }
  return out;
}

template <typename T>
Tensor<T> gelu(const Tensor<T>& a) {
  Tensor<T> out(a.shape());
  const T* pa = a.data();
  T* po = out.data();
  const T inv_sqrt2 = T(1) / std::sqrt(T(2));
  for (std::size_t i = 0; i < out.size(); ++i)
    po[i] = T(0.5) * pa[i] * (T(1) + std::erf(pa[i] * inv_sqrt2));
  if (any_tracked<T>({&a})) {
    out.node = make_node<T>("gelu", {a}, [a, inv_sqrt2](const Tensor<T>& g, GradSink<T>& sink) {
      Tensor<T> da(a.shape());
      const T* pa2 = a.data();
      const T* pg = g.data();
      T* p = da.data();
      const T inv_sqrt2pi = T(1) / std::sqrt(T(2) * T(M_PI));
      for (std::size_t i = 0; i < da.size(); ++i) {
        const T x = pa2[i];
        const T cdf = T(0.5) * (T(1) + std::erf(x * inv_sqrt2));
        const T pdf = inv_sqrt2pi * std::exp(T(-0.5) * x * x);
        p[i] = pg[i] * (cdf + x * pdf);
      }
      sink.add(a, da);
    });
  }
  return out;
}

template <typename T>
Tensor<T> softmax_rows(const Tensor<T>& a, const Tensor<T>* mask) {
  auto [r, c] = rows_cols(a);
  if (c < 1) throw ShapeError("softmax_rows: empty rows");
  if (mask) check_same_shape("softmax_rows mask", a, *mask);
  const T lowest = std::numeric_limits<T>::lowest();
  // masked flags: entry is -inf in the mask or in the logits themselves
  Tensor<T> out(a.shape());
  const T* pa = a.data();
  const T* pm = mask ? mask->data() : nullptr;
  T* po = out.data();
  for (std::size_t i = 0; i < r; ++i) {
    const T* row = pa + i * c;
    T* orow = po + i * c;
    T mx = lowest;
    bool any = false;
    for (std::size_t j = 0; j < c; ++j) {
      const bool masked = (pm && pm[i * c + j] < lowest / 2) || row[j] < lowest / 2;
      if (!masked) {
        any = true;
        T v = row[j];
        if (pm) v += pm[i * c + j];
        if (v > mx) mx = v;
      }
    }
    if (!any) throw Error("empty attention row");
    T sum = 0;
    for (std::size_t j = 0; j < c; ++j) {
      const bool masked = (pm && pm[i * c + j] < lowest / 2) || row[j] < lowest / 2;
      if (masked) {
        orow[j] = T(0);
      } else {
        T v = row[j];
        if (pm) v += pm[i * c + j];
        orow[j] = std::exp(v - mx);
        sum += orow[j];
      }
    }
    for (std::size_t j = 0; j < c; ++j) orow[j] /= sum;
  }
  if (any_tracked<T>({&a})) {
    std::size_t rr = r, cc = c;
    Tensor<T> saved = out;
    out.node = make_node<T>("softmax_rows", {a}, [a, saved, rr, cc](const Tensor<T>& g, GradSink<T>& sink) {
      Tensor<T> da(a.shape());
      const T* y = saved.data();
      const T* pg = g.data();
      T* p = da.data();
      for (std::size_t i = 0; i < rr; ++i) {
        T dot = 0;
        for (std::size_t j = 0; j < cc; ++j) dot += pg[i * cc + j] * y[i * cc + j];
        for (std::size_t j = 0; j < cc; ++j)
          p[i * cc + j] = y[i * cc + j] * (pg[i * cc + j] - dot);
      }
      sink.add(a, da);
    });
  }
  return out;
}

template <typename T>
Tensor<T> layernorm(const Tensor<T>& a, const Tensor<T>& gain, const Tensor<T>& bias, T eps) {
  auto [r, c] = rows_cols(a);
  if (gain.rank() != 1 || gain.extent(0) != c || bias.rank() != 1 || bias.extent(0) != c)
    throw ShapeError(shapes_msg("layernorm", a.shape_str(), gain.shape_str()));
  if (eps <= 0) throw Error("layernorm: eps must be positive");

  Tensor<T> out(a.shape());
  Tensor<T> xhat(a.shape());
  std::vector<T> inv_std(r);
  const T* pa = a.data();
  const T* pgain = gain.data();
  const T* pbias = bias.data();
  T* po = out.data();
  T* ph = xhat.data();
  for (std::size_t i = 0; i < r; ++i) {
    const T* row = pa + i * c;
    T mu = 0;
    for (std::size_t j = 0; j < c; ++j) mu += row[j];
    mu /= T(c);
    T var = 0;
    for (std::size_t j = 0; j < c; ++j) var += (row[j] - mu) * (row[j] - mu);
    var /= T(c);
    const T is = T(1) / std::sqrt(var + eps);
    inv_std[i] = is;
    for (std::size_t j = 0; j < c; ++j) {
      ph[i * c + j] = (row[j] - mu) * is;
      po[i * c + j] = ph[i * c + j] * pgain[j] + pbias[j];
    }
  }
  if (any_tracked<T>({&a, &gain, &bias})) {
    std::size_t rr = r, cc = c;
    out.node = make_node<T>("layernorm", {a, gain, bias},
                            [a, gain, bias, xhat, inv_std, rr, cc](const Tensor<T>& g, GradSink<T>& sink) {
      const T* pg = g.data();
      const T* ph2 = xhat.data();
      const T* pgain2 = gain.data();
      if (a.node) {
        Tensor<T> da(a.shape());
        T* p = da.data();
        for (std::size_t i = 0; i < rr; ++i) {
          T sum_dh = 0, sum_dh_h = 0;
          for (std::size_t j = 0; j < cc; ++j) {
            const T dh = pg[i * cc + j] * pgain2[j];
            sum_dh += dh;
            sum_dh_h += dh * ph2[i * cc + j];
          }
          for (std::size_t j = 0; j < cc; ++j) {
            const T dh = pg[i * cc + j] * pgain2[j];
            p[i * cc + j] =
                inv_std[i] * (dh - sum_dh / T(cc) - ph2[i * cc + j] * sum_dh_h / T(cc));
          }
        }
        sink.add(a, da);
      }
      if (gain.node) {
        Tensor<T> dg = Tensor<T>::zeros(gain.shape());
        T* p = dg.data();
        for (std::size_t i = 0; i < rr; ++i)
          for (std::size_t j = 0; j < cc; ++j) p[j] += pg[i * cc + j] * ph2[i * cc + j];
        sink.add(gain, dg);
      }
      if (bias.node) {
        Tensor<T> db = Tensor<T>::zeros(bias.shape());
        T* p = db.data();
        for (std::size_t i = 0; i < rr; ++i)
          for (std::size_t j = 0; j < cc; ++j) p[j] += pg[i * cc + j];
        sink.add(bias, db);
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> cross_entropy_loss(const Tensor<T>& logits, const std::vector<std::int64_t>& targets) {
  check_matrix("cross_entropy_loss", logits);
  const std::size_t b = logits.extent(0), k = logits.extent(1);
  if (targets.size() != b)
    throw ShapeError("cross_entropy_loss: " + std::to_string(targets.size()) + " targets for batch " +
                     std::to_string(b));
  for (std::int64_t t : targets)
    if (t < 0 || static_cast<std::size_t>(t) >= k)
      throw Error("cross_entropy_loss: target " + std::to_string(t) + " out of range [0," +
                  std::to_string(k) + ")");

  Tensor<T> probs({b, k});
  const T* pl = logits.data();
  T* pp = probs.data();
  T loss_acc = 0;
  for (std::size_t i = 0; i < b; ++i) {
    const T* row = pl + i * k;
    T mx = row[0];
    for (std::size_t j = 1; j < k; ++j) mx = std::max(mx, row[j]);
    T sum = 0;
    for (std::size_t j = 0; j < k; ++j) sum += std::exp(row[j] - mx);
    const T lse = mx + std::log(sum);
    for (std::size_t j = 0; j < k; ++j) pp[i * k + j] = std::exp(row[j] - lse);
    loss_acc += lse - row[static_cast<std::size_t>(targets[i])];
  }
  Tensor<T> out = Tensor<T>::scalar(loss_acc / T(b));
  if (any_tracked<T>({&logits})) {
    out.node = make_node<T>("cross_entropy_loss", {logits},
                            [logits, probs, targets, b, k](const Tensor<T>& g, GradSink<T>& sink) {
      Tensor<T> dl(logits.shape());
      const T g0 = g.data()[0] / T(b);
      const T* pp2 = probs.data();
      T* p = dl.data();
      for (std::size_t i = 0; i < b; ++i)
        for (std::size_t j = 0; j < k; ++j) {
          T v = pp2[i * k + j];
          if (static_cast<std::size_t>(targets[i]) == j) v -= T(1);
          p[i * k + j] = g0 * v;
        }
      sink.add(logits, dl);
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// Attention-structured kernels.

template <typename T>
Tensor<T> attn_logits(const Tensor<T>& q, const Tensor<T>& k, std::size_t batch, std::size_t n,
                      std::size_t heads, T scale, bool causal) {
  check_matrix("attn_logits", q);
  check_same_shape("attn_logits", q, k);
  if (q.extent(0) != batch * n) throw ShapeError("attn_logits: rows != batch*n");
  const std::size_t cp = q.extent(1);
  const std::size_t dh = head_width<T>("attn_logits", cp, heads);
  Tensor<T> out({batch, heads, n, n});
  const T* pq = q.data();
  const T* pk = k.data();
  T* po = out.data();
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t h = 0; h < heads; ++h)
      for (std::size_t i = 0; i < n; ++i) {
        T* orow = po + ((b * heads + h) * n + i) * n;
        const T* qi = pq + (b * n + i) * cp + h * dh;
        for (std::size_t j = 0; j < n; ++j) {
          if (causal && j > i) {
            orow[j] = neg_inf<T>();
            continue;
          }
          const T* kj = pk + (b * n + j) * cp + h * dh;
          T acc = 0;
          for (std::size_t d = 0; d < dh; ++d) acc += qi[d] * kj[d];
          orow[j] = acc * scale;
        }
      }
  if (any_tracked<T>({&q, &k})) {
    out.node = make_node<T>("attn_logits", {q, k},
                            [q, k, batch, n, heads, scale, causal, cp, dh](const Tensor<T>& g, GradSink<T>& sink) {
      Tensor<T> dq = Tensor<T>::zeros(q.shape());
      Tensor<T> dk = Tensor<T>::zeros(k.shape());
      const T* pq2 = q.data();
      const T* pk2 = k.data();
      const T* pg = g.data();
      T* pdq = dq.data();
      T* pdk = dk.data();
      for (std::size_t b = 0; b < batch; ++b)
        for (std::size_t h = 0; h < heads; ++h)
          for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j) {
              if (causal && j > i) continue;
              const T gv = pg[((b * heads + h) * n + i) * n + j] * scale;
              if (gv == T(0)) continue;
              const T* qi = pq2 + (b * n + i) * cp + h * dh;
              const T* kj = pk2 + (b * n + j) * cp + h * dh;
              T* dqi = pdq + (b * n + i) * cp + h * dh;
              T* dkj = pdk + (b * n + j) * cp + h * dh;
              for (std::size_t d = 0; d < dh; ++d) {
                dqi[d] += gv * kj[d];
                dkj[d] += gv * qi[d];
              }
            }
      sink.add(q, dq);
      sink.add(k, dk);
    });
  }
  return out;
}

template <typename T>
Tensor<T> attn_apply(const Tensor<T>& alpha, const Tensor<T>& v, std::size_t batch, std::size_t n,
                     std::size_t heads) {
  if (alpha.rank() != 4) throw ShapeError("attn_apply: alpha must be [B,H,N,N]");
  check_matrix("attn_apply", v);
  if (v.extent(0) != batch * n) throw ShapeError("attn_apply: rows != batch*n");
  const std::size_t cp = v.extent(1);
  const std::size_t dh = head_width<T>("attn_apply", cp, heads);
  Tensor<T> out = Tensor<T>::zeros({batch * n, cp});
  const T* pa = alpha.data();
  const T* pv = v.data();
  T* po = out.data();
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t h = 0; h < heads; ++h)
      for (std::size_t i = 0; i < n; ++i) {
        T* orow = po + (b * n + i) * cp + h * dh;
        const T* arow = pa + ((b * heads + h) * n + i) * n;
        for (std::size_t j = 0; j < n; ++j) {
          const T a = arow[j];
          if (a == T(0)) continue;
          const T* vj = pv + (b * n + j) * cp + h * dh;
          for (std::size_t d = 0; d < dh; ++d) orow[d] += a * vj[d];
        }
      }
  if (any_tracked<T>({&alpha, &v})) {
    out.node = make_node<T>("attn_apply", {alpha, v},
                            [alpha, v, batch, n, heads, cp, dh](const Tensor<T>& g, GradSink<T>& sink) {
      const T* pa2 = alpha.data();
      const T* pv2 = v.data();
      const T* pg = g.data();
      if (alpha.node) {
        Tensor<T> da = Tensor<T>::zeros(alpha.shape());
        T* p = da.data();
        for (std::size_t b = 0; b < batch; ++b)
          for (std::size_t h = 0; h < heads; ++h)
            for (std::size_t i = 0; i < n; ++i)
              for (std::size_t j = 0; j < n; ++j) {
                const T* grow = pg + (b * n + i) * cp + h * dh;
                const T* vj = pv2 + (b * n + j) * cp + h * dh;
                T acc = 0;
                for (std::size_t d = 0; d < dh; ++d) acc += grow[d] * vj[d];
                p[((b * heads + h) * n + i) * n + j] = acc;
              }
        sink.add(alpha, da);
      }
      if (v.node) {
        Tensor<T> dv = Tensor<T>::zeros(v.shape());
        T* p = dv.data();
        for (std::size_t b = 0; b < batch; ++b)
          for (std::size_t h = 0; h < heads; ++h)
            for (std::size_t i = 0; i < n; ++i) {
              const T* grow = pg + (b * n + i) * cp + h * dh;
              const T* arow = pa2 + ((b * heads + h) * n + i) * n;
              for (std::size_t j = 0; j < n; ++j) {
                const T a = arow[j];
                if (a == T(0)) continue;
                T* dvj = p + (b * n + j) * cp + h * dh;
                for (std::size_t d = 0; d < dh; ++d) dvj[d] += a * grow[d];
              }
            }
        sink.add(v, dv);
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> bank_project(const Tensor<T>& x, const Tensor<T>& bank) {
  check_matrix("bank_project", x);
  if (bank.rank() != 3) throw ShapeError("bank_project: bank must be [K,C,D]");
  const std::size_t r = x.extent(0), c = x.extent(1);
  const std::size_t kk = bank.extent(0), cd = bank.extent(2);
  if (bank.extent(1) != c) throw ShapeError(shapes_msg("bank_project", x.shape_str(), bank.shape_str()));
  Tensor<T> out({kk, r, cd});
  for (std::size_t k = 0; k < kk; ++k)
    gemm<T>(r, c, cd, x.data(), bank.data() + k * c * cd, out.data() + k * r * cd);
  if (any_tracked<T>({&x, &bank})) {
    out.node = make_node<T>("bank_project", {x, bank},
                            [x, bank, r, c, kk, cd](const Tensor<T>& g, GradSink<T>& sink) {
      if (x.node) {
        Tensor<T> dx = Tensor<T>::zeros(x.shape());
        for (std::size_t k = 0; k < kk; ++k)
          gemm_nt<T>(r, cd, c, g.data() + k * r * cd, bank.data() + k * c * cd, dx.data(), true);
        sink.add(x, dx);
      }
      if (bank.node) {
        Tensor<T> db(bank.shape());
        for (std::size_t k = 0; k < kk; ++k)
          gemm_tn<T>(c, r, cd, x.data(), g.data() + k * r * cd, db.data() + k * c * cd);
        sink.add(bank, db);
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> pair_logits(const Tensor<T>& pq, const Tensor<T>& pk, const PairTables& tables,
                      std::size_t batch, std::size_t heads, T scale) {
  if (pq.rank() != 3 || pk.rank() != 3) throw ShapeError("pair_logits: projections must be [K,R,D]");
  check_same_shape("pair_logits", pq, pk);
  const std::size_t kk = pq.extent(0), r = pq.extent(1), d = pq.extent(2);
  const std::size_t n = tables.n;
  if (r != batch * n) throw ShapeError("pair_logits: rows != batch*n");
  check_tables<T>("pair_logits", tables, n);
  const std::size_t dh = head_width<T>("pair_logits", d, heads);
  Tensor<T> out({batch, heads, n, n});
  const T* ppq = pq.data();
  const T* ppk = pk.data();
  T* po = out.data();
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) {
        const std::int32_t qi = tables.q_index[i * n + j];
        const std::int32_t ki = tables.k_index[i * n + j];
        for (std::size_t h = 0; h < heads; ++h) {
          T* slot = po + ((b * heads + h) * n + i) * n + j;
          if (qi < 0) {
            *slot = neg_inf<T>();
            continue;
          }
          if (static_cast<std::size_t>(qi) >= kk || static_cast<std::size_t>(ki) >= kk)
            throw Error("pair_logits: bank index out of range");
          const T* qv = ppq + (static_cast<std::size_t>(qi) * r + b * n + i) * d + h * dh;
          const T* kv = ppk + (static_cast<std::size_t>(ki) * r + b * n + j) * d + h * dh;
          T acc = 0;
          for (std::size_t t = 0; t < dh; ++t) acc += qv[t] * kv[t];
          *slot = acc * scale;
        }
      }
  if (any_tracked<T>({&pq, &pk})) {
    out.node = make_node<T>("pair_logits", {pq, pk},
                            [pq, pk, tables, batch, heads, scale, kk, r, d, dh](const Tensor<T>& g,
                                                                                GradSink<T>& sink) {
      const std::size_t n = tables.n;
      Tensor<T> dq = Tensor<T>::zeros(pq.shape());
      Tensor<T> dk = Tensor<T>::zeros(pk.shape());
      const T* ppq2 = pq.data();
      const T* ppk2 = pk.data();
      const T* pg = g.data();
      T* pdq = dq.data();
      T* pdk = dk.data();
      for (std::size_t b = 0; b < batch; ++b)
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t j = 0; j < n; ++j) {
            const std::int32_t qi = tables.q_index[i * n + j];
            const std::int32_t ki = tables.k_index[i * n + j];
            if (qi < 0) continue;
            for (std::size_t h = 0; h < heads; ++h) {
              const T gv = pg[((b * heads + h) * n + i) * n + j] * scale;
              if (gv == T(0)) continue;
              const T* qv = ppq2 + (static_cast<std::size_t>(qi) * r + b * n + i) * d + h * dh;
              const T* kv = ppk2 + (static_cast<std::size_t>(ki) * r + b * n + j) * d + h * dh;
              T* dqv = pdq + (static_cast<std::size_t>(qi) * r + b * n + i) * d + h * dh;
              T* dkv = pdk + (static_cast<std::size_t>(ki) * r + b * n + j) * d + h * dh;
              for (std::size_t t = 0; t < dh; ++t) {
                dqv[t] += gv * kv[t];
                dkv[t] += gv * qv[t];
              }
            }
          }
      sink.add(pq, dq);
      sink.add(pk, dk);
    });
  }
  return out;
}

template <typename T>
Tensor<T> pair_weighted_sum(const Tensor<T>& alpha, const Tensor<T>& pv, const PairTables& tables,
                            std::size_t batch, std::size_t heads) {
  if (alpha.rank() != 4) throw ShapeError("pair_weighted_sum: alpha must be [B,H,N,N]");
  if (pv.rank() != 3) throw ShapeError("pair_weighted_sum: pv must be [K,R,D]");
  const std::size_t kk = pv.extent(0), r = pv.extent(1), d = pv.extent(2);
  const std::size_t n = tables.n;
  if (r != batch * n) throw ShapeError("pair_weighted_sum: rows != batch*n");
  check_tables<T>("pair_weighted_sum", tables, n);
  const std::size_t dh = head_width<T>("pair_weighted_sum", d, heads);
  Tensor<T> out = Tensor<T>::zeros({batch * n, d});
  const T* pa = alpha.data();
  const T* pp = pv.data();
  T* po = out.data();
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t h = 0; h < heads; ++h)
      for (std::size_t i = 0; i < n; ++i) {
        T* orow = po + (b * n + i) * d + h * dh;
        const T* arow = pa + ((b * heads + h) * n + i) * n;
        for (std::size_t j = 0; j < n; ++j) {
          const std::int32_t qi = tables.q_index[i * n + j];
          if (qi < 0) continue;
          if (static_cast<std::size_t>(qi) >= kk) throw Error("pair_weighted_sum: bank index out of range");
          const T a = arow[j];
          if (a == T(0)) continue;
          const T* vv = pp + (static_cast<std::size_t>(qi) * r + b * n + j) * d + h * dh;
          for (std::size_t t = 0; t < dh; ++t) orow[t] += a * vv[t];
        }
      }
  if (any_tracked<T>({&alpha, &pv})) {
    out.node = make_node<T>("pair_weighted_sum", {alpha, pv},
                            [alpha, pv, tables, batch, heads, kk, r, d, dh](const Tensor<T>& g,
                                                                            GradSink<T>& sink) {
      const std::size_t n = tables.n;
      const T* pa2 = alpha.data();
      const T* pp2 = pv.data();
      const T* pg = g.data();
      if (alpha.node) {
        Tensor<T> da = Tensor<T>::zeros(alpha.shape());
        T* p = da.data();
        for (std::size_t b = 0; b < batch; ++b)
          for (std::size_t h = 0; h < heads; ++h)
            for (std::size_t i = 0; i < n; ++i)
              for (std::size_t j = 0; j < n; ++j) {
                const std::int32_t qi = tables.q_index[i * n + j];
                if (qi < 0) continue;
                const T* grow = pg + (b * n + i) * d + h * dh;
                const T* vv = pp2 + (static_cast<std::size_t>(qi) * r + b * n + j) * d + h * dh;
                T acc = 0;
                for (std::size_t t = 0; t < dh; ++t) acc += grow[t] * vv[t];
                p[((b * heads + h) * n + i) * n + j] = acc;
              }
        sink.add(alpha, da);
      }
      if (pv.node) {
        Tensor<T> dp = Tensor<T>::zeros(pv.shape());
        T* p = dp.data();
        for (std::size_t b = 0; b < batch; ++b)
          for (std::size_t h = 0; h < heads; ++h)
            for (std::size_t i = 0; i < n; ++i) {
              const T* grow = pg + (b * n + i) * d + h * dh;
              const T* arow = pa2 + ((b * heads + h) * n + i) * n;
              for (std::size_t j = 0; j < n; ++j) {
                const std::int32_t qi = tables.q_index[i * n + j];
                if (qi < 0) continue;
                const T a = arow[j];
                if (a == T(0)) continue;
                T* dv = p + (static_cast<std::size_t>(qi) * r + b * n + j) * d + h * dh;
                for (std::size_t t = 0; t < dh; ++t) dv[t] += a * grow[t];
              }
            }
        sink.add(pv, dp);
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> pair_project(const Tensor<T>& x, const Tensor<T>& bank, const PairTables& tables,
                       std::size_t batch) {
  check_matrix("pair_project", x);
  if (bank.rank() != 3) throw ShapeError("pair_project: bank must be [K,C1,C2]");
  const std::size_t c1 = bank.extent(1), c2 = bank.extent(2), kk = bank.extent(0);
  const std::size_t n = tables.n;
  if (x.extent(0) != batch * n || x.extent(1) != c1)
    throw ShapeError(shapes_msg("pair_project", x.shape_str(), bank.shape_str()));
  check_tables<T>("pair_project", tables, n);
  Tensor<T> out = Tensor<T>::zeros({batch, n, n, c2});
  const T* px = x.data();
  const T* pb = bank.data();
  T* po = out.data();
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) {
        const std::int32_t qi = tables.q_index[i * n + j];
        if (qi < 0) continue;
        if (static_cast<std::size_t>(qi) >= kk) throw Error("pair_project: bank index out of range");
        const T* xj = px + (b * n + j) * c1;
        const T* m = pb + static_cast<std::size_t>(qi) * c1 * c2;
        T* orow = po + ((b * n + i) * n + j) * c2;
        for (std::size_t t = 0; t < c1; ++t) {
          const T xv = xj[t];
          const T* mrow = m + t * c2;
          for (std::size_t u = 0; u < c2; ++u) orow[u] += xv * mrow[u];
        }
      }
  if (any_tracked<T>({&x, &bank})) {
    out.node = make_node<T>("pair_project", {x, bank},
                            [x, bank, tables, batch, kk, c1, c2](const Tensor<T>& g, GradSink<T>& sink) {
      const std::size_t n = tables.n;
      const T* px2 = x.data();
      const T* pb2 = bank.data();
      const T* pg = g.data();
      Tensor<T> dx = x.node ? Tensor<T>::zeros(x.shape()) : Tensor<T>();
      Tensor<T> db = bank.node ? Tensor<T>::zeros(bank.shape()) : Tensor<T>();
      for (std::size_t b = 0; b < batch; ++b)
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t j = 0; j < n; ++j) {
            const std::int32_t qi = tables.q_index[i * n + j];
            if (qi < 0) continue;
            const T* grow = pg + ((b * n + i) * n + j) * c2;
            const T* xj = px2 + (b * n + j) * c1;
            if (x.node) {
              const T* m = pb2 + static_cast<std::size_t>(qi) * c1 * c2;
              T* dxj = dx.data() + (b * n + j) * c1;
              for (std::size_t t = 0; t < c1; ++t) {
                const T* mrow = m + t * c2;
                T acc = 0;
                for (std::size_t u = 0; u < c2; ++u) acc += grow[u] * mrow[u];
                dxj[t] += acc;
              }
            }
            if (bank.node) {
              T* dm = db.data() + static_cast<std::size_t>(qi) * c1 * c2;
              for (std::size_t t = 0; t < c1; ++t) {
                const T xv = xj[t];
                T* dmrow = dm + t * c2;
                for (std::size_t u = 0; u < c2; ++u) dmrow[u] += xv * grow[u];
              }
            }
          }
      if (x.node) sink.add(x, dx);
      if (bank.node) sink.add(bank, db);
    });
  }
  return out;
}

template <typename T>
Tensor<T> pair_contract(const Tensor<T>& alpha, const Tensor<T>& r, std::size_t batch,
                        std::size_t n, std::size_t heads) {
  if (alpha.rank() != 4 || r.rank() != 4) throw ShapeError("pair_contract: expected [B,H,N,N] and [B,N,N,D]");
  const std::size_t d = r.extent(3);
  Tensor<T> out = Tensor<T>::zeros({batch, heads, n, d});
  const T* pa = alpha.data();
  const T* pr = r.data();
  T* po = out.data();
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t h = 0; h < heads; ++h)
      for (std::size_t i = 0; i < n; ++i) {
        T* orow = po + ((b * heads + h) * n + i) * d;
        const T* arow = pa + ((b * heads + h) * n + i) * n;
        for (std::size_t j = 0; j < n; ++j) {
          const T a = arow[j];
          if (a == T(0)) continue;
          const T* rrow = pr + ((b * n + i) * n + j) * d;
          for (std::size_t t = 0; t < d; ++t) orow[t] += a * rrow[t];
        }
      }
  if (any_tracked<T>({&alpha, &r})) {
    out.node = make_node<T>("pair_contract", {alpha, r},
                            [alpha, r, batch, n, heads, d](const Tensor<T>& g, GradSink<T>& sink) {
      const T* pa2 = alpha.data();
      const T* pr2 = r.data();
      const T* pg = g.data();
      if (alpha.node) {
        Tensor<T> da = Tensor<T>::zeros(alpha.shape());
        T* p = da.data();
        for (std::size_t b = 0; b < batch; ++b)
          for (std::size_t h = 0; h < heads; ++h)
            for (std::size_t i = 0; i < n; ++i)
              for (std::size_t j = 0; j < n; ++j) {
                const T* grow = pg + ((b * heads + h) * n + i) * d;
                const T* rrow = pr2 + ((b * n + i) * n + j) * d;
                T acc = 0;
                for (std::size_t t = 0; t < d; ++t) acc += grow[t] * rrow[t];
                p[((b * heads + h) * n + i) * n + j] = acc;
              }
        sink.add(alpha, da);
      }
      if (r.node) {
        Tensor<T> dr = Tensor<T>::zeros(r.shape());
        T* p = dr.data();
        for (std::size_t b = 0; b < batch; ++b)
          for (std::size_t h = 0; h < heads; ++h)
            for (std::size_t i = 0; i < n; ++i) {
              const T* grow = pg + ((b * heads + h) * n + i) * d;
              const T* arow = pa2 + ((b * heads + h) * n + i) * n;
              for (std::size_t j = 0; j < n; ++j) {
                const T a = arow[j];
                if (a == T(0)) continue;
                T* drow = p + ((b * n + i) * n + j) * d;
                for (std::size_t t = 0; t < d; ++t) drow[t] += a * grow[t];
              }
            }
        sink.add(r, dr);
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> alpha_value_combine(const Tensor<T>* alpha, const Tensor<T>* v, const Tensor<T>& s,
                              const Tensor<T>& w2, std::size_t batch, std::size_t n,
                              std::size_t heads) {
  if (s.rank() != 4) throw ShapeError("alpha_value_combine: s must be [B,H,N,D]");
  check_matrix("alpha_value_combine", w2);
  const std::size_t d = s.extent(3), cp = w2.extent(1);
  if (w2.extent(0) != d) throw ShapeError(shapes_msg("alpha_value_combine", s.shape_str(), w2.shape_str()));
  const std::size_t dh = head_width<T>("alpha_value_combine", cp, heads);
  if ((alpha == nullptr) != (v == nullptr))
    throw Error("alpha_value_combine: alpha and v must be supplied together");
  Tensor<T> out = Tensor<T>::zeros({batch * n, cp});
  T* po = out.data();
  if (v) {
    const T* pa = alpha->data();
    const T* pv = v->data();
    for (std::size_t b = 0; b < batch; ++b)
      for (std::size_t h = 0; h < heads; ++h)
        for (std::size_t i = 0; i < n; ++i) {
          T* orow = po + (b * n + i) * cp + h * dh;
          const T* arow = pa + ((b * heads + h) * n + i) * n;
          for (std::size_t j = 0; j < n; ++j) {
            const T a = arow[j];
            if (a == T(0)) continue;
            const T* vj = pv + (b * n + j) * cp + h * dh;
            for (std::size_t t = 0; t < dh; ++t) orow[t] += a * vj[t];
          }
        }
  }
  {
    const T* ps = s.data();
    const T* pw = w2.data();
    for (std::size_t b = 0; b < batch; ++b)
      for (std::size_t h = 0; h < heads; ++h)
        for (std::size_t i = 0; i < n; ++i) {
          T* orow = po + (b * n + i) * cp + h * dh;
          const T* srow = ps + ((b * heads + h) * n + i) * d;
          for (std::size_t t = 0; t < d; ++t) {
            const T sv = srow[t];
            const T* wrow = pw + t * cp + h * dh;
            for (std::size_t u = 0; u < dh; ++u) orow[u] += sv * wrow[u];
          }
        }
  }
  const bool track = grad_enabled() && ((alpha && alpha->node) || (v && v->node) || s.node || w2.node);
  if (track) {
    std::vector<Tensor<T>> parents;
    Tensor<T> a_cap, v_cap;
    if (alpha) {
      a_cap = *alpha;
      v_cap = *v;
      parents = {a_cap, v_cap, s, w2};
    } else {
      parents = {s, w2};
    }
    const bool has_sv = alpha != nullptr;
    Tensor<T> s_cap = s, w_cap = w2;
    out.node = make_node<T>("alpha_value_combine", parents,
                            [a_cap, v_cap, s_cap, w_cap, has_sv, batch, n, heads, d, cp, dh](
                                const Tensor<T>& g, GradSink<T>& sink) {
      const T* pg = g.data();
      if (has_sv && a_cap.node) {
        Tensor<T> da = Tensor<T>::zeros(a_cap.shape());
        T* p = da.data();
        const T* pv = v_cap.data();
        for (std::size_t b = 0; b < batch; ++b)
          for (std::size_t h = 0; h < heads; ++h)
            for (std::size_t i = 0; i < n; ++i)
              for (std::size_t j = 0; j < n; ++j) {
                const T* grow = pg + (b * n + i) * cp + h * dh;
                const T* vj = pv + (b * n + j) * cp + h * dh;
                T acc = 0;
                for (std::size_t t = 0; t < dh; ++t) acc += grow[t] * vj[t];
                p[((b * heads + h) * n + i) * n + j] = acc;
              }
        sink.add(a_cap, da);
      }
      if (has_sv && v_cap.node) {
        Tensor<T> dv = Tensor<T>::zeros(v_cap.shape());
        T* p = dv.data();
        const T* pa = a_cap.data();
        for (std::size_t b = 0; b < batch; ++b)
          for (std::size_t h = 0; h < heads; ++h)
            for (std::size_t i = 0; i < n; ++i) {
              const T* grow = pg + (b * n + i) * cp + h * dh;
              const T* arow = pa + ((b * heads + h) * n + i) * n;
              for (std::size_t j = 0; j < n; ++j) {
                const T a = arow[j];
                if (a == T(0)) continue;
                T* dvj = p + (b * n + j) * cp + h * dh;
                for (std::size_t t = 0; t < dh; ++t) dvj[t] += a * grow[t];
              }
            }
        sink.add(v_cap, dv);
      }
      if (s_cap.node) {
        Tensor<T> ds = Tensor<T>::zeros(s_cap.shape());
        T* p = ds.data();
        const T* pw = w_cap.data();
        for (std::size_t b = 0; b < batch; ++b)
          for (std::size_t h = 0; h < heads; ++h)
            for (std::size_t i = 0; i < n; ++i) {
              const T* grow = pg + (b * n + i) * cp + h * dh;
              T* drow = p + ((b * heads + h) * n + i) * d;
              for (std::size_t t = 0; t < d; ++t) {
                const T* wrow = pw + t * cp + h * dh;
                T acc = 0;
                for (std::size_t u = 0; u < dh; ++u) acc += grow[u] * wrow[u];
                drow[t] += acc;
              }
            }
        sink.add(s_cap, ds);
      }
      if (w_cap.node) {
        Tensor<T> dw = Tensor<T>::zeros(w_cap.shape());
        T* p = dw.data();
        const T* ps = s_cap.data();
        for (std::size_t b = 0; b < batch; ++b)
          for (std::size_t h = 0; h < heads; ++h)
            for (std::size_t i = 0; i < n; ++i) {
              const T* grow = pg + (b * n + i) * cp + h * dh;
              const T* srow = ps + ((b * heads + h) * n + i) * d;
              for (std::size_t t = 0; t < d; ++t) {
                T* dwrow = p + t * cp + h * dh;
                const T sv = srow[t];
                for (std::size_t u = 0; u < dh; ++u) dwrow[u] += sv * grow[u];
              }
            }
        sink.add(w_cap, dw);
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> bank_compose(const Tensor<T>& left, const Tensor<T>& bank, const Tensor<T>& right,
                       const Tensor<T>* shared) {
  check_matrix("bank_compose", left);
  check_matrix("bank_compose", right);
  if (bank.rank() != 3) throw ShapeError("bank_compose: bank must be [K,C1,C2]");
  const std::size_t c = left.extent(0), c1 = left.extent(1);
  const std::size_t kk = bank.extent(0), c2 = bank.extent(2), cp = right.extent(1);
  if (bank.extent(1) != c1 || right.extent(0) != c2)
    throw ShapeError(shapes_msg("bank_compose", bank.shape_str(), right.shape_str()));
  if (shared && (shared->rank() != 2 || shared->extent(0) != c || shared->extent(1) != cp))
    throw ShapeError(shapes_msg("bank_compose shared", shared->shape_str(), "[" + std::to_string(c) + "," + std::to_string(cp) + "]"));

  Tensor<T> tmp({kk, c, c2});  // left . bank[k], reused in backward
  Tensor<T> out({kk, c, cp});
  for (std::size_t k = 0; k < kk; ++k) {
    gemm<T>(c, c1, c2, left.data(), bank.data() + k * c1 * c2, tmp.data() + k * c * c2);
    gemm<T>(c, c2, cp, tmp.data() + k * c * c2, right.data(), out.data() + k * c * cp);
  }
  if (shared) {
    const T* ps = shared->data();
    T* po = out.data();
    for (std::size_t k = 0; k < kk; ++k)
      for (std::size_t i = 0; i < c * cp; ++i) po[k * c * cp + i] += ps[i];
  }
  const bool track = grad_enabled() &&
                     (left.node || bank.node || right.node || (shared && shared->node));
  if (track) {
    std::vector<Tensor<T>> parents{left, bank, right};
    Tensor<T> sh_cap;
    if (shared) {
      sh_cap = *shared;
      parents.push_back(sh_cap);
    }
    const bool has_shared = shared != nullptr;
    out.node = make_node<T>("bank_compose", parents,
                            [left, bank, right, sh_cap, tmp, has_shared, kk, c, c1, c2, cp](
                                const Tensor<T>& g, GradSink<T>& sink) {
      if (left.node) {
        Tensor<T> dl = Tensor<T>::zeros(left.shape());
        Tensor<T> br({c1, cp});  // bank[k] . right
        for (std::size_t k = 0; k < kk; ++k) {
          gemm<T>(c1, c2, cp, bank.data() + k * c1 * c2, right.data(), br.data());
          gemm_nt<T>(c, cp, c1, g.data() + k * c * cp, br.data(), dl.data(), true);
        }
        sink.add(left, dl);
      }
      if (bank.node) {
        Tensor<T> db(bank.shape());
        Tensor<T> gr({c, c2});  // g[k] . right^T
        for (std::size_t k = 0; k < kk; ++k) {
          gemm_nt<T>(c, cp, c2, g.data() + k * c * cp, right.data(), gr.data());
          gemm_tn<T>(c1, c, c2, left.data(), gr.data(), db.data() + k * c1 * c2);
        }
        sink.add(bank, db);
      }
      if (right.node) {
        Tensor<T> dr = Tensor<T>::zeros(right.shape());
        for (std::size_t k = 0; k < kk; ++k)
          gemm_tn<T>(c2, c, cp, tmp.data() + k * c * c2, g.data() + k * c * cp, dr.data(), true);
        sink.add(right, dr);
      }
      if (has_shared && sh_cap.node) {
        Tensor<T> ds = Tensor<T>::zeros(sh_cap.shape());
        T* p = ds.data();
        const T* pg = g.data();
        for (std::size_t k = 0; k < kk; ++k)
          for (std::size_t i = 0; i < c * cp; ++i) p[i] += pg[k * c * cp + i];
        sink.add(sh_cap, ds);
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> pair_apply(const Tensor<T>& alpha, const Tensor<T>& vp, std::size_t batch,
                     std::size_t heads) {
  if (alpha.rank() != 4 || vp.rank() != 4) throw ShapeError("pair_apply: expected [B,H,N,N] and [B,N,N,C']");
  const std::size_t n = alpha.extent(2), cp = vp.extent(3);
  const std::size_t dh = head_width<T>("pair_apply", cp, heads);
  Tensor<T> out = Tensor<T>::zeros({batch * n, cp});
  const T* pa = alpha.data();
  const T* pv = vp.data();
  T* po = out.data();
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t h = 0; h < heads; ++h)
      for (std::size_t i = 0; i < n; ++i) {
        T* orow = po + (b * n + i) * cp + h * dh;
        const T* arow = pa + ((b * heads + h) * n + i) * n;
        for (std::size_t j = 0; j < n; ++j) {
          const T a = arow[j];
          if (a == T(0)) continue;
          const T* vrow = pv + ((b * n + i) * n + j) * cp + h * dh;
          for (std::size_t t = 0; t < dh; ++t) orow[t] += a * vrow[t];
        }
      }
  if (any_tracked<T>({&alpha, &vp})) {
    out.node = make_node<T>("pair_apply", {alpha, vp},
                            [alpha, vp, batch, heads, n, cp, dh](const Tensor<T>& g, GradSink<T>& sink) {
      const T* pa2 = alpha.data();
      const T* pv2 = vp.data();
      const T* pg = g.data();
      if (alpha.node) {
        Tensor<T> da = Tensor<T>::zeros(alpha.shape());
        T* p = da.data();
        for (std::size_t b = 0; b < batch; ++b)
          for (std::size_t h = 0; h < heads; ++h)
            for (std::size_t i = 0; i < n; ++i)
              for (std::size_t j = 0; j < n; ++j) {
                const T* grow = pg + (b * n + i) * cp + h * dh;
                const T* vrow = pv2 + ((b * n + i) * n + j) * cp + h * dh;
                T acc = 0;
                for (std::size_t t = 0; t < dh; ++t) acc += grow[t] * vrow[t];
                p[((b * heads + h) * n + i) * n + j] = acc;
              }
        sink.add(alpha, da);
      }
      if (vp.node) {
        Tensor<T> dv = Tensor<T>::zeros(vp.shape());
        T* p = dv.data();
        for (std::size_t b = 0; b < batch; ++b)
          for (std::size_t h = 0; h < heads; ++h)
            for (std::size_t i = 0; i < n; ++i) {
              const T* grow = pg + (b * n + i) * cp + h * dh;
              const T* arow = pa2 + ((b * heads + h) * n + i) * n;
              for (std::size_t j = 0; j < n; ++j) {
                const T a = arow[j];
                if (a == T(0)) continue;
                T* dvrow = p + ((b * n + i) * n + j) * cp + h * dh;
                for (std::size_t t = 0; t < dh; ++t) dvrow[t] += a * grow[t];
              }
            }
        sink.add(vp, dv);
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> relvec_logits(const Tensor<T>& q, const Tensor<T>& r, const PairTables& tables,
                        std::size_t batch, std::size_t heads, T scale) {
  check_matrix("relvec_logits", q);
  check_matrix("relvec_logits", r);
  const std::size_t cp = q.extent(1), n = tables.n;
  if (q.extent(0) != batch * n) throw ShapeError("relvec_logits: rows != batch*n");
  if (r.extent(1) != cp) throw ShapeError(shapes_msg("relvec_logits", q.shape_str(), r.shape_str()));
  check_tables<T>("relvec_logits", tables, n);
  const std::size_t dh = head_width<T>("relvec_logits", cp, heads);
  const std::size_t kk = r.extent(0);
  Tensor<T> out = Tensor<T>::zeros({batch, heads, n, n});
  const T* pq = q.data();
  const T* pr = r.data();
  T* po = out.data();
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) {
        const std::int32_t qi = tables.q_index[i * n + j];
        if (qi < 0) continue;  // masked pairs stay 0; content logits handle masking
        if (static_cast<std::size_t>(qi) >= kk) throw Error("relvec_logits: table index out of range");
        for (std::size_t h = 0; h < heads; ++h) {
          const T* qv = pq + (b * n + i) * cp + h * dh;
          const T* rv = pr + static_cast<std::size_t>(qi) * cp + h * dh;
          T acc = 0;
          for (std::size_t t = 0; t < dh; ++t) acc += qv[t] * rv[t];
          po[((b * heads + h) * n + i) * n + j] = acc * scale;
        }
      }
  if (any_tracked<T>({&q, &r})) {
    out.node = make_node<T>("relvec_logits", {q, r},
                            [q, r, tables, batch, heads, scale, cp, dh](const Tensor<T>& g, GradSink<T>& sink) {
      const std::size_t n = tables.n;
      const T* pq2 = q.data();
      const T* pr2 = r.data();
      const T* pg = g.data();
      Tensor<T> dq = q.node ? Tensor<T>::zeros(q.shape()) : Tensor<T>();
      Tensor<T> dr = r.node ? Tensor<T>::zeros(r.shape()) : Tensor<T>();
      for (std::size_t b = 0; b < batch; ++b)
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t j = 0; j < n; ++j) {
            const std::int32_t qi = tables.q_index[i * n + j];
            if (qi < 0) continue;
            for (std::size_t h = 0; h < heads; ++h) {
              const T gv = pg[((b * heads + h) * n + i) * n + j] * scale;
              if (gv == T(0)) continue;
              const T* qv = pq2 + (b * n + i) * cp + h * dh;
              const T* rv = pr2 + static_cast<std::size_t>(qi) * cp + h * dh;
              if (q.node) {
                T* dqv = dq.data() + (b * n + i) * cp + h * dh;
                for (std::size_t t = 0; t < dh; ++t) dqv[t] += gv * rv[t];
              }
              if (r.node) {
                T* drv = dr.data() + static_cast<std::size_t>(qi) * cp + h * dh;
                for (std::size_t t = 0; t < dh; ++t) drv[t] += gv * qv[t];
              }
            }
          }
      if (q.node) sink.add(q, dq);
      if (r.node) sink.add(r, dr);
    });
  }
  return out;
}

template <typename T>
Tensor<T> relvec_apply(const Tensor<T>& alpha, const Tensor<T>& r, const PairTables& tables,
                       std::size_t batch, std::size_t heads) {
  if (alpha.rank() != 4) throw ShapeError("relvec_apply: alpha must be [B,H,N,N]");
  check_matrix("relvec_apply", r);
  const std::size_t n = tables.n, cp = r.extent(1), kk = r.extent(0);
  check_tables<T>("relvec_apply", tables, n);
  const std::size_t dh = head_width<T>("relvec_apply", cp, heads);
  Tensor<T> out = Tensor<T>::zeros({batch * n, cp});
  const T* pa = alpha.data();
  const T* pr = r.data();
  T* po = out.data();
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t h = 0; h < heads; ++h)
      for (std::size_t i = 0; i < n; ++i) {
        T* orow = po + (b * n + i) * cp + h * dh;
        const T* arow = pa + ((b * heads + h) * n + i) * n;
        for (std::size_t j = 0; j < n; ++j) {
          const std::int32_t qi = tables.q_index[i * n + j];
          if (qi < 0) continue;
          if (static_cast<std::size_t>(qi) >= kk) throw Error("relvec_apply: table index out of range");
          const T a = arow[j];
          if (a == T(0)) continue;
          const T* rv = pr + static_cast<std::size_t>(qi) * cp + h * dh;
          for (std::size_t t = 0; t < dh; ++t) orow[t] += a * rv[t];
        }
      }
  if (any_tracked<T>({&alpha, &r})) {
    out.node = make_node<T>("relvec_apply", {alpha, r},
                            [alpha, r, tables, batch, heads, cp, dh](const Tensor<T>& g, GradSink<T>& sink) {
      const std::size_t n = tables.n;
      const T* pa2 = alpha.data();
      const T* pr2 = r.data();
      const T* pg = g.data();
      if (alpha.node) {
        Tensor<T> da = Tensor<T>::zeros(alpha.shape());
        T* p = da.data();
        for (std::size_t b = 0; b < batch; ++b)
          for (std::size_t h = 0; h < heads; ++h)
            for (std::size_t i = 0; i < n; ++i)
              for (std::size_t j = 0; j < n; ++j) {
                const std::int32_t qi = tables.q_index[i * n + j];
                if (qi < 0) continue;
                const T* grow = pg + (b * n + i) * cp + h * dh;
                const T* rv = pr2 + static_cast<std::size_t>(qi) * cp + h * dh;
                T acc = 0;
                for (std::size_t t = 0; t < dh; ++t) acc += grow[t] * rv[t];
                p[((b * heads + h) * n + i) * n + j] = acc;
              }
        sink.add(alpha, da);
      }
      if (r.node) {
        Tensor<T> dr = Tensor<T>::zeros(r.shape());
        T* p = dr.data();
        for (std::size_t b = 0; b < batch; ++b)
          for (std::size_t h = 0; h < heads; ++h)
            for (std::size_t i = 0; i < n; ++i) {
              const T* grow = pg + (b * n + i) * cp + h * dh;
              const T* arow = pa2 + ((b * heads + h) * n + i) * n;
              for (std::size_t j = 0; j < n; ++j) {
                const std::int32_t qi = tables.q_index[i * n + j];
                if (qi < 0) continue;
                const T a = arow[j];
                if (a == T(0)) continue;
                T* drv = p + static_cast<std::size_t>(qi) * cp + h * dh;
                for (std::size_t t = 0; t < dh; ++t) drv[t] += a * grow[t];
              }
            }
        sink.add(r, dr);
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> pairbias_logits(const Tensor<T>& bias, const PairTables& tables, std::size_t batch,
                          std::size_t heads) {
  if (bias.rank() != 1) throw ShapeError("pairbias_logits: bias must be rank-1");
  const std::size_t n = tables.n, kk = bias.extent(0);
  check_tables<T>("pairbias_logits", tables, n);
  Tensor<T> out = Tensor<T>::zeros({batch, heads, n, n});
  const T* pb = bias.data();
  T* po = out.data();
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t h = 0; h < heads; ++h)
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) {
          const std::int32_t qi = tables.q_index[i * n + j];
          if (qi < 0) continue;
          if (static_cast<std::size_t>(qi) >= kk) throw Error("pairbias_logits: table index out of range");
          po[((b * heads + h) * n + i) * n + j] = pb[qi];
        }
  if (any_tracked<T>({&bias})) {
    out.node = make_node<T>("pairbias_logits", {bias},
                            [bias, tables, batch, heads](const Tensor<T>& g, GradSink<T>& sink) {
      const std::size_t n = tables.n;
      Tensor<T> db = Tensor<T>::zeros(bias.shape());
      T* p = db.data();
      const T* pg = g.data();
      for (std::size_t b = 0; b < batch; ++b)
        for (std::size_t h = 0; h < heads; ++h)
          for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j) {
              const std::int32_t qi = tables.q_index[i * n + j];
              if (qi < 0) continue;
              p[qi] += pg[((b * heads + h) * n + i) * n + j];
            }
      sink.add(bias, db);
    });
  }
  return out;
}

template <typename T>
Tensor<T> gate_mix(const Tensor<T>& alpha, const Tensor<T>& beta, const Tensor<T>& lambda,
                   std::size_t batch, std::size_t n, std::size_t heads) {
  check_same_shape("gate_mix", alpha, beta);
  if (lambda.rank() != 1 || lambda.extent(0) != heads)
    throw ShapeError("gate_mix: lambda must be [heads]");
  Tensor<T> out(alpha.shape());
  const T* pa = alpha.data();
  const T* pb = beta.data();
  const T* pl = lambda.data();
  T* po = out.data();
  const std::size_t plane = n * n;
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t h = 0; h < heads; ++h) {
      const T s = T(1) / (T(1) + std::exp(-pl[h]));
      const std::size_t base = (b * heads + h) * plane;
      for (std::size_t t = 0; t < plane; ++t)
        po[base + t] = (T(1) - s) * pa[base + t] + s * pb[base + t];
    }
  if (any_tracked<T>({&alpha, &beta, &lambda})) {
    out.node = make_node<T>("gate_mix", {alpha, beta, lambda},
                            [alpha, beta, lambda, batch, n, heads](const Tensor<T>& g, GradSink<T>& sink) {
      const std::size_t plane = n * n;
      const T* pa2 = alpha.data();
      const T* pb2 = beta.data();
      const T* pl2 = lambda.data();
      const T* pg = g.data();
      if (alpha.node) {
        Tensor<T> da(alpha.shape());
        T* p = da.data();
        for (std::size_t b = 0; b < batch; ++b)
          for (std::size_t h = 0; h < heads; ++h) {
            const T s = T(1) / (T(1) + std::exp(-pl2[h]));
            const std::size_t base = (b * heads + h) * plane;
            for (std::size_t t = 0; t < plane; ++t) p[base + t] = (T(1) - s) * pg[base + t];
          }
        sink.add(alpha, da);
      }
      if (beta.node) {
        Tensor<T> db(beta.shape());
        T* p = db.data();
        for (std::size_t b = 0; b < batch; ++b)
          for (std::size_t h = 0; h < heads; ++h) {
            const T s = T(1) / (T(1) + std::exp(-pl2[h]));
            const std::size_t base = (b * heads + h) * plane;
            for (std::size_t t = 0; t < plane; ++t) p[base + t] = s * pg[base + t];
          }
        sink.add(beta, db);
      }
      if (lambda.node) {
        Tensor<T> dl = Tensor<T>::zeros(lambda.shape());
        T* p = dl.data();
        for (std::size_t b = 0; b < batch; ++b)
          for (std::size_t h = 0; h < heads; ++h) {
            const T s = T(1) / (T(1) + std::exp(-pl2[h]));
            const T ds = s * (T(1) - s);
            const std::size_t base = (b * heads + h) * plane;
            T acc = 0;
            for (std::size_t t = 0; t < plane; ++t)
              acc += pg[base + t] * (pb2[base + t] - pa2[base + t]);
            p[h] += acc * ds;
          }
        sink.add(lambda, dl);
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> row_normalize(const Tensor<T>& a) {
  auto [r, c] = rows_cols(a);
  Tensor<T> out(a.shape());
  std::vector<T> sums(r);
  const T* pa = a.data();
  T* po = out.data();
  for (std::size_t i = 0; i < r; ++i) {
    T s = 0;
    for (std::size_t j = 0; j < c; ++j) s += pa[i * c + j];
    if (s == T(0)) throw Error("row_normalize: zero row sum");
    sums[i] = s;
    for (std::size_t j = 0; j < c; ++j) po[i * c + j] = pa[i * c + j] / s;
  }
  if (any_tracked<T>({&a})) {
    std::size_t rr = r, cc = c;
    Tensor<T> saved = out;
    out.node = make_node<T>("row_normalize", {a},
                            [a, saved, sums, rr, cc](const Tensor<T>& g, GradSink<T>& sink) {
      Tensor<T> da(a.shape());
      const T* y = saved.data();
      const T* pg = g.data();
      T* p = da.data();
      for (std::size_t i = 0; i < rr; ++i) {
        T dot = 0;
        for (std::size_t j = 0; j < cc; ++j) dot += pg[i * cc + j] * y[i * cc + j];
        for (std::size_t j = 0; j < cc; ++j) p[i * cc + j] = (pg[i * cc + j] - dot) / sums[i];
      }
      sink.add(a, da);
    });
  }
  return out;
}

template <typename T>
Tensor<T> rotary_rotate(const Tensor<T>& x, const std::vector<std::int32_t>& xpos,
                        const std::vector<std::int32_t>& ypos, std::size_t batch,
                        std::size_t heads) {
  check_matrix("rotary_rotate", x);
  const std::size_t cp = x.extent(1);
  const std::size_t dh = head_width<T>("rotary_rotate", cp, heads);
  const bool two_d = !ypos.empty();
  if (dh % 2 != 0) throw Error("rotary_rotate: odd head width " + std::to_string(dh));
  if (two_d && dh % 4 != 0)
    throw Error("rotary_rotate: 2D rotary needs head width divisible by 4, got " + std::to_string(dh));
  const std::size_t n = xpos.size();
  if (two_d && ypos.size() != n) throw ShapeError("rotary_rotate: xpos/ypos length mismatch");
  if (x.extent(0) != batch * n) throw ShapeError("rotary_rotate: rows != batch*positions");

  const std::size_t pairs = dh / 2;
  const std::size_t xpairs = two_d ? pairs / 2 : pairs;
  // angle per (token, pair) is shared across batch and heads
  std::vector<T> cosv(n * pairs), sinv(n * pairs);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t t = 0; t < pairs; ++t) {
      const std::size_t local = t < xpairs ? t : t - xpairs;
      const T theta = std::pow(T(10000), -T(2) * T(local) / T(dh));
      const T pos = T(t < xpairs ? xpos[i] : ypos[i]);
      cosv[i * pairs + t] = std::cos(pos * theta);
      sinv[i * pairs + t] = std::sin(pos * theta);
    }

  Tensor<T> out(x.shape());
  const T* px = x.data();
  T* po = out.data();
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t h = 0; h < heads; ++h)
        for (std::size_t t = 0; t < pairs; ++t) {
          const std::size_t base = (b * n + i) * cp + h * dh + 2 * t;
          const T cv = cosv[i * pairs + t], sv = sinv[i * pairs + t];
          const T a = px[base], bb = px[base + 1];
          po[base] = a * cv - bb * sv;
          po[base + 1] = a * sv + bb * cv;
        }
  if (any_tracked<T>({&x})) {
    out.node = make_node<T>("rotary_rotate", {x},
                            [x, cosv, sinv, batch, heads, n, cp, dh, pairs](const Tensor<T>& g,
                                                                            GradSink<T>& sink) {
      Tensor<T> dx(x.shape());
      const T* pg = g.data();
      T* p = dx.data();
      for (std::size_t b = 0; b < batch; ++b)
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t h = 0; h < heads; ++h)
            for (std::size_t t = 0; t < pairs; ++t) {
              const std::size_t base = (b * n + i) * cp + h * dh + 2 * t;
              const T cv = cosv[i * pairs + t], sv = sinv[i * pairs + t];
              const T ga = pg[base], gb = pg[base + 1];
              p[base] = ga * cv + gb * sv;  // inverse rotation
              p[base + 1] = -ga * sv + gb * cv;
            }
      sink.add(x, dx);
    });
  }
  return out;
}

template <typename T>
Tensor<T> select_token_rows(const Tensor<T>& x, std::size_t batch, std::size_t stride,
                            std::size_t pos) {
  check_matrix("select_token_rows", x);
  const std::size_t c = x.extent(1);
  if (x.extent(0) != batch * stride || pos >= stride)
    throw ShapeError("select_token_rows: bad geometry");
  Tensor<T> out({batch, c});
  for (std::size_t b = 0; b < batch; ++b)
    std::memcpy(out.data() + b * c, x.data() + (b * stride + pos) * c, c * sizeof(T));
  if (any_tracked<T>({&x})) {
    out.node = make_node<T>("select_token_rows", {x},
                            [x, batch, stride, pos, c](const Tensor<T>& g, GradSink<T>& sink) {
      Tensor<T> dx = Tensor<T>::zeros(x.shape());
      for (std::size_t b = 0; b < batch; ++b)
        std::memcpy(dx.data() + (b * stride + pos) * c, g.data() + b * c, c * sizeof(T));
      sink.add(x, dx);
    });
  }
  return out;
}

template <typename T>
Tensor<T> prepend_row(const Tensor<T>& row, const Tensor<T>& x, std::size_t batch, std::size_t n) {
  check_matrix("prepend_row", row);
  check_matrix("prepend_row", x);
  const std::size_t c = x.extent(1);
  if (row.extent(0) != 1 || row.extent(1) != c || x.extent(0) != batch * n)
    throw ShapeError(shapes_msg("prepend_row", row.shape_str(), x.shape_str()));
  Tensor<T> out({batch * (n + 1), c});
  for (std::size_t b = 0; b < batch; ++b) {
    std::memcpy(out.data() + b * (n + 1) * c, row.data(), c * sizeof(T));
    std::memcpy(out.data() + (b * (n + 1) + 1) * c, x.data() + b * n * c, n * c * sizeof(T));
  }
  if (any_tracked<T>({&row, &x})) {
    out.node = make_node<T>("prepend_row", {row, x},
                            [row, x, batch, n, c](const Tensor<T>& g, GradSink<T>& sink) {
      if (row.node) {
        Tensor<T> dr = Tensor<T>::zeros(row.shape());
        T* p = dr.data();
        const T* pg = g.data();
        for (std::size_t b = 0; b < batch; ++b)
          for (std::size_t j = 0; j < c; ++j) p[j] += pg[b * (n + 1) * c + j];
        sink.add(row, dr);
      }
      if (x.node) {
        Tensor<T> dx({batch * n, c});
        for (std::size_t b = 0; b < batch; ++b)
          std::memcpy(dx.data() + b * n * c, g.data() + (b * (n + 1) + 1) * c, n * c * sizeof(T));
        sink.add(x, dx);
      }
    });
  }
  return out;
}

// ---------------------------------------------------------------------------

#define TRANSLUTION_INSTANTIATE(T)                                                                 \
  template Tensor<T> add<T>(const Tensor<T>&, const Tensor<T>&);                                   \
  template Tensor<T> sub<T>(const Tensor<T>&, const Tensor<T>&);                                   \
  template Tensor<T> mul<T>(const Tensor<T>&, const Tensor<T>&);                                   \
  template Tensor<T> scale<T>(const Tensor<T>&, T);                                                \
  template Tensor<T> add_rowvec<T>(const Tensor<T>&, const Tensor<T>&);                            \
  template Tensor<T> matmul<T>(const Tensor<T>&, const Tensor<T>&);                                \
  template Tensor<T> reshape<T>(const Tensor<T>&, std::vector<std::size_t>);                       \
  template Tensor<T> slice_rows<T>(const Tensor<T>&, std::size_t, std::size_t);                    \
  template Tensor<T> concat_rows<T>(const Tensor<T>&, const Tensor<T>&);                           \
  template Tensor<T> gather_rows<T>(const Tensor<T>&, const std::vector<std::int64_t>&);           \
  template Tensor<T> sum_all<T>(const Tensor<T>&);                                                 \
  template Tensor<T> gelu<T>(const Tensor<T>&);                                                    \
  template Tensor<T> softmax_rows<T>(const Tensor<T>&, const Tensor<T>*);                          \
  template Tensor<T> layernorm<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, T);        \
  template Tensor<T> cross_entropy_loss<T>(const Tensor<T>&, const std::vector<std::int64_t>&);    \
  template Tensor<T> attn_logits<T>(const Tensor<T>&, const Tensor<T>&, std::size_t, std::size_t,  \
                                    std::size_t, T, bool);                                         \
  template Tensor<T> attn_apply<T>(const Tensor<T>&, const Tensor<T>&, std::size_t, std::size_t,   \
                                   std::size_t);                                                   \
  template Tensor<T> bank_project<T>(const Tensor<T>&, const Tensor<T>&);                          \
  template Tensor<T> pair_logits<T>(const Tensor<T>&, const Tensor<T>&, const PairTables&,         \
                                    std::size_t, std::size_t, T);                                  \
  template Tensor<T> pair_weighted_sum<T>(const Tensor<T>&, const Tensor<T>&, const PairTables&,   \
                                          std::size_t, std::size_t);                               \
  template Tensor<T> pair_project<T>(const Tensor<T>&, const Tensor<T>&, const PairTables&,        \
                                     std::size_t);                                                 \
  template Tensor<T> pair_contract<T>(const Tensor<T>&, const Tensor<T>&, std::size_t,             \
                                      std::size_t, std::size_t);                                   \
  template Tensor<T> alpha_value_combine<T>(const Tensor<T>*, const Tensor<T>*, const Tensor<T>&,  \
                                            const Tensor<T>&, std::size_t, std::size_t,            \
                                            std::size_t);                                          \
  template Tensor<T> bank_compose<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,         \
                                     const Tensor<T>*);                                            \
  template Tensor<T> pair_apply<T>(const Tensor<T>&, const Tensor<T>&, std::size_t, std::size_t);  \
  template Tensor<T> relvec_logits<T>(const Tensor<T>&, const Tensor<T>&, const PairTables&,       \
                                      std::size_t, std::size_t, T);                                \
  template Tensor<T> relvec_apply<T>(const Tensor<T>&, const Tensor<T>&, const PairTables&,        \
                                     std::size_t, std::size_t);                                    \
  template Tensor<T> pairbias_logits<T>(const Tensor<T>&, const PairTables&, std::size_t,          \
                                        std::size_t);                                              \
  template Tensor<T> gate_mix<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,             \
                                 std::size_t, std::size_t, std::size_t);                           \
  template Tensor<T> row_normalize<T>(const Tensor<T>&);                                           \
  template Tensor<T> rotary_rotate<T>(const Tensor<T>&, const std::vector<std::int32_t>&,          \
                                      const std::vector<std::int32_t>&, std::size_t, std::size_t); \
  template Tensor<T> select_token_rows<T>(const Tensor<T>&, std::size_t, std::size_t,              \
                                          std::size_t);                                            \
  template Tensor<T> prepend_row<T>(const Tensor<T>&, const Tensor<T>&, std::size_t, std::size_t);

TRANSLUTION_INSTANTIATE(float)
TRANSLUTION_INSTANTIATE(double)

#undef TRANSLUTION_INSTANTIATE

}  // namespace translution
