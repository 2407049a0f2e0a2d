#include "oracles.hpp"

#include <cmath>
#include <sstream>

namespace oracle {

namespace {

// row i of f (length c) times m (c x d) -> length d
std::vector<double> vecmat(const double* f, const Tensor<double>& m) {
  const std::size_t c = m.extent(0), d = m.extent(1);
  std::vector<double> out(d, 0.0);
  for (std::size_t t = 0; t < c; ++t) {
    const double fv = f[t];
    for (std::size_t u = 0; u < d; ++u) out[u] += fv * m.data()[t * d + u];
  }
  return out;
}

std::vector<double> vecmat(const std::vector<double>& f, const Tensor<double>& m) {
  return vecmat(f.data(), m);
}

Tensor<double> bank_slice(const Tensor<double>& bank, std::size_t k) {
  const std::size_t c = bank.extent(1), d = bank.extent(2);
  Tensor<double> m({c, d});
  std::copy(bank.data() + k * c * d, bank.data() + (k + 1) * c * d, m.data());
  return m;
}

double dot(const std::vector<double>& a, const std::vector<double>& b, std::size_t from,
           std::size_t len) {
  double acc = 0;
  for (std::size_t t = 0; t < len; ++t) acc += a[from + t] * b[from + t];
  return acc;
}

// softmax over unmasked entries of one row; masked entries get exactly 0
std::vector<double> softmax_row(const std::vector<double>& logits, const std::vector<bool>& valid) {
  double mx = -1e300;
  for (std::size_t j = 0; j < logits.size(); ++j)
    if (valid[j] && logits[j] > mx) mx = logits[j];
  std::vector<double> out(logits.size(), 0.0);
  double sum = 0;
  for (std::size_t j = 0; j < logits.size(); ++j)
    if (valid[j]) {
      out[j] = std::exp(logits[j] - mx);
      sum += out[j];
    }
  for (double& v : out) v /= sum;
  return out;
}

std::size_t offset_slot(std::int64_t dx, std::int64_t dy, std::size_t h, std::size_t w) {
  return static_cast<std::size_t>((dx + static_cast<std::int64_t>(h) - 1) *
                                      (2 * static_cast<std::int64_t>(w) - 1) +
                                  (dy + static_cast<std::int64_t>(w) - 1));
}

struct PairSlots {
  bool valid = true;
  std::size_t q = 0;  // query and value slot
  std::size_t k = 0;  // key slot (negated offset)
};

// generic attention over per-pair bank slots, the shared shape of every
// translution oracle
Tensor<double> pairwise_attention(const Tensor<double>& f, const Tensor<double>& qmats,
                                  const Tensor<double>& kmats, const Tensor<double>& vmats,
                                  const std::vector<PairSlots>& slots, std::size_t n,
                                  std::size_t heads) {
  const std::size_t cp = qmats.extent(2);
  const std::size_t dh = cp / heads;
  const std::size_t c = f.extent(1);
  const double scl = 1.0 / std::sqrt(static_cast<double>(dh));
  Tensor<double> out = Tensor<double>::zeros({n, cp});
  for (std::size_t h = 0; h < heads; ++h)
    for (std::size_t i = 0; i < n; ++i) {
      std::vector<double> logits(n, 0.0);
      std::vector<bool> valid(n, false);
      for (std::size_t j = 0; j < n; ++j) {
        const PairSlots& s = slots[i * n + j];
        if (!s.valid) continue;
        valid[j] = true;
        const std::vector<double> q = vecmat(f.data() + i * c, bank_slice(qmats, s.q));
        const std::vector<double> k = vecmat(f.data() + j * c, bank_slice(kmats, s.k));
        logits[j] = dot(q, k, h * dh, dh) * scl;
      }
      const std::vector<double> alpha = softmax_row(logits, valid);
      for (std::size_t j = 0; j < n; ++j) {
        if (!valid[j] || alpha[j] == 0.0) continue;
        const PairSlots& s = slots[i * n + j];
        const std::vector<double> v = vecmat(f.data() + j * c, bank_slice(vmats, s.q));
        for (std::size_t t = 0; t < dh; ++t) out.data()[i * cp + h * dh + t] += alpha[j] * v[h * dh + t];
      }
    }
  return out;
}

}  // namespace

CloseReport assert_close(const Tensor<double>& a, const Tensor<double>& b, double atol,
                         double rtol) {
  CloseReport rep;
  if (a.shape() != b.shape()) {
    rep.outcome = CloseOutcome::ShapeMismatch;
    rep.message = "shape mismatch " + a.shape_str() + " vs " + b.shape_str();
    return rep;
  }
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double av = a.data()[i], bv = b.data()[i];
    const double abs_diff = std::abs(av - bv);
    const double rel_diff = abs_diff / (std::abs(bv) + 1e-300);
    if (abs_diff > rep.worst_abs) {
      rep.worst_abs = abs_diff;
      rep.worst_rel = rel_diff;
      rep.worst_index = i;
    }
    if (abs_diff > atol + rtol * std::abs(bv)) rep.outcome = CloseOutcome::ValueMismatch;
  }
  if (rep.outcome == CloseOutcome::ValueMismatch) {
    std::ostringstream os;
    os << "worst index " << rep.worst_index << ": abs diff " << rep.worst_abs << ", rel diff "
       << rep.worst_rel << " (atol " << atol << ", rtol " << rtol << ")";
    rep.message = os.str();
  }
  return rep;
}

Tensor<double> to_double(const Tensor<float>& t) {
  Tensor<double> out(t.shape());
  for (std::size_t i = 0; i < t.size(); ++i) out.data()[i] = static_cast<double>(t.data()[i]);
  return out;
}

Tensor<double> matmul(const Tensor<double>& a, const Tensor<double>& b) {
  const std::size_t m = a.extent(0), k = a.extent(1), n = b.extent(1);
  Tensor<double> c = Tensor<double>::zeros({m, n});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      double acc = 0;
      for (std::size_t t = 0; t < k; ++t) acc += a.data()[i * k + t] * b.data()[t * n + j];
      c.data()[i * n + j] = acc;
    }
  return c;
}

Tensor<double> self_attention(const Tensor<double>& f, const Tensor<double>& wq,
                              const Tensor<double>& wk, const Tensor<double>& wv,
                              const Tensor<double>& bq, const Tensor<double>& bk,
                              const Tensor<double>& bv, std::size_t heads, bool causal) {
  const std::size_t n = f.extent(0), c = f.extent(1);
  const std::size_t cp = wq.extent(1);
  const std::size_t dh = cp / heads;
  const double scl = 1.0 / std::sqrt(static_cast<double>(dh));
  Tensor<double> out = Tensor<double>::zeros({n, cp});
  for (std::size_t h = 0; h < heads; ++h)
    for (std::size_t i = 0; i < n; ++i) {
      std::vector<double> q = vecmat(f.data() + i * c, wq);
      if (bq.defined())
        for (std::size_t t = 0; t < cp; ++t) q[t] += bq.data()[t];
      std::vector<double> logits(n, 0.0);
      std::vector<bool> valid(n, false);
      for (std::size_t j = 0; j < n; ++j) {
        if (causal && j > i) continue;
        valid[j] = true;
        std::vector<double> k = vecmat(f.data() + j * c, wk);
        if (bk.defined())
          for (std::size_t t = 0; t < cp; ++t) k[t] += bk.data()[t];
        logits[j] = dot(q, k, h * dh, dh) * scl;
      }
      const std::vector<double> alpha = softmax_row(logits, valid);
      for (std::size_t j = 0; j < n; ++j) {
        if (!valid[j] || alpha[j] == 0.0) continue;
        std::vector<double> v = vecmat(f.data() + j * c, wv);
        if (bv.defined())
          for (std::size_t t = 0; t < cp; ++t) v[t] += bv.data()[t];
        for (std::size_t t = 0; t < dh; ++t) out.data()[i * cp + h * dh + t] += alpha[j] * v[h * dh + t];
      }
    }
  return out;
}

Tensor<double> conv2d(const Tensor<double>& fmap, const Tensor<double>& kernel) {
  const std::size_t hh = fmap.extent(0), ww = fmap.extent(1), c = fmap.extent(2);
  const std::size_t kh = kernel.extent(0), kw = kernel.extent(1), cp = kernel.extent(3);
  const std::int64_t rh = static_cast<std::int64_t>(kh) / 2;
  const std::int64_t rw = static_cast<std::int64_t>(kw) / 2;
  Tensor<double> out = Tensor<double>::zeros({hh, ww, cp});
  for (std::size_t x = 0; x < hh; ++x)
    for (std::size_t y = 0; y < ww; ++y)
      for (std::int64_t dx = -rh; dx <= rh; ++dx)
        for (std::int64_t dy = -rw; dy <= rw; ++dy)
          for (std::size_t t = 0; t < c; ++t)
            for (std::size_t u = 0; u < cp; ++u) {
              const std::int64_t sx = static_cast<std::int64_t>(x) + dx;
              const std::int64_t sy = static_cast<std::int64_t>(y) + dy;
              double fv = 0.0;  // explicit zero padding
              if (sx >= 0 && sy >= 0 && sx < static_cast<std::int64_t>(hh) &&
                  sy < static_cast<std::int64_t>(ww))
                fv = fmap.data()[(static_cast<std::size_t>(sx) * ww + static_cast<std::size_t>(sy)) * c + t];
              out.data()[(x * ww + y) * cp + u] +=
                  fv * kernel.data()[((static_cast<std::size_t>(dx + rh)) * kw +
                                      static_cast<std::size_t>(dy + rw)) * c * cp + t * cp + u];
            }
  return out;
}

Tensor<double> translution2d(const Tensor<double>& f, const Tensor<double>& qmats,
                             const Tensor<double>& kmats, const Tensor<double>& vmats,
                             std::size_t grid_h, std::size_t grid_w, std::size_t heads) {
  const std::size_t n = grid_h * grid_w;
  std::vector<PairSlots> slots(n * n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      const std::int64_t dx = static_cast<std::int64_t>(i / grid_w) - static_cast<std::int64_t>(j / grid_w);
      const std::int64_t dy = static_cast<std::int64_t>(i % grid_w) - static_cast<std::int64_t>(j % grid_w);
      slots[i * n + j].q = offset_slot(dx, dy, grid_h, grid_w);
      slots[i * n + j].k = offset_slot(-dx, -dy, grid_h, grid_w);
    }
  return pairwise_attention(f, qmats, kmats, vmats, slots, n, heads);
}

Tensor<double> translution2d_cls(const Tensor<double>& f, const Tensor<double>& qmats,
                                 const Tensor<double>& kmats, const Tensor<double>& vmats,
                                 std::size_t grid_h, std::size_t grid_w, std::size_t heads) {
  const std::size_t ng = grid_h * grid_w;
  const std::size_t n = ng + 1;
  const std::size_t base = (2 * grid_h - 1) * (2 * grid_w - 1);
  std::vector<PairSlots> slots(n * n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      PairSlots& s = slots[i * n + j];
      if (i == 0 && j == 0) {
        s.q = s.k = base + 1;  // in-place
      } else if (i == 0) {
        s.q = s.k = base + 0;  // in: CLS gathers from grid tokens
      } else if (j == 0) {
        s.q = s.k = base + 2;  // out: grid tokens gather from CLS
      } else {
        const std::size_t gi = i - 1, gj = j - 1;
        const std::int64_t dx = static_cast<std::int64_t>(gi / grid_w) - static_cast<std::int64_t>(gj / grid_w);
        const std::int64_t dy = static_cast<std::int64_t>(gi % grid_w) - static_cast<std::int64_t>(gj % grid_w);
        s.q = offset_slot(dx, dy, grid_h, grid_w);
        s.k = offset_slot(-dx, -dy, grid_h, grid_w);
      }
    }
  return pairwise_attention(f, qmats, kmats, vmats, slots, n, heads);
}

Tensor<double> translution1d(const Tensor<double>& f, const Tensor<double>& qmats,
                             const Tensor<double>& kmats, const Tensor<double>& vmats,
                             std::size_t n_max, bool causal, std::size_t heads) {
  const std::size_t n = f.extent(0);
  std::vector<PairSlots> slots(n * n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      PairSlots& s = slots[i * n + j];
      const std::int64_t delta = static_cast<std::int64_t>(i) - static_cast<std::int64_t>(j);
      if (causal) {
        if (delta < 0) {
          s.valid = false;
        } else {
          s.q = static_cast<std::size_t>(delta);
          s.k = static_cast<std::size_t>(delta);  // W^k_{-delta} lives at slot delta
        }
      } else {
        s.q = static_cast<std::size_t>(delta + static_cast<std::int64_t>(n_max) - 1);
        s.k = static_cast<std::size_t>(-delta + static_cast<std::int64_t>(n_max) - 1);
      }
    }
  return pairwise_attention(f, qmats, kmats, vmats, slots, n, heads);
}

Tensor<double> translution_absolute(const Tensor<double>& f, const Tensor<double>& qmats,
                                    const Tensor<double>& kmats, const Tensor<double>& vmats,
                                    std::size_t heads) {
  const std::size_t n = f.extent(0);
  std::vector<PairSlots> slots(n * n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      slots[i * n + j].q = i * n + j;
      slots[i * n + j].k = j * n + i;
    }
  return pairwise_attention(f, qmats, kmats, vmats, slots, n, heads);
}

Tensor<double> alpha_translution2d(const Tensor<double>& f, const Tensor<double>& wq1,
                                   const Tensor<double>& wk1, const Tensor<double>& wv1,
                                   const Tensor<double>& qbank, const Tensor<double>& kbank,
                                   const Tensor<double>& vbank, const Tensor<double>& wv2,
                                   const Tensor<double>& wq, const Tensor<double>& wk,
                                   const Tensor<double>& wv, const Tensor<double>& bq,
                                   const Tensor<double>& bk, const Tensor<double>& bv,
                                   std::size_t grid_h, std::size_t grid_w, std::size_t heads,
                                   bool use_shared) {
  const std::size_t n = grid_h * grid_w;
  const std::size_t c = f.extent(1);
  const bool has_rel = qbank.defined() && qbank.extent(1) > 0 && qbank.extent(2) > 0;
  const std::size_t d2 = has_rel ? qbank.extent(2) : 0;
  const std::size_t cp = use_shared ? wq.extent(1) : wv2.extent(1);
  const std::size_t dh = cp / heads;
  const std::size_t dh2 = has_rel ? d2 / heads : 0;
  const double scl = 1.0 / std::sqrt(static_cast<double>(dh));

  Tensor<double> out = Tensor<double>::zeros({n, cp});
  for (std::size_t h = 0; h < heads; ++h)
    for (std::size_t i = 0; i < n; ++i) {
      std::vector<double> logits(n, 0.0);
      std::vector<bool> valid(n, true);
      for (std::size_t j = 0; j < n; ++j) {
        const std::int64_t dx = static_cast<std::int64_t>(i / grid_w) - static_cast<std::int64_t>(j / grid_w);
        const std::int64_t dy = static_cast<std::int64_t>(i % grid_w) - static_cast<std::int64_t>(j % grid_w);
        double a = 0.0;
        if (has_rel) {
          const std::vector<double> qrel =
              vecmat(vecmat(f.data() + i * c, wq1), bank_slice(qbank, offset_slot(dx, dy, grid_h, grid_w)));
          const std::vector<double> krel =
              vecmat(vecmat(f.data() + j * c, wk1), bank_slice(kbank, offset_slot(-dx, -dy, grid_h, grid_w)));
          a += dot(qrel, krel, h * dh2, dh2);
        }
        if (use_shared) {
          std::vector<double> q = vecmat(f.data() + i * c, wq);
          std::vector<double> k = vecmat(f.data() + j * c, wk);
          if (bq.defined())
            for (std::size_t t = 0; t < cp; ++t) q[t] += bq.data()[t];
          if (bk.defined())
            for (std::size_t t = 0; t < cp; ++t) k[t] += bk.data()[t];
          a += dot(q, k, h * dh, dh);
        }
        logits[j] = a * scl;
      }
      const std::vector<double> alpha = softmax_row(logits, valid);
      for (std::size_t j = 0; j < n; ++j) {
        if (alpha[j] == 0.0) continue;
        const std::int64_t dx = static_cast<std::int64_t>(i / grid_w) - static_cast<std::int64_t>(j / grid_w);
        const std::int64_t dy = static_cast<std::int64_t>(i % grid_w) - static_cast<std::int64_t>(j % grid_w);
        std::vector<double> v(cp, 0.0);
        if (has_rel) {
          const std::vector<double> vrel =
              vecmat(vecmat(vecmat(f.data() + j * c, wv1), bank_slice(vbank, offset_slot(dx, dy, grid_h, grid_w))), wv2);
          for (std::size_t t = 0; t < cp; ++t) v[t] += vrel[t];
        }
        if (use_shared) {
          const std::vector<double> vsh = vecmat(f.data() + j * c, wv);
          for (std::size_t t = 0; t < cp; ++t) v[t] += vsh[t];
          if (bv.defined())
            for (std::size_t t = 0; t < cp; ++t) v[t] += bv.data()[t];
        }
        for (std::size_t t = 0; t < dh; ++t) out.data()[i * cp + h * dh + t] += alpha[j] * v[h * dh + t];
      }
    }
  return out;
}

namespace {

// shared scaffolding for the encoding-zoo oracles
struct ZooCtx {
  std::size_t n, c, cp, dh;
  double scl;
};

ZooCtx zoo_ctx(const Tensor<double>& f, const Tensor<double>& wq, std::size_t grid_h,
               std::size_t grid_w, std::size_t heads) {
  ZooCtx ctx;
  ctx.n = grid_h * grid_w;
  ctx.c = f.extent(1);
  ctx.cp = wq.extent(1);
  ctx.dh = ctx.cp / heads;
  ctx.scl = 1.0 / std::sqrt(static_cast<double>(ctx.dh));
  return ctx;
}

}  // namespace

Tensor<double> rel_key_vector(const Tensor<double>& f, const Tensor<double>& wq,
                              const Tensor<double>& wk, const Tensor<double>& wv,
                              const Tensor<double>& r, std::size_t grid_h, std::size_t grid_w,
                              std::size_t heads) {
  const ZooCtx ctx = zoo_ctx(f, wq, grid_h, grid_w, heads);
  Tensor<double> out = Tensor<double>::zeros({ctx.n, ctx.cp});
  for (std::size_t h = 0; h < heads; ++h)
    for (std::size_t i = 0; i < ctx.n; ++i) {
      const std::vector<double> q = vecmat(f.data() + i * ctx.c, wq);
      std::vector<double> logits(ctx.n, 0.0);
      std::vector<bool> valid(ctx.n, true);
      for (std::size_t j = 0; j < ctx.n; ++j) {
        const std::int64_t dx = static_cast<std::int64_t>(i / grid_w) - static_cast<std::int64_t>(j / grid_w);
        const std::int64_t dy = static_cast<std::int64_t>(i % grid_w) - static_cast<std::int64_t>(j % grid_w);
        std::vector<double> k = vecmat(f.data() + j * ctx.c, wk);
        const std::size_t slot = offset_slot(dx, dy, grid_h, grid_w);
        for (std::size_t t = 0; t < ctx.cp; ++t) k[t] += r.data()[slot * ctx.cp + t];
        logits[j] = dot(q, k, h * ctx.dh, ctx.dh) * ctx.scl;
      }
      const std::vector<double> alpha = softmax_row(logits, valid);
      for (std::size_t j = 0; j < ctx.n; ++j) {
        const std::vector<double> v = vecmat(f.data() + j * ctx.c, wv);
        for (std::size_t t = 0; t < ctx.dh; ++t)
          out.data()[i * ctx.cp + h * ctx.dh + t] += alpha[j] * v[h * ctx.dh + t];
      }
    }
  return out;
}

Tensor<double> rel_value_vector(const Tensor<double>& f, const Tensor<double>& wq,
                                const Tensor<double>& wk, const Tensor<double>& wv,
                                const Tensor<double>& r, std::size_t grid_h, std::size_t grid_w,
                                std::size_t heads) {
  const ZooCtx ctx = zoo_ctx(f, wq, grid_h, grid_w, heads);
  Tensor<double> out = Tensor<double>::zeros({ctx.n, ctx.cp});
  for (std::size_t h = 0; h < heads; ++h)
    for (std::size_t i = 0; i < ctx.n; ++i) {
      const std::vector<double> q = vecmat(f.data() + i * ctx.c, wq);
      std::vector<double> logits(ctx.n, 0.0);
      std::vector<bool> valid(ctx.n, true);
      for (std::size_t j = 0; j < ctx.n; ++j) {
        const std::vector<double> k = vecmat(f.data() + j * ctx.c, wk);
        logits[j] = dot(q, k, h * ctx.dh, ctx.dh) * ctx.scl;
      }
      const std::vector<double> alpha = softmax_row(logits, valid);
      for (std::size_t j = 0; j < ctx.n; ++j) {
        const std::int64_t dx = static_cast<std::int64_t>(i / grid_w) - static_cast<std::int64_t>(j / grid_w);
        const std::int64_t dy = static_cast<std::int64_t>(i % grid_w) - static_cast<std::int64_t>(j % grid_w);
        std::vector<double> v = vecmat(f.data() + j * ctx.c, wv);
        const std::size_t slot = offset_slot(dx, dy, grid_h, grid_w);
        for (std::size_t t = 0; t < ctx.cp; ++t) v[t] += r.data()[slot * ctx.cp + t];
        for (std::size_t t = 0; t < ctx.dh; ++t)
          out.data()[i * ctx.cp + h * ctx.dh + t] += alpha[j] * v[h * ctx.dh + t];
      }
    }
  return out;
}

Tensor<double> rel_scalar_bias(const Tensor<double>& f, const Tensor<double>& wq,
                               const Tensor<double>& wk, const Tensor<double>& wv,
                               const Tensor<double>& b, std::size_t grid_h, std::size_t grid_w,
                               std::size_t heads) {
  const ZooCtx ctx = zoo_ctx(f, wq, grid_h, grid_w, heads);
  Tensor<double> out = Tensor<double>::zeros({ctx.n, ctx.cp});
  for (std::size_t h = 0; h < heads; ++h)
    for (std::size_t i = 0; i < ctx.n; ++i) {
      const std::vector<double> q = vecmat(f.data() + i * ctx.c, wq);
      std::vector<double> logits(ctx.n, 0.0);
      std::vector<bool> valid(ctx.n, true);
      for (std::size_t j = 0; j < ctx.n; ++j) {
        const std::int64_t dx = static_cast<std::int64_t>(i / grid_w) - static_cast<std::int64_t>(j / grid_w);
        const std::int64_t dy = static_cast<std::int64_t>(i % grid_w) - static_cast<std::int64_t>(j % grid_w);
        const std::vector<double> k = vecmat(f.data() + j * ctx.c, wk);
        logits[j] = dot(q, k, h * ctx.dh, ctx.dh) * ctx.scl +
                    b.data()[offset_slot(dx, dy, grid_h, grid_w)];
      }
      const std::vector<double> alpha = softmax_row(logits, valid);
      for (std::size_t j = 0; j < ctx.n; ++j) {
        const std::vector<double> v = vecmat(f.data() + j * ctx.c, wv);
        for (std::size_t t = 0; t < ctx.dh; ++t)
          out.data()[i * ctx.cp + h * ctx.dh + t] += alpha[j] * v[h * ctx.dh + t];
      }
    }
  return out;
}

Tensor<double> gated_positional(const Tensor<double>& f, const Tensor<double>& wq,
                                const Tensor<double>& wk, const Tensor<double>& wv,
                                const Tensor<double>& lambda, const Tensor<double>& w,
                                const Tensor<double>& r_norm, std::size_t grid_h,
                                std::size_t grid_w, std::size_t heads) {
  const ZooCtx ctx = zoo_ctx(f, wq, grid_h, grid_w, heads);
  const std::size_t e = w.extent(0);

  // bucket squared distances in increasing order, as the production tables do
  std::vector<std::int64_t> dists;
  for (std::int64_t dx = -(static_cast<std::int64_t>(grid_h) - 1); dx <= static_cast<std::int64_t>(grid_h) - 1; ++dx)
    for (std::int64_t dy = -(static_cast<std::int64_t>(grid_w) - 1); dy <= static_cast<std::int64_t>(grid_w) - 1; ++dy) {
      const std::int64_t d = dx * dx + dy * dy;
      bool found = false;
      for (std::int64_t x : dists) found = found || (x == d);
      if (!found) dists.push_back(d);
    }
  std::sort(dists.begin(), dists.end());
  auto bucket = [&](std::int64_t d) {
    for (std::size_t t = 0; t < dists.size(); ++t)
      if (dists[t] == d) return t;
    return std::size_t(0);
  };

  Tensor<double> out = Tensor<double>::zeros({ctx.n, ctx.cp});
  for (std::size_t h = 0; h < heads; ++h) {
    const double sig = 1.0 / (1.0 + std::exp(-lambda.data()[h]));
    for (std::size_t i = 0; i < ctx.n; ++i) {
      const std::vector<double> q = vecmat(f.data() + i * ctx.c, wq);
      std::vector<double> logits(ctx.n, 0.0), plogits(ctx.n, 0.0);
      std::vector<bool> valid(ctx.n, true);
      for (std::size_t j = 0; j < ctx.n; ++j) {
        const std::vector<double> k = vecmat(f.data() + j * ctx.c, wk);
        logits[j] = dot(q, k, h * ctx.dh, ctx.dh) * ctx.scl;
        const std::int64_t dx = static_cast<std::int64_t>(i / grid_w) - static_cast<std::int64_t>(j / grid_w);
        const std::int64_t dy = static_cast<std::int64_t>(i % grid_w) - static_cast<std::int64_t>(j % grid_w);
        const std::size_t bu = bucket(dx * dx + dy * dy);
        double bv = 0;
        for (std::size_t t = 0; t < e; ++t) bv += w.data()[t] * r_norm.data()[bu * e + t];
        plogits[j] = bv;
      }
      const std::vector<double> alpha = softmax_row(logits, valid);
      const std::vector<double> beta = softmax_row(plogits, valid);
      std::vector<double> cmix(ctx.n);
      double csum = 0;
      for (std::size_t j = 0; j < ctx.n; ++j) {
        cmix[j] = (1.0 - sig) * alpha[j] + sig * beta[j];
        csum += cmix[j];
      }
      for (std::size_t j = 0; j < ctx.n; ++j) {
        const double xi = cmix[j] / csum;
        const std::vector<double> v = vecmat(f.data() + j * ctx.c, wv);
        for (std::size_t t = 0; t < ctx.dh; ++t)
          out.data()[i * ctx.cp + h * ctx.dh + t] += xi * v[h * ctx.dh + t];
      }
    }
  }
  return out;
}

namespace {

std::vector<double> rotate_vec(const std::vector<double>& x, std::size_t heads, std::size_t dh,
                               double posx, double posy, bool two_d) {
  std::vector<double> out(x.size());
  const std::size_t pairs = dh / 2;
  const std::size_t xpairs = two_d ? pairs / 2 : pairs;
  for (std::size_t h = 0; h < heads; ++h)
    for (std::size_t t = 0; t < pairs; ++t) {
      const std::size_t local = t < xpairs ? t : t - xpairs;
      const double theta = std::pow(10000.0, -2.0 * static_cast<double>(local) / static_cast<double>(dh));
      const double pos = t < xpairs ? posx : posy;
      const double cv = std::cos(pos * theta), sv = std::sin(pos * theta);
      const std::size_t base = h * dh + 2 * t;
      out[base] = x[base] * cv - x[base + 1] * sv;
      out[base + 1] = x[base] * sv + x[base + 1] * cv;
    }
  return out;
}

Tensor<double> rotary_core(const Tensor<double>& f, const Tensor<double>& wq,
                           const Tensor<double>& wk, const Tensor<double>& wv,
                           const std::vector<double>& posx, const std::vector<double>& posy,
                           bool two_d, std::size_t heads, bool causal) {
  const std::size_t n = f.extent(0), c = f.extent(1), cp = wq.extent(1);
  const std::size_t dh = cp / heads;
  const double scl = 1.0 / std::sqrt(static_cast<double>(dh));
  Tensor<double> out = Tensor<double>::zeros({n, cp});
  for (std::size_t h = 0; h < heads; ++h)
    for (std::size_t i = 0; i < n; ++i) {
      const std::vector<double> q =
          rotate_vec(vecmat(f.data() + i * c, wq), heads, dh, posx[i], two_d ? posy[i] : 0.0, two_d);
      std::vector<double> logits(n, 0.0);
      std::vector<bool> valid(n, false);
      for (std::size_t j = 0; j < n; ++j) {
        if (causal && j > i) continue;
        valid[j] = true;
        const std::vector<double> k =
            rotate_vec(vecmat(f.data() + j * c, wk), heads, dh, posx[j], two_d ? posy[j] : 0.0, two_d);
        logits[j] = dot(q, k, h * dh, dh) * scl;
      }
      const std::vector<double> alpha = softmax_row(logits, valid);
      for (std::size_t j = 0; j < n; ++j) {
        if (!valid[j] || alpha[j] == 0.0) continue;
        const std::vector<double> v = vecmat(f.data() + j * c, wv);
        for (std::size_t t = 0; t < dh; ++t) out.data()[i * cp + h * dh + t] += alpha[j] * v[h * dh + t];
      }
    }
  return out;
}

}  // namespace

Tensor<double> rotary_attention(const Tensor<double>& f, const Tensor<double>& wq,
                                const Tensor<double>& wk, const Tensor<double>& wv,
                                std::size_t grid_h, std::size_t grid_w, std::size_t heads) {
  const std::size_t n = grid_h * grid_w;
  std::vector<double> posx(n), posy(n);
  for (std::size_t t = 0; t < n; ++t) {
    posx[t] = static_cast<double>(t / grid_w);
    posy[t] = static_cast<double>(t % grid_w);
  }
  return rotary_core(f, wq, wk, wv, posx, posy, true, heads, false);
}

Tensor<double> rotary_attention_seq(const Tensor<double>& f, const Tensor<double>& wq,
                                    const Tensor<double>& wk, const Tensor<double>& wv,
                                    std::size_t heads, bool causal) {
  const std::size_t n = f.extent(0);
  std::vector<double> pos(n);
  for (std::size_t t = 0; t < n; ++t) pos[t] = static_cast<double>(t);
  return rotary_core(f, wq, wk, wv, pos, {}, false, heads, causal);
}

}  // namespace oracle
