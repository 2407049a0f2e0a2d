#include "translution/gradcheck.hpp"

#include <functional>
#include <map>

#include "translution/encoding_zoo.hpp"
#include "translution/model.hpp"
#include "translution/rng.hpp"
#include "translution/sequence.hpp"
#include "translution/translution.hpp"

namespace translution {

namespace {

Tensor<double> draw(std::vector<std::size_t> shape, Rng& rng, double stddev = 0.5) {
  Tensor<double> t(std::move(shape));
  for (std::size_t i = 0; i < t.size(); ++i) t.data()[i] = rng.trunc_normal(stddev);
  return t;
}

struct Pack {
  std::vector<std::unique_ptr<Param<double>>> storage;
  Rng rng{0xC0FFEEULL};

  Param<double>* add(const std::string& name, std::vector<std::size_t> shape, double stddev = 0.5) {
    storage.push_back(std::make_unique<Param<double>>(name, draw(std::move(shape), rng, stddev)));
    return storage.back().get();
  }
  std::vector<Param<double>*> all() const {
    std::vector<Param<double>*> out;
    for (const auto& p : storage) out.push_back(p.get());
    return out;
  }
};

double check(Pack& pack, const std::function<Tensor<double>()>& f) {
  return finite_diff_check(f, pack.all());
}

Tensor<double> sq_loss(const Tensor<double>& out) { return sum_all(mul(out, out)); }

double run_op(const std::string& name) {
  Pack pack;
  Rng data_rng(0xDA7AULL);

  if (name == "matmul") {
    auto* a = pack.add("a", {4, 5});
    auto* b = pack.add("b", {5, 3});
    return check(pack, [&]() { return sq_loss(matmul(a->use(), b->use())); });
  }
  if (name == "softmax") {
    auto* a = pack.add("a", {4, 6});
    return check(pack, [&]() { return sq_loss(softmax_rows(a->use())); });
  }
  if (name == "layernorm") {
    auto* a = pack.add("a", {4, 6});
    auto* g = pack.add("g", {6}, 0.2);
    auto* b = pack.add("b", {6}, 0.2);
    return check(pack, [&]() { return sq_loss(layernorm(a->use(), g->use(), b->use(), 1e-3)); });
  }
  if (name == "cross_entropy") {
    auto* a = pack.add("a", {5, 7});
    const std::vector<std::int64_t> targets{0, 3, 6, 2, 1};
    return check(pack, [&]() { return cross_entropy_loss(a->use(), targets); });
  }
  if (name == "gelu") {
    auto* a = pack.add("a", {4, 6});
    return check(pack, [&]() { return sq_loss(gelu(a->use())); });
  }
  if (name == "self_attention" || name == "self_attention_causal") {
    const bool causal = name.ends_with("causal");
    Tensor<double> f = draw({5, 4}, data_rng, 1.0);
    auto* wq = pack.add("wq", {4, 6});
    auto* wk = pack.add("wk", {4, 6});
    auto* wv = pack.add("wv", {4, 6});
    auto* bq = pack.add("bq", {6}, 0.1);
    auto* bv = pack.add("bv", {6}, 0.1);
    return check(pack, [&]() {
      ProjectionSet<double> p;
      p.wq = wq->use();
      p.wk = wk->use();
      p.wv = wv->use();
      p.bq = bq->use();
      p.bv = bv->use();
      return sq_loss(self_attention(f, p, 2, causal));
    });
  }
  if (name == "conv2d") {
    auto* fm = pack.add("fmap", {4, 4, 2});
    auto* k = pack.add("kernel", {3, 3, 2, 3});
    return check(pack, [&]() { return sq_loss(conv2d(fm->use(), k->use())); });
  }
  if (name == "translution2d") {
    const Grid2D grid{2, 2, false};
    Tensor<double> f = draw({4, 3}, data_rng, 1.0);
    auto* q = pack.add("q", {9, 3, 4});
    auto* k = pack.add("k", {9, 3, 4});
    auto* v = pack.add("v", {9, 3, 4});
    return check(pack, [&]() {
      return sq_loss(translution2d(f, {q->use(), BankRole::Query}, {k->use(), BankRole::Key},
                                   {v->use(), BankRole::Value}, grid, 2));
    });
  }
  if (name == "translution1d" || name == "translution1d_causal") {
    const bool causal = name.ends_with("causal");
    const std::size_t slots = causal ? 4 : 7;
    Tensor<double> f = draw({4, 3}, data_rng, 1.0);
    auto* q = pack.add("q", {slots, 3, 4});
    auto* k = pack.add("k", {slots, 3, 4});
    auto* v = pack.add("v", {slots, 3, 4});
    return check(pack, [&]() {
      OffsetBank1D<double> qb{q->use(), causal, 4, BankRole::Query};
      OffsetBank1D<double> kb{k->use(), causal, 4, BankRole::Key};
      OffsetBank1D<double> vb{v->use(), causal, 4, BankRole::Value};
      return sq_loss(translution1d(f, qb, kb, vb, 2, causal));
    });
  }
  if (name == "alpha" || name == "alpha_efficient" || name == "alpha_noshared") {
    const bool efficient = name != "alpha";
    const bool use_shared = name != "alpha_noshared";
    const Grid2D grid{2, 2, false};
    Tensor<double> f = draw({4, 3}, data_rng, 1.0);
    auto* wq1 = pack.add("wq1", {3, 2});
    auto* wk1 = pack.add("wk1", {3, 2});
    auto* wv1 = pack.add("wv1", {3, 2});
    auto* qb = pack.add("qbank", {9, 2, 2});
    auto* kb = pack.add("kbank", {9, 2, 2});
    auto* vb = pack.add("vbank", {9, 2, 2});
    auto* wv2 = pack.add("wv2", {2, 4});
    Param<double>*wq = nullptr, *wk = nullptr, *wv = nullptr, *bv = nullptr;
    if (use_shared) {
      wq = pack.add("wq", {3, 4});
      wk = pack.add("wk", {3, 4});
      wv = pack.add("wv", {3, 4});
      bv = pack.add("bv", {4}, 0.1);
    }
    return check(pack, [&]() {
      AlphaFactors<double> fac;
      fac.wq1 = wq1->use();
      fac.wk1 = wk1->use();
      fac.wv1 = wv1->use();
      fac.qbank = qb->use();
      fac.kbank = kb->use();
      fac.vbank = vb->use();
      fac.wv2 = wv2->use();
      if (use_shared) {
        fac.shared.wq = wq->use();
        fac.shared.wk = wk->use();
        fac.shared.wv = wv->use();
        fac.shared.bv = bv->use();
      }
      return sq_loss(alpha_translution2d<double>(f, fac, grid, 2, use_shared, nullptr, efficient));
    });
  }
  if (name == "absolute_pairs") {
    Tensor<double> f = draw({4, 3}, data_rng, 1.0);
    auto* q = pack.add("q", {16, 3, 4});
    auto* k = pack.add("k", {16, 3, 4});
    auto* v = pack.add("v", {16, 3, 4});
    return check(pack, [&]() {
      return sq_loss(translution2d_absolute_pairs(f, {q->use(), BankRole::Query},
                                                  {k->use(), BankRole::Key},
                                                  {v->use(), BankRole::Value}, 2));
    });
  }
  if (name == "rel_key" || name == "rel_value" || name == "rel_scalar" || name == "gated" ||
      name == "rotary") {
    const Grid2D grid{2, 2, false};
    Tensor<double> f = draw({4, 3}, data_rng, 1.0);
    auto* wq = pack.add("wq", {3, 4});
    auto* wk = pack.add("wk", {3, 4});
    auto* wv = pack.add("wv", {3, 4});
    auto proj = [&]() {
      ProjectionSet<double> p;
      p.wq = wq->use();
      p.wk = wk->use();
      p.wv = wv->use();
      return p;
    };
    if (name == "rel_key" || name == "rel_value") {
      auto* r = pack.add("r", {grid.offset_count(), 4});
      const bool key = name == "rel_key";
      return check(pack, [&, key]() {
        RelVectorTable<double> table{r->use()};
        return sq_loss(key ? attn_relative_key_vector(f, proj(), table, grid, 2)
                           : attn_relative_value_vector(f, proj(), table, grid, 2));
      });
    }
    if (name == "rel_scalar") {
      auto* b = pack.add("b", {grid.offset_count()});
      return check(pack, [&]() {
        RelScalarTable<double> table{b->use()};
        return sq_loss(attn_relative_scalar_bias(f, proj(), table, grid, 2));
      });
    }
    if (name == "gated") {
      const DistanceBuckets dist = distance_buckets(grid);
      auto* lambda = pack.add("lambda", {2});
      auto* w = pack.add("w", {3});
      auto* rn = pack.add("rn", {dist.count, 3});
      return check(pack, [&]() {
        GateState<double> gate{lambda->use(), w->use(), rn->use()};
        return sq_loss(attn_gated_positional(f, proj(), gate, grid, 2));
      });
    }
    return check(pack, [&]() { return sq_loss(attn_rotary(f, proj(), grid, 1)); });
  }
  if (name == "vit_micro" || name == "gpt_micro") {
    ModelSpec spec;
    spec.arch_name = "custom";
    spec.arch = {2, 8, 2, 16};
    spec.seed = 3;
    spec.c1 = 1;
    spec.c2 = 1;
    std::vector<std::int64_t> targets;
    Tensor<double> img;
    std::vector<std::int64_t> tokens;
    if (name == "vit_micro") {
      spec.task = "classify";
      spec.canvas = 8;
      spec.patch = 4;
      spec.classes = 3;
      spec.variant = VariantKind::Translution;
      targets = {1, 2};
      img = draw({2, 8, 8}, data_rng, 1.0);
    } else {
      spec.task = "lm";
      spec.vocab = 7;
      spec.seq_len = 4;
      spec.variant = VariantKind::Translution;
      for (std::size_t i = 0; i < 8; ++i) tokens.push_back(static_cast<std::int64_t>(i % 7));
      targets = tokens;
    }
    auto model = std::make_unique<Model<double>>(spec);
    // check away from the tiny training init so no gradient sits at the
    // relative-error noise floor
    Rng rng(0xBEEFULL);
    for (Param<double>* p : model->params()) {
      const bool gain = p->name().ends_with(".g");
      for (std::size_t i = 0; i < p->value().size(); ++i)
        p->value().data()[i] = (gain ? 1.0 : 0.0) + rng.trunc_normal(gain ? 0.2 : 0.4);
    }
    auto f = [&]() {
      return name == "vit_micro"
                 ? cross_entropy_loss(model->forward(img), targets)
                 : cross_entropy_loss(model->forward_tokens(tokens, 2), targets);
    };
    return finite_diff_check(f, model->params());
  }
  throw Error("gradcheck: unknown operator '" + name + "'");
}

}  // namespace

double gradcheck_operator(const std::string& name) { return run_op(name); }

std::vector<std::string> gradcheck_operator_names() {
  return {"matmul",        "softmax",
          "layernorm",     "cross_entropy",
          "gelu",          "self_attention",
          "self_attention_causal", "conv2d",
          "translution2d", "translution1d",
          "translution1d_causal",  "alpha",
          "alpha_efficient",       "alpha_noshared",
          "absolute_pairs",        "rel_key",
          "rel_value",     "rel_scalar",
          "gated",         "rotary",
          "vit_micro",     "gpt_micro"};
}

}  // namespace translution
