#include "translution/model.hpp"

#include <json.hpp>

#include <cmath>
#include <fstream>
#include <sstream>

#include "translution/checkpoint.hpp"
#include "translution/rng.hpp"

namespace translution {

using nlohmann::json;

namespace {

constexpr std::size_t kGateEmbedDim = 16;
constexpr double kInitStd = 0.02;

// zoo tables over [CLS; grid]: grid pairs carry their offset slot, CLS pairs
// carry -1 so positional terms skip them
PairTables zoo_tables_with_cls(const Grid2D& grid) {
  const PairTables base = grid_pair_tables(Grid2D{grid.height, grid.width, false});
  const std::size_t ng = grid.grid_tokens();
  const std::size_t n = ng + 1;
  PairTables t;
  t.n = n;
  t.q_index.assign(n * n, -1);
  t.k_index.assign(n * n, -1);
  for (std::size_t i = 0; i < ng; ++i)
    for (std::size_t j = 0; j < ng; ++j) {
      t.q_index[(i + 1) * n + (j + 1)] = base.q_index[i * ng + j];
      t.k_index[(i + 1) * n + (j + 1)] = base.k_index[i * ng + j];
    }
  return t;
}

DistanceBuckets dist_with_cls(const Grid2D& grid) {
  DistanceBuckets base = distance_buckets(Grid2D{grid.height, grid.width, false});
  const std::size_t ng = grid.grid_tokens();
  const std::size_t n = ng + 1;
  DistanceBuckets out;
  out.count = base.count;
  out.tables.n = n;
  out.tables.q_index.assign(n * n, -1);
  out.tables.k_index.assign(n * n, -1);
  for (std::size_t i = 0; i < ng; ++i)
    for (std::size_t j = 0; j < ng; ++j) {
      out.tables.q_index[(i + 1) * n + (j + 1)] = base.tables.q_index[i * ng + j];
      out.tables.k_index[(i + 1) * n + (j + 1)] = base.tables.k_index[i * ng + j];
    }
  return out;
}

// translution tables where CLS pairs fall back to the (0,0) offset slot
PairTables cls_as_center_tables(const Grid2D& grid) {
  PairTables t = grid_pair_tables_with_cls(grid);
  const std::int32_t center =
      static_cast<std::int32_t>(offset_index2d({0, 0}, grid.height, grid.width));
  const std::int32_t base = static_cast<std::int32_t>(grid.offset_count());
  for (std::int32_t& v : t.q_index)
    if (v >= base) v = center;
  for (std::int32_t& v : t.k_index)
    if (v >= base) v = center;
  return t;
}

}  // namespace

std::string variant_name(VariantKind v) {
  switch (v) {
    case VariantKind::SelfAttention: return "self_attention";
    case VariantKind::Translution: return "translution";
    case VariantKind::AlphaTranslution: return "alpha_translution";
    case VariantKind::TranslutionAbsolute: return "translution_absolute";
    case VariantKind::RelKeyVector: return "rel_key_vector";
    case VariantKind::RelValueVector: return "rel_value_vector";
    case VariantKind::RelScalarBias: return "rel_scalar_bias";
    case VariantKind::GatedPositional: return "gated_positional";
    case VariantKind::Rotary: return "rotary";
  }
  throw Error("variant_name: bad tag");
}

VariantKind variant_from_name(const std::string& name) {
  for (VariantKind v :
       {VariantKind::SelfAttention, VariantKind::Translution, VariantKind::AlphaTranslution,
        VariantKind::TranslutionAbsolute, VariantKind::RelKeyVector, VariantKind::RelValueVector,
        VariantKind::RelScalarBias, VariantKind::GatedPositional, VariantKind::Rotary})
    if (variant_name(v) == name) return v;
  throw Error("unknown attention variant '" + name + "'");
}

ArchConfig arch_preset(const std::string& name) {
  if (name == "A") return {6, 192, 3, 768};
  if (name == "B") return {12, 192, 3, 768};
  if (name == "C") return {12, 384, 6, 1536};
  throw Error("unknown architecture preset '" + name + "'");
}

std::size_t ModelSpec::tokens() const {
  if (task == "classify") return grid_side() * grid_side() + 1;
  return seq_len;
}

void ModelSpec::validate() const {
  if (task != "classify" && task != "lm") throw Error("task must be 'classify' or 'lm'");
  if (arch.depth == 0 || arch.embed_dim == 0 || arch.heads == 0 || arch.mlp_dim == 0)
    throw Error("architecture dims must be positive");
  if (arch.embed_dim % arch.heads != 0)
    throw Error("embed_dim " + std::to_string(arch.embed_dim) + " not divisible by " +
                std::to_string(arch.heads) + " heads");
  if (task == "classify") {
    if (canvas == 0 || patch == 0) throw Error("classify task needs canvas and patch");
    if (canvas % patch != 0)
      throw Error("canvas " + std::to_string(canvas) + " not divisible by patch " +
                  std::to_string(patch));
    if (channels == 0 || classes == 0) throw Error("channels and classes must be positive");
  } else {
    if (vocab == 0 || seq_len == 0) throw Error("lm task needs vocab and seq_len");
    if (variant == VariantKind::TranslutionAbsolute)
      throw Error("variant '" + variant_name(variant) + "' has no causal form");
  }
  if (variant == VariantKind::Rotary) {
    const std::size_t dh = arch.embed_dim / arch.heads;
    if (task == "classify" ? (dh % 4 != 0) : (dh % 2 != 0))
      throw Error("rotary variant needs head width divisible by " +
                  std::string(task == "classify" ? "4" : "2"));
  }
  if (variant == VariantKind::AlphaTranslution && !flags.use_shared && (c1 == 0 || c2 == 0))
    throw Error("degenerate operator has no parameters");
}

std::string ModelSpec::to_json() const {
  json j;
  if (arch_name == "custom") {
    j["arch"] = {{"depth", arch.depth},
                 {"embed_dim", arch.embed_dim},
                 {"heads", arch.heads},
                 {"mlp_dim", arch.mlp_dim}};
  } else {
    j["arch"] = arch_name;
  }
  j["task"] = task;
  j["canvas"] = canvas;
  j["patch"] = patch;
  j["channels"] = channels;
  j["classes"] = classes;
  j["vocab"] = vocab;
  j["seq_len"] = seq_len;
  j["variant"] = variant_name(variant);
  j["flags"] = {{"use_shared", flags.use_shared},
                {"input_pos_embed", flags.input_pos_embed},
                {"cls_relative", flags.cls_relative},
                {"tied_init", flags.tied_init}};
  j["c1"] = c1;
  j["c2"] = c2;
  j["seed"] = seed;
  return j.dump(2);
}

ModelSpec ModelSpec::from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw Error(std::string("model spec JSON: ") + e.what());
  }
  ModelSpec s;
  if (j.contains("arch")) {
    if (j["arch"].is_string()) {
      s.arch_name = j["arch"].get<std::string>();
      s.arch = arch_preset(s.arch_name);
    } else {
      s.arch_name = "custom";
      const json& a = j["arch"];
      s.arch.depth = a.value("depth", s.arch.depth);
      s.arch.embed_dim = a.value("embed_dim", s.arch.embed_dim);
      s.arch.heads = a.value("heads", s.arch.heads);
      s.arch.mlp_dim = a.value("mlp_dim", s.arch.mlp_dim);
    }
  } else {
    s.arch = arch_preset(s.arch_name);
  }
  s.task = j.value("task", s.task);
  s.canvas = j.value("canvas", s.canvas);
  s.patch = j.value("patch", s.patch);
  s.channels = j.value("channels", s.channels);
  s.classes = j.value("classes", s.classes);
  s.vocab = j.value("vocab", s.vocab);
  s.seq_len = j.value("seq_len", s.seq_len);
  s.variant = variant_from_name(j.value("variant", variant_name(s.variant)));
  s.flags.input_pos_embed = s.variant == VariantKind::SelfAttention;
  if (j.contains("flags")) {
    const json& f = j["flags"];
    s.flags.use_shared = f.value("use_shared", s.flags.use_shared);
    s.flags.input_pos_embed = f.value("input_pos_embed", s.flags.input_pos_embed);
    s.flags.cls_relative = f.value("cls_relative", s.flags.cls_relative);
    s.flags.tied_init = f.value("tied_init", s.flags.tied_init);
  }
  s.c1 = j.value("c1", s.c1);
  s.c2 = j.value("c2", s.c2);
  s.seed = j.value("seed", s.seed);
  s.validate();
  return s;
}

// ---------------------------------------------------------------------------

namespace {

struct VariantDims {
  std::size_t bank_slots = 0;   // offset/pair slots excluding CLS extras
  std::size_t cls_slots = 0;    // CLS slots appended per bank
  std::size_t zoo_slots = 0;    // rows of a relative vector/scalar table
  std::size_t dist_buckets = 0;
};

VariantDims variant_dims(const ModelSpec& spec) {
  VariantDims d;
  const bool classify = spec.task == "classify";
  if (classify) {
    const Grid2D g{spec.grid_side(), spec.grid_side(), false};
    d.bank_slots = g.offset_count();
    d.cls_slots = spec.flags.cls_relative ? 3 : 0;
    d.zoo_slots = g.offset_count();
    d.dist_buckets = distance_buckets(g).count;
    if (spec.variant == VariantKind::TranslutionAbsolute) {
      d.bank_slots = spec.tokens() * spec.tokens();
      d.cls_slots = 0;
    }
  } else {
    d.bank_slots = spec.seq_len;  // causal banks
    d.cls_slots = 0;
    d.zoo_slots = 2 * spec.seq_len - 1;
    d.dist_buckets = spec.seq_len;
  }
  return d;
}

}  // namespace

ParamCount count_params(const ModelSpec& spec) {
  spec.validate();
  const ArchConfig& a = spec.arch;
  const long long c = static_cast<long long>(a.embed_dim);
  const long long cp = c;
  const long long n_tok = static_cast<long long>(spec.tokens());
  const VariantDims vd = variant_dims(spec);
  const long long d1 = static_cast<long long>(spec.c1 * a.heads);
  const long long d2 = static_cast<long long>(spec.c2 * a.heads);

  ParamCount out;
  if (spec.task == "classify") {
    out.embed = static_cast<long long>(spec.patch * spec.patch * spec.channels) * c + c;  // + bias
    out.embed += c;  // CLS token
    out.head = c * static_cast<long long>(spec.classes) + static_cast<long long>(spec.classes);
  } else {
    out.embed = static_cast<long long>(spec.vocab) * c;
    out.head = c * static_cast<long long>(spec.vocab);  // untied, no bias
  }
  if (spec.flags.input_pos_embed) out.pos_table = n_tok * c;

  long long attn = 0, cls = 0;
  const long long shared_qkv = 3 * c * cp + 2 * cp;  // q and v biases; no key bias
  switch (spec.variant) {
    case VariantKind::SelfAttention:
      attn = shared_qkv;
      break;
    case VariantKind::Translution:
    case VariantKind::TranslutionAbsolute:
      attn = 3 * static_cast<long long>(vd.bank_slots) * c * cp;
      cls = 3 * static_cast<long long>(vd.cls_slots) * c * cp;
      break;
    case VariantKind::AlphaTranslution:
      attn = (spec.flags.use_shared ? shared_qkv : 0) + 3 * c * d1 +
             3 * static_cast<long long>(vd.bank_slots) * d1 * d2 + d2 * cp;
      cls = 3 * static_cast<long long>(vd.cls_slots) * d1 * d2;
      break;
    case VariantKind::RelKeyVector:
    case VariantKind::RelValueVector:
      attn = shared_qkv + static_cast<long long>(vd.zoo_slots) * cp;
      break;
    case VariantKind::RelScalarBias:
      attn = shared_qkv + static_cast<long long>(vd.zoo_slots);
      break;
    case VariantKind::GatedPositional:
      attn = shared_qkv + static_cast<long long>(a.heads) + kGateEmbedDim +
             static_cast<long long>(vd.dist_buckets) * kGateEmbedDim;
      break;
    case VariantKind::Rotary:
      attn = shared_qkv;
      break;
  }
  const long long depth = static_cast<long long>(a.depth);
  out.attention = depth * attn;
  out.cls_weights = depth * cls;
  out.head += depth * (cp * c + c);  // per-block output projection
  out.mlp = depth * (c * static_cast<long long>(a.mlp_dim) + static_cast<long long>(a.mlp_dim) +
                     static_cast<long long>(a.mlp_dim) * c + c);
  out.norms = depth * 4 * c + 2 * c;  // two norms per block plus the final one
  out.total = out.embed + out.pos_table + out.attention + out.cls_weights + out.mlp + out.norms +
              out.head;
  return out;
}

std::string ParamCount::to_json() const {
  json j{{"embed", embed},     {"pos_table", pos_table}, {"attention", attention},
         {"cls_weights", cls_weights}, {"mlp", mlp},     {"norms", norms},
         {"head", head},       {"total", total}};
  return j.dump(2);
}

std::string ParamCount::to_text() const {
  std::ostringstream os;
  auto line = [&](const char* label, long long v) {
    os << label;
    for (std::size_t i = std::string(label).size(); i < 14; ++i) os << ' ';
    os << v << "\n";
  };
  line("embed", embed);
  line("pos_table", pos_table);
  line("attention", attention);
  line("cls_weights", cls_weights);
  line("mlp", mlp);
  line("norms", norms);
  line("head", head);
  line("total", total);
  return os.str();
}

// ---------------------------------------------------------------------------

template <typename T>
Param<T>* Model<T>::add_param(const std::string& name, std::vector<std::size_t> shape) {
  storage_.push_back(std::make_unique<Param<T>>(name, Tensor<T>::zeros(std::move(shape))));
  Param<T>* p = storage_.back().get();
  order_.push_back(p);
  by_name_[name] = p;
  return p;
}

template <typename T>
Model<T>::Model(const ModelSpec& spec) : spec_(spec) {
  spec_.validate();
  const ArchConfig& a = spec_.arch;
  const std::size_t c = a.embed_dim;
  const VariantDims vd = variant_dims(spec_);
  const std::size_t d1 = spec_.c1 * a.heads;
  const std::size_t d2 = spec_.c2 * a.heads;
  const bool classify = spec_.task == "classify";
  const std::size_t n_tok = spec_.tokens();

  if (classify) {
    add_param("patch_embed.w", {spec_.patch * spec_.patch * spec_.channels, c});
    add_param("patch_embed.b", {c});
    add_param("cls", {1, c});
  } else {
    add_param("token_embed", {spec_.vocab, c});
  }
  if (spec_.flags.input_pos_embed) add_param("pos_table", {n_tok, c});

  for (std::size_t l = 0; l < a.depth; ++l) {
    const std::string p = "layer" + std::to_string(l) + ".";
    add_param(p + "ln1.g", {c});
    add_param(p + "ln1.b", {c});
    switch (spec_.variant) {
      case VariantKind::Translution:
      case VariantKind::TranslutionAbsolute:
        add_param(p + "attn.qbank", {vd.bank_slots + vd.cls_slots, c, c});
        add_param(p + "attn.kbank", {vd.bank_slots + vd.cls_slots, c, c});
        add_param(p + "attn.vbank", {vd.bank_slots + vd.cls_slots, c, c});
        break;
      case VariantKind::AlphaTranslution:
        if (spec_.flags.use_shared) {
          add_param(p + "attn.wq", {c, c});
          add_param(p + "attn.bq", {c});
          add_param(p + "attn.wk", {c, c});
          add_param(p + "attn.wv", {c, c});
          add_param(p + "attn.bv", {c});
        }
        if (d1 > 0 && d2 > 0) {
          add_param(p + "attn.wq1", {c, d1});
          add_param(p + "attn.wk1", {c, d1});
          add_param(p + "attn.wv1", {c, d1});
          add_param(p + "attn.qbank", {vd.bank_slots + vd.cls_slots, d1, d2});
          add_param(p + "attn.kbank", {vd.bank_slots + vd.cls_slots, d1, d2});
          add_param(p + "attn.vbank", {vd.bank_slots + vd.cls_slots, d1, d2});
          add_param(p + "attn.wv2", {d2, c});
        }
        break;
      default:
        add_param(p + "attn.wq", {c, c});
        add_param(p + "attn.bq", {c});
        add_param(p + "attn.wk", {c, c});
        add_param(p + "attn.wv", {c, c});
        add_param(p + "attn.bv", {c});
        if (spec_.variant == VariantKind::RelKeyVector ||
            spec_.variant == VariantKind::RelValueVector)
          add_param(p + "attn.rel_vec", {vd.zoo_slots, c});
        if (spec_.variant == VariantKind::RelScalarBias) add_param(p + "attn.rel_bias", {vd.zoo_slots});
        if (spec_.variant == VariantKind::GatedPositional) {
          add_param(p + "attn.gate_lambda", {a.heads});
          add_param(p + "attn.gate_w", {kGateEmbedDim});
          add_param(p + "attn.gate_rnorm", {vd.dist_buckets, kGateEmbedDim});
        }
        break;
    }
    add_param(p + "attn.wo", {c, c});
    add_param(p + "attn.wo_b", {c});
    add_param(p + "ln2.g", {c});
    add_param(p + "ln2.b", {c});
    add_param(p + "mlp.w1", {c, a.mlp_dim});
    add_param(p + "mlp.b1", {a.mlp_dim});
    add_param(p + "mlp.w2", {a.mlp_dim, c});
    add_param(p + "mlp.b2", {c});
  }
  add_param("final_ln.g", {c});
  add_param("final_ln.b", {c});
  if (classify) {
    add_param("head.w", {c, spec_.classes});
    add_param("head.b", {spec_.classes});
  } else {
    add_param("head.w", {c, spec_.vocab});
  }

  // deterministic init in creation order
  Rng rng(spec_.seed ^ 0xA11CE5EEDULL);
  for (Param<T>* prm : order_) {
    const std::string& name = prm->name();
    Tensor<T>& v = prm->value();
    const bool is_gain = name.ends_with("ln1.g") || name.ends_with("ln2.g") ||
                         name.ends_with("final_ln.g");
    const bool is_bias = name.ends_with(".b") || name.ends_with(".b1") || name.ends_with(".b2") ||
                         name.ends_with(".bq") || name.ends_with(".bk") || name.ends_with(".bv") ||
                         name.ends_with(".wo_b") || name.ends_with("gate_lambda") ||
                         name.ends_with("rel_bias");
    if (is_gain) {
      for (std::size_t i = 0; i < v.size(); ++i) v.data()[i] = T(1);
    } else if (is_bias) {
      // zeros (already)
    } else if (spec_.flags.tied_init && v.rank() == 3 && name.find("bank") != std::string::npos) {
      const std::size_t slice = v.extent(1) * v.extent(2);
      for (std::size_t i = 0; i < slice; ++i)
        v.data()[i] = static_cast<T>(rng.trunc_normal(kInitStd));
      for (std::size_t s = 1; s < v.extent(0); ++s)
        std::copy(v.data(), v.data() + slice, v.data() + s * slice);
    } else {
      for (std::size_t i = 0; i < v.size(); ++i)
        v.data()[i] = static_cast<T>(rng.trunc_normal(kInitStd));
    }
  }

  // pair tables for the block token layout
  if (classify) {
    const Grid2D grid = spec_.grid();
    switch (spec_.variant) {
      case VariantKind::Translution:
      case VariantKind::AlphaTranslution:
        tables_ = spec_.flags.cls_relative ? grid_pair_tables_with_cls(grid)
                                           : cls_as_center_tables(grid);
        break;
      case VariantKind::TranslutionAbsolute:
        tables_ = absolute_pair_tables(n_tok);
        break;
      case VariantKind::GatedPositional:
        dist_ = dist_with_cls(grid);
        break;
      case VariantKind::Rotary: {
        rot_x_.assign(n_tok, 0);
        rot_y_.assign(n_tok, 0);
        for (std::size_t t = 1; t < n_tok; ++t) {
          rot_x_[t] = static_cast<std::int32_t>((t - 1) / grid.width);
          rot_y_[t] = static_cast<std::int32_t>((t - 1) % grid.width);
        }
        break;
      }
      default:
        tables_ = zoo_tables_with_cls(grid);
        break;
    }
  } else {
    switch (spec_.variant) {
      case VariantKind::Translution:
      case VariantKind::AlphaTranslution:
        tables_ = seq_pair_tables(n_tok, n_tok, true);
        break;
      case VariantKind::GatedPositional:
        dist_ = distance_buckets_1d(n_tok);
        break;
      case VariantKind::Rotary:
        break;
      default:
        tables_ = seq_pair_tables(n_tok, n_tok, false);
        break;
    }
  }
}

template <typename T>
Param<T>& Model<T>::at(const std::string& name) {
  auto it = by_name_.find(name);
  if (it == by_name_.end()) throw Error("model has no parameter '" + name + "'");
  return *it->second;
}

template <typename T>
const Param<T>& Model<T>::at(const std::string& name) const {
  auto it = by_name_.find(name);
  if (it == by_name_.end()) throw Error("model has no parameter '" + name + "'");
  return *it->second;
}

template <typename T>
std::size_t Model<T>::scalar_count() const {
  std::size_t n = 0;
  for (const Param<T>* p : order_) n += p->value().size();
  return n;
}

template <typename T>
Tensor<T> Model<T>::attention(const Tensor<T>& h, std::size_t layer, std::size_t batch,
                              std::size_t n, bool causal) const {
  const ArchConfig& a = spec_.arch;
  const std::string p = "layer" + std::to_string(layer) + ".";
  const std::size_t heads = a.heads;
  const T scl = T(1) / std::sqrt(T(a.embed_dim / heads));

  auto proj = [&]() {
    ProjectionSet<T> ps;
    ps.wq = at(p + "attn.wq").use();
    ps.bq = at(p + "attn.bq").use();
    ps.wk = at(p + "attn.wk").use();  // no key bias: softmax shift invariance makes it a dead weight
    ps.wv = at(p + "attn.wv").use();
    ps.bv = at(p + "attn.bv").use();
    return ps;
  };

  switch (spec_.variant) {
    case VariantKind::SelfAttention:
      return self_attention(h, proj(), heads, causal, batch);

    case VariantKind::Translution:
    case VariantKind::TranslutionAbsolute:
      return translution_pairwise(h, at(p + "attn.qbank").use(), at(p + "attn.kbank").use(),
                                  at(p + "attn.vbank").use(), tables_, batch, heads);

    case VariantKind::AlphaTranslution: {
      AlphaFactors<T> f;
      if (spec_.flags.use_shared) f.shared = proj();
      if (spec_.c1 > 0 && spec_.c2 > 0) {
        f.wq1 = at(p + "attn.wq1").use();
        f.wk1 = at(p + "attn.wk1").use();
        f.wv1 = at(p + "attn.wv1").use();
        f.qbank = at(p + "attn.qbank").use();
        f.kbank = at(p + "attn.kbank").use();
        f.vbank = at(p + "attn.vbank").use();
        f.wv2 = at(p + "attn.wv2").use();
      }
      return alpha_translution_pairwise(h, f, tables_, batch, heads, spec_.flags.use_shared, true);
    }

    case VariantKind::RelKeyVector:
    case VariantKind::RelValueVector:
    case VariantKind::RelScalarBias: {
      ProjectionSet<T> ps = proj();
      Tensor<T> q = project(h, ps.wq, ps.bq);
      Tensor<T> k = project(h, ps.wk, ps.bk);
      Tensor<T> v = project(h, ps.wv, ps.bv);
      Tensor<T> logits = attn_logits(q, k, batch, n, heads, scl, causal);
      if (spec_.variant == VariantKind::RelKeyVector)
        logits = add(logits, relvec_logits(q, at(p + "attn.rel_vec").use(), tables_, batch, heads, scl));
      if (spec_.variant == VariantKind::RelScalarBias)
        logits = add(logits, pairbias_logits(at(p + "attn.rel_bias").use(), tables_, batch, heads));
      Tensor<T> alpha = softmax_rows(logits);
      Tensor<T> out = attn_apply(alpha, v, batch, n, heads);
      if (spec_.variant == VariantKind::RelValueVector)
        out = add(out, relvec_apply(alpha, at(p + "attn.rel_vec").use(), tables_, batch, heads));
      return out;
    }

    case VariantKind::GatedPositional: {
      ProjectionSet<T> ps = proj();
      Tensor<T> q = project(h, ps.wq, ps.bq);
      Tensor<T> k = project(h, ps.wk, ps.bk);
      Tensor<T> v = project(h, ps.wv, ps.bv);
      Tensor<T> alpha = softmax_rows(attn_logits(q, k, batch, n, heads, scl, causal));
      Tensor<T> w = at(p + "attn.gate_w").use();
      Tensor<T> bvec = reshape(matmul(at(p + "attn.gate_rnorm").use(), reshape(w, {w.extent(0), 1})),
                               {dist_.count});
      Tensor<T> blogits = pairbias_logits(bvec, dist_.tables, batch, heads);
      if (causal) {
        Tensor<T> cmask(blogits.shape());
        T* pm = cmask.data();
        const T ninf = -std::numeric_limits<T>::infinity();
        for (std::size_t b = 0; b < batch * heads; ++b)
          for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j) pm[(b * n + i) * n + j] = j > i ? ninf : T(0);
        blogits = add(blogits, cmask);
      }
      Tensor<T> beta = softmax_rows(blogits);
      Tensor<T> mixed = gate_mix(alpha, beta, at(p + "attn.gate_lambda").use(), batch, n, heads);
      return attn_apply(row_normalize(mixed), v, batch, n, heads);
    }

    case VariantKind::Rotary: {
      ProjectionSet<T> ps = proj();
      Tensor<T> q = project(h, ps.wq, ps.bq);
      Tensor<T> k = project(h, ps.wk, ps.bk);
      Tensor<T> v = project(h, ps.wv, ps.bv);
      Tensor<T> qr, kr;
      if (spec_.task == "classify") {
        qr = rotary_rotate(q, rot_x_, rot_y_, batch, heads);
        kr = rotary_rotate(k, rot_x_, rot_y_, batch, heads);
      } else {
        std::vector<std::int32_t> pos(n);
        for (std::size_t t = 0; t < n; ++t) pos[t] = static_cast<std::int32_t>(t);
        qr = rotary_rotate(q, pos, {}, batch, heads);
        kr = rotary_rotate(k, pos, {}, batch, heads);
      }
      Tensor<T> alpha = softmax_rows(attn_logits(qr, kr, batch, n, heads, scl, causal));
      return attn_apply(alpha, v, batch, n, heads);
    }
  }
  throw Error("attention: bad variant tag");
}

template <typename T>
Tensor<T> Model<T>::blocks(Tensor<T> x, std::size_t batch, std::size_t n, bool causal) const {
  const T eps = static_cast<T>(1e-5);
  for (std::size_t l = 0; l < spec_.arch.depth; ++l) {
    const std::string p = "layer" + std::to_string(l) + ".";
    Tensor<T> h = layernorm(x, at(p + "ln1.g").use(), at(p + "ln1.b").use(), eps);
    Tensor<T> attn = attention(h, l, batch, n, causal);
    attn = add_rowvec(matmul(attn, at(p + "attn.wo").use()), at(p + "attn.wo_b").use());
    x = add(x, attn);
    Tensor<T> h2 = layernorm(x, at(p + "ln2.g").use(), at(p + "ln2.b").use(), eps);
    Tensor<T> m = add_rowvec(matmul(h2, at(p + "mlp.w1").use()), at(p + "mlp.b1").use());
    m = gelu(m);
    m = add_rowvec(matmul(m, at(p + "mlp.w2").use()), at(p + "mlp.b2").use());
    x = add(x, m);
  }
  return layernorm(x, at("final_ln.g").use(), at("final_ln.b").use(), eps);
}

template <typename T>
Tensor<T> Model<T>::forward(const Tensor<T>& images) const {
  if (spec_.task != "classify") throw Error("forward: model task is not classify");
  const std::size_t s = spec_.canvas;
  const std::size_t ch = spec_.channels;
  const bool chan_rank = images.rank() == 4;
  if ((ch == 1 && images.rank() != 3 && !chan_rank) || (ch > 1 && !chan_rank) ||
      images.extent(1) != s || images.extent(2) != s || (chan_rank && images.extent(3) != ch))
    throw ShapeError("forward: images must be [B," + std::to_string(s) + "," + std::to_string(s) +
                     (ch > 1 ? ("," + std::to_string(ch)) : "") + "], got " + images.shape_str());
  const std::size_t batch = images.extent(0);
  const std::size_t side = spec_.grid_side();
  const std::size_t pp = spec_.patch;
  const std::size_t ngrid = side * side;
  const std::size_t pdim = pp * pp * ch;

  // flatten patches row-major: [B*ngrid, patch*patch*channels]
  Tensor<T> patches({batch * ngrid, pdim});
  const T* src = images.data();
  T* dst = patches.data();
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t gx = 0; gx < side; ++gx)
      for (std::size_t gy = 0; gy < side; ++gy)
        for (std::size_t px = 0; px < pp; ++px)
          for (std::size_t py = 0; py < pp; ++py)
            for (std::size_t t = 0; t < ch; ++t)
              dst[((b * ngrid + gx * side + gy) * pp + px) * pp * ch + py * ch + t] =
                  src[((b * s + gx * pp + px) * s + gy * pp + py) * ch + t];

  Tensor<T> x = add_rowvec(matmul(patches, at("patch_embed.w").use()), at("patch_embed.b").use());
  x = prepend_row(at("cls").use(), x, batch, ngrid);
  const std::size_t n = ngrid + 1;
  if (spec_.flags.input_pos_embed) {
    PosEmbedTable<T> table{at("pos_table").use()};
    x = absolute_position_embed(x, table, batch);
  }
  x = blocks(x, batch, n, false);
  Tensor<T> cls_h = select_token_rows(x, batch, n, 0);
  return add_rowvec(matmul(cls_h, at("head.w").use()), at("head.b").use());
}

template <typename T>
Tensor<T> Model<T>::forward_tokens(const std::vector<std::int64_t>& tokens,
                                   std::size_t batch) const {
  if (spec_.task != "lm") throw Error("forward_tokens: model task is not lm");
  const std::size_t n = spec_.seq_len;
  if (batch == 0 || tokens.size() != batch * n)
    throw ShapeError("forward_tokens: need batch*seq_len token ids");
  Tensor<T> x = gather_rows(at("token_embed").use(), tokens);
  if (spec_.flags.input_pos_embed) {
    PosEmbedTable<T> table{at("pos_table").use()};
    x = absolute_position_embed(x, table, batch);
  }
  x = blocks(x, batch, n, true);
  return matmul(x, at("head.w").use());
}

// ---------------------------------------------------------------------------

template <typename T>
void save_model(const Model<T>& model, const std::string& path) {
  std::vector<CheckpointEntry> entries;
  for (const Param<T>* p : model.params())
    entries.push_back(CheckpointEntry{p->name(), p->value().clone()});
  write_checkpoint(path, entries);
  std::ofstream spec_out(path + ".spec.json", std::ios::trunc);
  if (!spec_out) throw Error("save_model: cannot write " + path + ".spec.json");
  spec_out << model.spec().to_json() << "\n";
}

template <typename T>
std::unique_ptr<Model<T>> load_model(const std::string& path) {
  std::ifstream spec_in(path + ".spec.json");
  if (!spec_in) throw Error("load_model: missing spec sidecar " + path + ".spec.json");
  std::stringstream ss;
  ss << spec_in.rdbuf();
  ModelSpec spec = ModelSpec::from_json(ss.str());
  auto model = std::make_unique<Model<T>>(spec);

  std::vector<CheckpointEntry> entries = read_checkpoint(path);
  if (entries.size() != model->params().size())
    throw Error("load_model: checkpoint holds " + std::to_string(entries.size()) +
                " tensors, model expects " + std::to_string(model->params().size()));
  for (CheckpointEntry& e : entries) {
    Param<T>& p = model->at(e.name);
    if (!std::holds_alternative<Tensor<T>>(e.tensor))
      throw Error("load_model: dtype mismatch for '" + e.name + "'");
    Tensor<T>& t = std::get<Tensor<T>>(e.tensor);
    if (!t.same_shape(p.value()))
      throw Error("load_model: '" + e.name + "' expected shape " + p.value().shape_str() +
                  ", checkpoint has " + t.shape_str());
    std::copy(t.data(), t.data() + t.size(), p.value().data());
  }
  return model;
}

template class Model<float>;
template class Model<double>;
template void save_model<float>(const Model<float>&, const std::string&);
template void save_model<double>(const Model<double>&, const std::string&);
template std::unique_ptr<Model<float>> load_model<float>(const std::string&);
template std::unique_ptr<Model<double>> load_model<double>(const std::string&);

}  // namespace translution
