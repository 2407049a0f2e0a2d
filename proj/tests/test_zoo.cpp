#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "test_util.hpp"
#include "translution/encoding_zoo.hpp"

using namespace translution;
using testutil::ParamPack;
using testutil::randn;

namespace {

template <typename T>
ProjectionSet<T> random_proj(std::size_t c, std::size_t cp, std::uint64_t seed) {
  ProjectionSet<T> p;
  p.wq = randn<T>({c, cp}, seed);
  p.wk = randn<T>({c, cp}, seed + 1);
  p.wv = randn<T>({c, cp}, seed + 2);
  return p;
}

}  // namespace

TEST_CASE("relative key vector: zero table reduces exactly, oracle agrees") {
  Grid2D grid{2, 3, false};
  ProjectionSet<double> p = random_proj<double>(4, 6, 1);
  Tensor<double> f = randn<double>({6, 4}, 2);

  RelVectorTable<double> zero{Tensor<double>::zeros({grid.offset_count(), 6})};
  Tensor<double> got = attn_relative_key_vector(f, p, zero, grid, 2);
  Tensor<double> want = self_attention(f, p, 2, false);
  for (std::size_t i = 0; i < got.size(); ++i) CHECK(got.data()[i] == want.data()[i]);

  // zero queries annihilate the additive key term: uniform attention
  ProjectionSet<double> pz = p;
  pz.wq = Tensor<double>::zeros({4, 6});
  RelVectorTable<double> r{randn<double>({grid.offset_count(), 6}, 3)};
  Tensor<double> u = attn_relative_key_vector(f, pz, r, grid, 2);
  Tensor<double> pv = matmul(f, p.wv);
  for (std::size_t t = 0; t < 6; ++t) {
    double mean = 0;
    for (std::size_t j = 0; j < 6; ++j) mean += pv.data()[j * 6 + t];
    mean /= 6;
    for (std::size_t i = 0; i < 6; ++i) CHECK(u.data()[i * 6 + t] == doctest::Approx(mean).epsilon(1e-12));
  }

  Tensor<double> got_r = attn_relative_key_vector(f, p, r, grid, 2);
  Tensor<double> want_r = oracle::rel_key_vector(f, p.wq, p.wk, p.wv, r.r, 2, 3, 2);
  auto rep = oracle::assert_close(got_r, want_r, 1e-10);
  CHECK_MESSAGE(rep.pass(), rep.message);
}

TEST_CASE("relative value vector: zero table reduces exactly, oracle agrees") {
  Grid2D grid{2, 2, false};
  ProjectionSet<double> p = random_proj<double>(3, 4, 10);
  Tensor<double> f = randn<double>({4, 3}, 11);

  RelVectorTable<double> zero{Tensor<double>::zeros({grid.offset_count(), 4})};
  Tensor<double> got = attn_relative_value_vector(f, p, zero, grid, 2);
  Tensor<double> want = self_attention(f, p, 2, false);
  for (std::size_t i = 0; i < got.size(); ++i) CHECK(got.data()[i] == want.data()[i]);

  // zero features: output is the alpha-weighted positional vector under
  // uniform attention
  RelVectorTable<double> r{randn<double>({grid.offset_count(), 4}, 12)};
  Tensor<double> fz = Tensor<double>::zeros({4, 3});
  Tensor<double> outz = attn_relative_value_vector(fz, p, r, grid, 1);
  const PairTables tables = grid_pair_tables(grid);
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t t = 0; t < 4; ++t) {
      double mean = 0;
      for (std::size_t j = 0; j < 4; ++j)
        mean += r.r.data()[tables.q_index[i * 4 + j] * 4 + t];
      mean /= 4;
      CHECK(outz.data()[i * 4 + t] == doctest::Approx(mean).epsilon(1e-12));
    }

  Tensor<double> got_r = attn_relative_value_vector(f, p, r, grid, 2);
  Tensor<double> want_r = oracle::rel_value_vector(f, p.wq, p.wk, p.wv, r.r, 2, 2, 2);
  auto rep = oracle::assert_close(got_r, want_r, 1e-10);
  CHECK_MESSAGE(rep.pass(), rep.message);
}

TEST_CASE("relative scalar bias: zero reduces exactly, dominating bias, oracle") {
  Grid2D grid{2, 2, false};
  ProjectionSet<double> p = random_proj<double>(3, 4, 20);
  Tensor<double> f = randn<double>({4, 3}, 21);

  RelScalarTable<double> zero{Tensor<double>::zeros({grid.offset_count()})};
  Tensor<double> got = attn_relative_scalar_bias(f, p, zero, grid, 2);
  Tensor<double> want = self_attention(f, p, 2, false);
  for (std::size_t i = 0; i < got.size(); ++i) CHECK(got.data()[i] == want.data()[i]);

  // huge bias at the zero offset with zero q/k pins attention to the diagonal
  ProjectionSet<double> pz = p;
  pz.wq = Tensor<double>::zeros({3, 4});
  pz.wk = Tensor<double>::zeros({3, 4});
  RelScalarTable<double> spike{Tensor<double>::zeros({grid.offset_count()})};
  spike.b.data()[offset_index2d({0, 0}, 2, 2)] = 1e4;
  Tensor<double> pinned = attn_relative_scalar_bias(f, pz, spike, grid, 1);
  Tensor<double> pv = matmul(f, p.wv);
  auto rep_pin = oracle::assert_close(pinned, pv, 1e-9);
  CHECK_MESSAGE(rep_pin.pass(), rep_pin.message);

  RelScalarTable<double> b{randn<double>({grid.offset_count()}, 22)};
  Tensor<double> got_b = attn_relative_scalar_bias(f, p, b, grid, 2);
  Tensor<double> want_b = oracle::rel_scalar_bias(f, p.wq, p.wk, p.wv, b.b, 2, 2, 2);
  auto rep = oracle::assert_close(got_b, want_b, 1e-10);
  CHECK_MESSAGE(rep.pass(), rep.message);
}

TEST_CASE("gated positional attention") {
  Grid2D grid{2, 3, false};
  ProjectionSet<double> p = random_proj<double>(4, 6, 30);
  Tensor<double> f = randn<double>({6, 4}, 31);
  const DistanceBuckets dist = distance_buckets(grid);
  GateState<double> gate{randn<double>({2}, 32), randn<double>({5}, 33),
                         randn<double>({dist.count, 5}, 34)};

  // closed gate (sigma = 0): content attention only, up to the prescribed
  // renormalization
  GateState<double> closed = gate;
  closed.lambda = Tensor<double>::full({2}, -1e30);
  Tensor<double> got = attn_gated_positional(f, p, closed, grid, 2);
  Tensor<double> want = self_attention(f, p, 2, false);
  auto rep_closed = oracle::assert_close(got, want, 1e-14);
  CHECK_MESSAGE(rep_closed.pass(), rep_closed.message);

  // open gate (sigma = 1): output independent of Wq/Wk
  GateState<double> open = gate;
  open.lambda = Tensor<double>::full({2}, 1e30);
  Tensor<double> out1 = attn_gated_positional(f, p, open, grid, 2);
  ProjectionSet<double> p2 = p;
  p2.wq = randn<double>({4, 6}, 35);
  p2.wk = randn<double>({4, 6}, 36);
  Tensor<double> out2 = attn_gated_positional(f, p2, open, grid, 2);
  auto rep_open = oracle::assert_close(out1, out2, 0.0);
  CHECK_MESSAGE(rep_open.pass(), rep_open.message);

  Tensor<double> got_g = attn_gated_positional(f, p, gate, grid, 2);
  Tensor<double> want_g =
      oracle::gated_positional(f, p.wq, p.wk, p.wv, gate.lambda, gate.w, gate.r_norm, 2, 3, 2);
  auto rep = oracle::assert_close(got_g, want_g, 1e-10);
  CHECK_MESSAGE(rep.pass(), rep.message);
}

TEST_CASE("gated mixing rows sum to one") {
  Grid2D grid{2, 2, false};
  ProjectionSet<double> p = random_proj<double>(3, 4, 40);
  Tensor<double> f = randn<double>({4, 3}, 41);
  const DistanceBuckets dist = distance_buckets(grid);
  GateState<double> gate{randn<double>({2}, 42), randn<double>({3}, 43),
                         randn<double>({dist.count, 3}, 44)};
  // re-run the pipeline up to xi by hand through the primitives
  Tensor<double> q = matmul(f, p.wq), k = matmul(f, p.wk);
  Tensor<double> alpha = softmax_rows(attn_logits(q, k, 1, 4, 2, 0.5, false));
  Tensor<double> bvec = reshape(matmul(gate.r_norm, reshape(gate.w, {3, 1})), {dist.count});
  Tensor<double> beta = softmax_rows(pairbias_logits(bvec, dist.tables, 1, 2));
  Tensor<double> xi = row_normalize(gate_mix(alpha, beta, gate.lambda, 1, 4, 2));
  for (std::size_t r = 0; r < 8; ++r) {
    double sum = 0;
    for (std::size_t j = 0; j < 4; ++j) sum += xi.data()[r * 4 + j];
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-6));
  }
}

TEST_CASE("rotary attention") {
  Grid2D grid{2, 2, false};
  ProjectionSet<double> p = random_proj<double>(3, 8, 50);
  Tensor<double> f = randn<double>({4, 3}, 51);

  // position zero leaves vectors untouched
  Tensor<double> q = matmul(f, p.wq);
  std::vector<std::int32_t> zeros4(4, 0);
  Tensor<double> rot0 = rotary_rotate(q, zeros4, zeros4, 1, 2);
  for (std::size_t i = 0; i < q.size(); ++i) CHECK(rot0.data()[i] == q.data()[i]);

  // rotations preserve norms
  std::vector<std::int32_t> xp{0, 1, 2, 3}, yp{3, 1, 0, 2};
  Tensor<double> rot = rotary_rotate(q, xp, yp, 1, 2);
  for (std::size_t i = 0; i < 4; ++i) {
    double n0 = 0, n1 = 0;
    for (std::size_t t = 0; t < 8; ++t) {
      n0 += q.data()[i * 8 + t] * q.data()[i * 8 + t];
      n1 += rot.data()[i * 8 + t] * rot.data()[i * 8 + t];
    }
    CHECK(std::sqrt(n1) == doctest::Approx(std::sqrt(n0)).epsilon(1e-6));
  }

  // rotating by all-zero positions reduces to plain attention bitwise
  Tensor<double> k = matmul(f, p.wk), v = matmul(f, p.wv);
  Tensor<double> q0 = rotary_rotate(q, zeros4, zeros4, 1, 2);
  Tensor<double> k0 = rotary_rotate(k, zeros4, zeros4, 1, 2);
  Tensor<double> a_rot = attn_apply(softmax_rows(attn_logits(q0, k0, 1, 4, 2, 0.5, false)), v, 1, 4, 2);
  Tensor<double> a_plain = attn_apply(softmax_rows(attn_logits(q, k, 1, 4, 2, 0.5, false)), v, 1, 4, 2);
  for (std::size_t i = 0; i < a_rot.size(); ++i) CHECK(a_rot.data()[i] == a_plain.data()[i]);

  Tensor<double> got = attn_rotary(f, p, grid, 2);
  Tensor<double> want = oracle::rotary_attention(f, p.wq, p.wk, p.wv, 2, 2, 2);
  auto rep = oracle::assert_close(got, want, 1e-10);
  CHECK_MESSAGE(rep.pass(), rep.message);

  ProjectionSet<double> podd = random_proj<double>(3, 6, 52);  // head width 3 is odd
  CHECK_THROWS_AS(attn_rotary_seq(f, podd, 4, 2, false), Error);
}

TEST_CASE("rotary logits depend on positions only through the difference") {
  ProjectionSet<double> p = random_proj<double>(3, 8, 60);
  // two sequences whose shared tokens sit at shifted positions
  Tensor<double> fa = randn<double>({6, 3}, 61);
  Tensor<double> q = matmul(fa, p.wq), k = matmul(fa, p.wk);
  std::vector<std::int32_t> pos{0, 1, 2, 3, 4, 5};
  std::vector<std::int32_t> shifted{2, 3, 4, 5, 6, 7};
  Tensor<double> q1 = rotary_rotate(q, pos, {}, 1, 2);
  Tensor<double> k1 = rotary_rotate(k, pos, {}, 1, 2);
  Tensor<double> q2 = rotary_rotate(q, shifted, {}, 1, 2);
  Tensor<double> k2 = rotary_rotate(k, shifted, {}, 1, 2);
  Tensor<double> l1 = attn_logits(q1, k1, 1, 6, 2, 0.5, false);
  Tensor<double> l2 = attn_logits(q2, k2, 1, 6, 2, 0.5, false);
  auto rep = oracle::assert_close(l2, l1, 1e-5);
  CHECK_MESSAGE(rep.pass(), rep.message);

  Tensor<double> seq_got = attn_rotary_seq(fa, p, 6, 2, true);
  Tensor<double> seq_want = oracle::rotary_attention_seq(fa, p.wq, p.wk, p.wv, 2, true);
  CHECK(oracle::assert_close(seq_got, seq_want, 1e-10).pass());
}

TEST_CASE("zoo gradients pass finite differences") {
  Grid2D grid{2, 2, false};
  Tensor<double> f = randn<double>({4, 3}, 70);
  const DistanceBuckets dist = distance_buckets(grid);

  ParamPack<double> pack;
  auto* wq = pack.add("wq", randn<double>({3, 4}, 71, 0.5));
  auto* wk = pack.add("wk", randn<double>({3, 4}, 72, 0.5));
  auto* wv = pack.add("wv", randn<double>({3, 4}, 73, 0.5));
  auto* r = pack.add("r", randn<double>({grid.offset_count(), 4}, 74, 0.5));
  auto* b = pack.add("b", randn<double>({grid.offset_count()}, 75, 0.5));
  auto* lambda = pack.add("lambda", randn<double>({2}, 76, 0.5));
  auto* w = pack.add("w", randn<double>({3}, 77, 0.5));
  auto* rn = pack.add("rn", randn<double>({dist.count, 3}, 78, 0.5));

  auto proj = [&]() {
    ProjectionSet<double> p;
    p.wq = wq->use();
    p.wk = wk->use();
    p.wv = wv->use();
    return p;
  };
  auto loss = [](const Tensor<double>& out) { return sum_all(mul(out, out)); };

  auto f_key = [&]() { return loss(attn_relative_key_vector(f, proj(), {r->use()}, grid, 2)); };
  auto f_val = [&]() { return loss(attn_relative_value_vector(f, proj(), {r->use()}, grid, 2)); };
  auto f_bias = [&]() { return loss(attn_relative_scalar_bias(f, proj(), {b->use()}, grid, 2)); };
  auto f_gate = [&]() {
    GateState<double> g{lambda->use(), w->use(), rn->use()};
    return loss(attn_gated_positional(f, proj(), g, grid, 2));
  };
  auto f_rot = [&]() { return loss(attn_rotary(f, proj(), grid, 1)); };  // d_h = 4 for 2D rotary

  CHECK(finite_diff_check(f_key, pack.all()) < 1e-4);
  CHECK(finite_diff_check(f_val, pack.all()) < 1e-4);
  CHECK(finite_diff_check(f_bias, pack.all()) < 1e-4);
  CHECK(finite_diff_check(f_gate, pack.all()) < 1e-4);
  CHECK(finite_diff_check(f_rot, pack.all()) < 1e-4);
}
