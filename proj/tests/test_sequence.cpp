#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "test_util.hpp"
#include "translution/attention.hpp"
#include "translution/sequence.hpp"

using namespace translution;
using testutil::ParamPack;
using testutil::randn;

namespace {

OffsetBank1D<double> bank1d(std::size_t n_max, bool causal, std::size_t c, std::size_t cp,
                            BankRole role, std::uint64_t seed) {
  const std::size_t k = causal ? n_max : 2 * n_max - 1;
  return OffsetBank1D<double>{randn<double>({k, c, cp}, seed), causal, n_max, role};
}

}  // namespace

TEST_CASE("translution1d single token") {
  OffsetBank1D<double> q = bank1d(1, false, 3, 4, BankRole::Query, 1);
  OffsetBank1D<double> k = bank1d(1, false, 3, 4, BankRole::Key, 2);
  OffsetBank1D<double> v = bank1d(1, false, 3, 4, BankRole::Value, 3);
  Tensor<double> f = randn<double>({1, 3}, 4);
  Tensor<double> out = translution1d(f, q, k, v, 1, false);
  Tensor<double> m({3, 4});
  std::copy(v.mats.data(), v.mats.data() + 12, m.data());
  CHECK(oracle::assert_close(out, matmul(f, m), 0.0).pass());
}

TEST_CASE("causal first position attends only to itself") {
  OffsetBank1D<double> q = bank1d(5, true, 3, 4, BankRole::Query, 10);
  OffsetBank1D<double> k = bank1d(5, true, 3, 4, BankRole::Key, 11);
  OffsetBank1D<double> v = bank1d(5, true, 3, 4, BankRole::Value, 12);
  Tensor<double> f = randn<double>({5, 3}, 13);
  Tensor<double> out = translution1d(f, q, k, v, 1, true);
  Tensor<double> m({3, 4});
  std::copy(v.mats.data(), v.mats.data() + 12, m.data());  // slot 0 = delta 0
  Tensor<double> f0 = slice_rows(f, 0, 1);
  Tensor<double> want = matmul(f0, m);
  for (std::size_t t = 0; t < 4; ++t) CHECK(out.data()[t] == want.data()[t]);
}

TEST_CASE("translution1d matches the oracle, full and causal") {
  for (bool causal : {false, true}) {
    for (std::size_t heads : {std::size_t(1), std::size_t(2)}) {
      OffsetBank1D<double> q = bank1d(5, causal, 4, 6, BankRole::Query, 20 + heads);
      OffsetBank1D<double> k = bank1d(5, causal, 4, 6, BankRole::Key, 30 + heads);
      OffsetBank1D<double> v = bank1d(5, causal, 4, 6, BankRole::Value, 40 + heads);
      Tensor<double> f = randn<double>({5, 4}, 50 + heads);
      Tensor<double> got = translution1d(f, q, k, v, heads, causal);
      Tensor<double> want = oracle::translution1d(f, q.mats, k.mats, v.mats, 5, causal, heads);
      auto rep = oracle::assert_close(got, want, 1e-10);
      CHECK_MESSAGE(rep.pass(), rep.message);
    }
  }
}

TEST_CASE("causal outputs ignore future perturbations exactly") {
  OffsetBank1D<double> q = bank1d(6, true, 3, 4, BankRole::Query, 60);
  OffsetBank1D<double> k = bank1d(6, true, 3, 4, BankRole::Key, 61);
  OffsetBank1D<double> v = bank1d(6, true, 3, 4, BankRole::Value, 62);
  Tensor<double> f = randn<double>({6, 3}, 63);
  Tensor<double> base = translution1d(f, q, k, v, 2, true);
  Tensor<double> pert = f.clone();
  for (std::size_t t = 0; t < 3; ++t) pert.data()[4 * 3 + t] += 2.5;
  Tensor<double> out = translution1d(pert, q, k, v, 2, true);
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t t = 0; t < 4; ++t) CHECK(out.data()[i * 4 + t] == base.data()[i * 4 + t]);
}

TEST_CASE("causal banks are half-plus-center of full banks") {
  for (std::size_t n = 1; n <= 64; ++n) {
    const std::size_t full = 2 * n - 1;
    const std::size_t causal = n;
    CHECK(full == 2 * causal - 1);
    // constructing with the wrong extent is rejected
    if (n > 1) {
      OffsetBank1D<double> wrong{Tensor<double>({causal, 2, 2}), false, n, BankRole::Query};
      OffsetBank1D<double> k = bank1d(n, false, 2, 2, BankRole::Key, n);
      OffsetBank1D<double> v = bank1d(n, false, 2, 2, BankRole::Value, n + 1);
      Tensor<double> f = randn<double>({n, 2}, n + 2);
      CHECK_THROWS_AS(translution1d(f, wrong, k, v, 1, false), ShapeError);
    }
  }
}

TEST_CASE("bank variant mismatches raise") {
  OffsetBank1D<double> causal_bank = bank1d(4, true, 3, 4, BankRole::Query, 70);
  OffsetBank1D<double> full_bank = bank1d(4, false, 3, 4, BankRole::Key, 71);
  OffsetBank1D<double> full_v = bank1d(4, false, 3, 4, BankRole::Value, 72);
  Tensor<double> f = randn<double>({4, 3}, 73);
  CHECK_THROWS_WITH_AS(translution1d(f, causal_bank, full_bank, full_v, 1, false),
                       "causal bank supplied to non-causal call", Error);
  OffsetBank1D<double> full_q = bank1d(4, false, 3, 4, BankRole::Query, 74);
  OffsetBank1D<double> causal_k = bank1d(4, true, 3, 4, BankRole::Key, 75);
  CHECK_THROWS_WITH_AS(translution1d(f, full_q, causal_k, full_v, 1, true),
                       "non-causal bank supplied to causal call", Error);
}

TEST_CASE("short sequences use the centered sub-range of a larger bank") {
  OffsetBank1D<double> q = bank1d(8, false, 3, 4, BankRole::Query, 80);
  OffsetBank1D<double> k = bank1d(8, false, 3, 4, BankRole::Key, 81);
  OffsetBank1D<double> v = bank1d(8, false, 3, 4, BankRole::Value, 82);
  Tensor<double> f = randn<double>({3, 3}, 83);
  Tensor<double> got = translution1d(f, q, k, v, 1, false);
  Tensor<double> want = oracle::translution1d(f, q.mats, k.mats, v.mats, 8, false, 1);
  CHECK(oracle::assert_close(got, want, 1e-12).pass());
}

TEST_CASE("logit shift property for equal features and offsets") {
  OffsetBank1D<double> q = bank1d(6, false, 3, 4, BankRole::Query, 90);
  OffsetBank1D<double> k = bank1d(6, false, 3, 4, BankRole::Key, 91);
  Tensor<double> f = randn<double>({6, 3}, 92);
  for (std::size_t t = 0; t < 3; ++t) {
    f.data()[3 * 3 + t] = f.data()[1 * 3 + t];
    f.data()[4 * 3 + t] = f.data()[2 * 3 + t];
  }
  // pairs (1,2) and (3,4) share features and delta
  const PairTables tables = seq_pair_tables(6, 6, false);
  Tensor<double> pq = bank_project(f, q.mats);
  Tensor<double> pk = bank_project(f, k.mats);
  Tensor<double> logits = pair_logits(pq, pk, tables, 1, 1, 0.5);
  CHECK(logits.data()[1 * 6 + 2] == logits.data()[3 * 6 + 4]);
}

TEST_CASE("full translution1d with tied banks equals one-head self-attention") {
  Tensor<double> wq = randn<double>({3, 4}, 100);
  Tensor<double> wk = randn<double>({3, 4}, 101);
  Tensor<double> wv = randn<double>({3, 4}, 102);
  auto tied = [&](const Tensor<double>& m, BankRole role) {
    OffsetBank1D<double> bank{Tensor<double>({9, 3, 4}), false, 5, role};
    for (std::size_t s = 0; s < 9; ++s)
      std::copy(m.data(), m.data() + 12, bank.mats.data() + s * 12);
    return bank;
  };
  Tensor<double> f = randn<double>({5, 3}, 103);
  Tensor<double> got = translution1d(f, tied(wq, BankRole::Query), tied(wk, BankRole::Key),
                                     tied(wv, BankRole::Value), 1, false);
  ProjectionSet<double> p;
  p.wq = wq;
  p.wk = wk;
  p.wv = wv;
  Tensor<double> want = self_attention(f, p, 1, false);
  for (std::size_t i = 0; i < got.size(); ++i) CHECK(got.data()[i] == want.data()[i]);
}

TEST_CASE("translution1d gradients pass finite differences") {
  for (bool causal : {false, true}) {
    ParamPack<double> pack;
    const std::size_t k = causal ? 4 : 7;
    auto* qm = pack.add("q", randn<double>({k, 3, 4}, 110, 0.5));
    auto* km = pack.add("k", randn<double>({k, 3, 4}, 111, 0.5));
    auto* vm = pack.add("v", randn<double>({k, 3, 4}, 112, 0.5));
    Tensor<double> f = randn<double>({4, 3}, 113);
    auto fn = [&]() {
      OffsetBank1D<double> q{qm->use(), causal, 4, BankRole::Query};
      OffsetBank1D<double> k2{km->use(), causal, 4, BankRole::Key};
      OffsetBank1D<double> v{vm->use(), causal, 4, BankRole::Value};
      Tensor<double> out = translution1d(f, q, k2, v, 2, causal);
      return sum_all(mul(out, out));
    };
    CHECK(finite_diff_check(fn, pack.all()) < 1e-4);
  }
}
