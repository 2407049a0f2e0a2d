#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <numeric>

#include "translution/geometry.hpp"

using namespace translution;

TEST_CASE("displacement2d fundamentals") {
  Grid2D g{3, 3, false};
  CHECK(displacement2d(4, 4, g) == Offset2D{0, 0});
  CHECK(displacement2d(8, 0, g) == Offset2D{2, 2});  // corner pair on 3x3

  Grid2D g4{4, 4, false};
  for (std::size_t i = 0; i < 16; ++i)
    for (std::size_t j = 0; j < 16; ++j)
      CHECK(displacement2d(i, j, g4) == displacement2d(j, i, g4).negate());

  CHECK_THROWS_AS(displacement2d(9, 0, g), Error);
}

TEST_CASE("offset_index2d layout and bijectivity") {
  CHECK(offset_index2d({0, 0}, 3, 3) == 12);  // center of 25
  Grid2D vit16{14, 14, false};
  CHECK(vit16.offset_count() == 729);

  // bijectivity over a 5x4 grid: sorted indices are exactly 0..62
  std::vector<std::size_t> seen;
  for (std::int64_t dx = -4; dx <= 4; ++dx)
    for (std::int64_t dy = -3; dy <= 3; ++dy) seen.push_back(offset_index2d({dx, dy}, 5, 4));
  std::sort(seen.begin(), seen.end());
  for (std::size_t i = 0; i < seen.size(); ++i) CHECK(seen[i] == i);
  CHECK(seen.size() == 63);

  CHECK_THROWS_AS(offset_index2d({5, 0}, 5, 4), Error);
}

TEST_CASE("offset_index2d bijective for every grid up to 8x8") {
  for (std::size_t h = 1; h <= 8; ++h)
    for (std::size_t w = 1; w <= 8; ++w) {
      std::vector<std::size_t> seen;
      for (std::int64_t dx = -(std::int64_t(h) - 1); dx <= std::int64_t(h) - 1; ++dx)
        for (std::int64_t dy = -(std::int64_t(w) - 1); dy <= std::int64_t(w) - 1; ++dy)
          seen.push_back(offset_index2d({dx, dy}, h, w));
      std::sort(seen.begin(), seen.end());
      REQUIRE(seen.size() == (2 * h - 1) * (2 * w - 1));
      for (std::size_t i = 0; i < seen.size(); ++i) REQUIRE(seen[i] == i);
    }
}

TEST_CASE("offset_index1d full and causal") {
  CHECK(offset_index1d(0, 4) == 3);
  // full table spans 2N-1 slots
  std::vector<std::size_t> seen;
  for (std::int64_t d = -3; d <= 3; ++d) seen.push_back(offset_index1d(d, 4));
  std::sort(seen.begin(), seen.end());
  CHECK(seen.size() == 7);
  CHECK(seen.back() == 6);

  // causal table spans N slots
  for (std::int64_t d = 0; d <= 3; ++d) CHECK(offset_index1d_causal(d, 4) == std::size_t(d));
  CHECK_THROWS_WITH_AS(offset_index1d_causal(-1, 4), "masked offset has no value bank entry", Error);
  CHECK_THROWS_AS(offset_index1d(4, 4), Error);
}

TEST_CASE("cls_direction classification and counts") {
  Grid2D g{2, 2, true};
  CHECK(cls_direction(0, 0, g) == ClsDirection::InPlace);
  CHECK(cls_direction(0, 3, g) == ClsDirection::In);
  CHECK(cls_direction(2, 0, g) == ClsDirection::Out);
  CHECK(cls_direction(1, 2, g) == ClsDirection::GridPair);

  const std::size_t n = g.grid_tokens();
  std::size_t in = 0, in_place = 0, out = 0, grid_pair = 0;
  for (std::size_t i = 0; i < n + 1; ++i)
    for (std::size_t j = 0; j < n + 1; ++j) switch (cls_direction(i, j, g)) {
        case ClsDirection::In: ++in; break;
        case ClsDirection::InPlace: ++in_place; break;
        case ClsDirection::Out: ++out; break;
        case ClsDirection::GridPair: ++grid_pair; break;
      }
  CHECK(in_place == 1);
  CHECK(in == n);
  CHECK(out == n);
  CHECK(grid_pair == n * n);

  Grid2D no_cls{2, 2, false};
  CHECK_THROWS_AS(cls_direction(0, 0, no_cls), Error);
}

TEST_CASE("causal mask shape and triangle counts") {
  Tensor<double> m1 = causal_mask<double>(1);
  CHECK(m1.data()[0] == 0.0);

  Tensor<double> m3 = causal_mask<double>(3);
  auto unmasked_in_row = [&](std::size_t i) {
    std::size_t count = 0;
    for (std::size_t j = 0; j < 3; ++j)
      if (m3.data()[i * 3 + j] == 0.0) ++count;
    return count;
  };
  CHECK(unmasked_in_row(0) == 1);
  CHECK(unmasked_in_row(2) == 3);

  // uniform logits under the mask: row i uniform over the first i+1 entries
  Tensor<double> logits = Tensor<double>::zeros({3, 3});
  Tensor<double> alpha = softmax_rows(logits, &m3);
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 3; ++j) {
      const double expect = j <= i ? 1.0 / double(i + 1) : 0.0;
      CHECK(alpha.data()[i * 3 + j] == doctest::Approx(expect).epsilon(1e-12));
    }
}

TEST_CASE("pair tables: grid, cls, sequence, absolute") {
  Grid2D g{2, 2, false};
  PairTables t = grid_pair_tables(g);
  CHECK(t.n == 4);
  // q and k tables are negations of each other: q(i,j) == k(j,i)
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 4; ++j) CHECK(t.q_index[i * 4 + j] == t.k_index[j * 4 + i]);

  Grid2D gc{2, 2, true};
  PairTables tc = grid_pair_tables_with_cls(gc);
  CHECK(tc.n == 5);
  CHECK(tc.q_index[0] == 9 + 1);        // (cls,cls) -> in-place slot
  CHECK(tc.q_index[0 * 5 + 3] == 9);    // (cls,grid) -> in slot
  CHECK(tc.q_index[3 * 5 + 0] == 9 + 2);// (grid,cls) -> out slot

  PairTables seq = seq_pair_tables(4, 4, false);
  CHECK(seq.q_index[0 * 4 + 3] == 0);   // delta -3 -> slot 0
  CHECK(seq.q_index[3 * 4 + 0] == 6);   // delta +3 -> slot 6
  PairTables seq_causal = seq_pair_tables(4, 4, true);
  CHECK(seq_causal.q_index[0 * 4 + 3] == -1);  // masked
  CHECK(seq_causal.q_index[3 * 4 + 0] == 3);

  // shorter sequences index a centered sub-range of the full bank
  PairTables sub = seq_pair_tables(2, 4, false);
  CHECK(sub.q_index[0 * 2 + 1] == 2);  // delta -1 -> slot 2 of 7
  CHECK(sub.q_index[1 * 2 + 0] == 4);

  PairTables abs = absolute_pair_tables(2);
  CHECK(abs.q_index[0 * 2 + 1] == 1);
  CHECK(abs.k_index[0 * 2 + 1] == 2);  // pair (j,i) slot
}
