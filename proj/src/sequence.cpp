#include "translution/sequence.hpp"

namespace translution {

namespace {

template <typename T>
void check_bank1d(const char* op, const OffsetBank1D<T>& bank, bool causal, std::size_t c) {
  if (bank.causal && !causal) throw Error("causal bank supplied to non-causal call");
  if (!bank.causal && causal) throw Error("non-causal bank supplied to causal call");
  const std::size_t expected = causal ? bank.n_max : 2 * bank.n_max - 1;
  if (bank.mats.rank() != 3 || bank.mats.extent(0) != expected)
    throw ShapeError(std::string(op) + ": bank extent " +
                     (bank.mats.rank() == 3 ? std::to_string(bank.mats.extent(0)) : bank.mats.shape_str()) +
                     " does not match n_max " + std::to_string(bank.n_max));
  if (bank.mats.extent(1) != c)
    throw ShapeError(std::string(op) + ": bank input dim " + std::to_string(bank.mats.extent(1)) +
                     " vs features " + std::to_string(c));
}

}  // namespace

template <typename T>
Tensor<T> translution1d(const Tensor<T>& f, const OffsetBank1D<T>& q, const OffsetBank1D<T>& k,
                        const OffsetBank1D<T>& v, std::size_t heads, bool causal,
                        std::size_t batch) {
  if (f.rank() != 2 || batch == 0 || f.extent(0) % batch != 0)
    throw ShapeError("translution1d: f must be [B*N, C]");
  const std::size_t n = f.extent(0) / batch;
  check_bank1d("translution1d", q, causal, f.extent(1));
  check_bank1d("translution1d", k, causal, f.extent(1));
  check_bank1d("translution1d", v, causal, f.extent(1));
  if (n > q.n_max)
    throw Error("translution1d: sequence length " + std::to_string(n) + " exceeds bank n_max " +
                std::to_string(q.n_max));
  const PairTables tables = seq_pair_tables(n, q.n_max, causal);
  return translution_pairwise(f, q.mats, k.mats, v.mats, tables, batch, heads);
}

template Tensor<float> translution1d<float>(const Tensor<float>&, const OffsetBank1D<float>&,
                                            const OffsetBank1D<float>&, const OffsetBank1D<float>&,
                                            std::size_t, bool, std::size_t);
template Tensor<double> translution1d<double>(const Tensor<double>&, const OffsetBank1D<double>&,
                                              const OffsetBank1D<double>&,
                                              const OffsetBank1D<double>&, std::size_t, bool,
                                              std::size_t);

}  // namespace translution
