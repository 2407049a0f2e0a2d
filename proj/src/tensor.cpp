#include "translution/tensor.hpp"

namespace translution::detail {

std::vector<std::shared_ptr<MeterState>>& meter_stack() {
  thread_local std::vector<std::shared_ptr<MeterState>> stack;
  return stack;
}

}  // namespace translution::detail
