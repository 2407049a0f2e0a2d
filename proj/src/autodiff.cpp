#include "translution/autodiff.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <unordered_set>

namespace translution {

namespace detail {

std::uint64_t next_node_seq() {
  thread_local std::uint64_t counter = 0;
  return ++counter;
}

bool& grad_enabled_flag() {
  thread_local bool enabled = true;
  return enabled;
}

int next_param_id() {
  static std::atomic<int> counter{0};
  return counter.fetch_add(1);
}

}  // namespace detail

template <typename T>
GradTable<T> backward(const Tensor<T>& loss, std::span<Param<T>* const> params) {
  if (loss.size() != 1) throw Error("backward: loss must be scalar, got shape " + loss.shape_str());

  GradTable<T> table;
  if (loss.node) {
    // Collect reachable nodes and replay them in reverse creation order.
    std::vector<Node<T>*> order;
    std::unordered_set<const Node<T>*> seen;
    std::vector<Node<T>*> stack{loss.node.get()};
    seen.insert(loss.node.get());
    while (!stack.empty()) {
      Node<T>* n = stack.back();
      stack.pop_back();
      order.push_back(n);
      for (const Tensor<T>& p : n->parents) {
        if (p.node && !seen.count(p.node.get())) {
          seen.insert(p.node.get());
          stack.push_back(p.node.get());
        }
      }
    }
    std::sort(order.begin(), order.end(),
              [](const Node<T>* a, const Node<T>* b) { return a->seq > b->seq; });

    GradSink<T> sink;
    Tensor<T> seed = Tensor<T>::full(loss.shape(), T(1));
    {
      Tensor<T> tagged = loss;  // key the seed under the loss node
      sink.add(tagged, seed);
    }

    for (Node<T>* n : order) {
      Tensor<T>* g = sink.find(n);
      if (!g) continue;  // not reached by the loss
      if (n->param_id >= 0) {
        auto it = table.by_param.find(n->param_id);
        if (it == table.by_param.end()) {
          table.by_param.emplace(n->param_id, g->clone());
        } else {
          T* a = it->second.data();
          const T* gp = g->data();
          for (std::size_t i = 0; i < it->second.size(); ++i) a[i] += gp[i];
        }
      }
      if (n->backward) n->backward(*g, sink);
      sink.erase(n);
    }
  }

  for (Param<T>* p : params) {
    if (!table.by_param.count(p->id()))
      table.by_param.emplace(p->id(), Tensor<T>::zeros(p->value().shape()));
  }
  return table;
}

template GradTable<float> backward<float>(const Tensor<float>&, std::span<Param<float>* const>);
template GradTable<double> backward<double>(const Tensor<double>&, std::span<Param<double>* const>);

double finite_diff_check(const std::function<Tensor<double>()>& f,
                         const std::vector<Param<double>*>& params, double eps) {
  Tensor<double> loss = f();
  GradTable<double> table = backward(loss, params);

  double worst = 0.0;
  for (Param<double>* p : params) {
    const Tensor<double>& g_ad = table.at(*p);
    double* v = p->value().data();
    for (std::size_t i = 0; i < p->value().size(); ++i) {
      const double saved = v[i];
      v[i] = saved + eps;
      double up;
      {
        NoGradGuard ng;
        up = f().item();
      }
      v[i] = saved - eps;
      double down;
      {
        NoGradGuard ng;
        down = f().item();
      }
      v[i] = saved;
      const double g_fd = (up - down) / (2.0 * eps);
      const double rel = std::abs(g_ad.data()[i] - g_fd) / (std::abs(g_fd) + 1e-8);
      if (rel > worst) worst = rel;
    }
  }
  return worst;
}

}  // namespace translution
